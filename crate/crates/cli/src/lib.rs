//! Command-line orchestration of the forecasting experiments: synthetic
//! data, preprocessing, dataset building, weight-decay sweeps, evaluation
//! against baselines, monitoring series and elapsed-time perturbation.

pub mod config;
pub mod output;
pub mod prepare;
pub mod report;
pub mod store;
pub mod training;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thermocast::cells::CellKind;
use thermocast::dataset::{Split, SplitMode, SynthConfig, WindowPolicy};
use thermocast::{Error, ErrorClass, Result};

pub use config::{ModelConfig, RunConfig, TrainingFilter};

#[derive(Debug, Parser)]
#[command(
    name = "thermocast",
    version,
    about = "Forecast volcanic thermal imagery from irregularly spaced scenes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Flags that override fields of the run configuration.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; unspecified fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seeds initialisation, shuffling and the synthetic corpus
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training filter: `all` or a volcano id. Repeat for several.
    #[arg(long = "volcano", global = true)]
    pub training_filters: Vec<String>,
    /// `70/15/15` or `85/15`.
    #[arg(long, global = true)]
    pub split_mode: Option<String>,
    /// Training epochs per sweep strength
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Sweep strengths, comma separated or repeated.
    #[arg(long = "weight-decay", global = true, value_delimiter = ',')]
    pub weight_decays: Vec<f64>,
    /// Cell kind, e.g. `conv-time-lstm`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Hidden channels per layer, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub hidden_dims: Vec<usize>,
    /// A fixed window length, `pooled` or `per-volcano`.
    #[arg(long, global = true)]
    pub window: Option<String>,
    /// Directory holding volcano manifests and raw rasters
    #[arg(long, global = true)]
    pub manifest_dir: Option<PathBuf>,
    /// Root of every generated artefact
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus of raw scenes and manifests.
    Synthesize(SynthArgs),
    /// Fill, background-correct and gap-fill every raw scene.
    Preprocess,
    /// Split the processed scenes and choose window lengths.
    BuildDataset,
    /// Fit the model at every sweep strength and keep the best.
    Train,
    /// Score checkpoints and baselines per split and per volcano.
    Evaluate(CheckpointArgs),
    /// Write monitoring series and cumulative histograms.
    Derive(CheckpointArgs),
    /// Rerun forecasts with rescaled elapsed times.
    Perturb(CheckpointArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub volcanoes: usize,
    #[arg(long, default_value_t = 60)]
    pub scenes: usize,
    #[arg(long, default_value_t = 24)]
    pub height: usize,
    #[arg(long, default_value_t = 24)]
    pub width: usize,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    /// Checkpoint file; repeat for several. Defaults to the selected
    /// checkpoint of each training filter.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// `train`, `validation` or `test`.
    #[arg(long)]
    pub split: Option<String>,
}

fn parse_window(s: &str) -> Result<WindowPolicy> {
    match s {
        "pooled" => Ok(WindowPolicy::Pooled),
        "per-volcano" => Ok(WindowPolicy::PerVolcano),
        n => n
            .parse()
            .map(WindowPolicy::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("bad window {s:?}"))),
    }
}

impl Overrides {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if !self.training_filters.is_empty() {
            c.training_filters = self
                .training_filters
                .iter()
                .map(|v| TrainingFilter::parse(v))
                .collect::<Result<_>>()?;
        }
        if let Some(m) = &self.split_mode {
            c.split_mode = m.parse::<SplitMode>()?;
        }
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        if !self.weight_decays.is_empty() {
            c.weight_decays = self.weight_decays.clone();
        }
        if let Some(m) = &self.model {
            c.model.cell_kind = m.parse::<CellKind>()?;
        }
        if !self.hidden_dims.is_empty() {
            c.model.hidden_dims = self.hidden_dims.clone();
        }
        if let Some(w) = &self.window {
            c.window = parse_window(w)?;
        }
        if let Some(d) = &self.manifest_dir {
            c.manifest_dir = d.clone();
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_split(s: &Option<String>) -> Result<Option<Split>> {
    s.as_deref().map(str::parse).transpose()
}

fn single(args: &CheckpointArgs) -> Result<Option<&std::path::Path>> {
    match args.checkpoints.as_slice() {
        [] => Ok(None),
        [p] => Ok(Some(p)),
        _ => Err(Error::InvalidArgument(
            "this command takes one checkpoint".into(),
        )),
    }
}

/// Runs one command to completion.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match &cli.command {
        Command::Synthesize(a) => prepare::synthesize(
            &cfg,
            &SynthConfig {
                seed: cfg.seed,
                volcanoes: a.volcanoes,
                scenes: a.scenes,
                height: a.height,
                width: a.width,
                ..SynthConfig::default()
            },
        ),
        Command::Preprocess => prepare::preprocess(&cfg).map(drop),
        Command::BuildDataset => prepare::build_dataset(&cfg).map(drop),
        Command::Train => training::train(&cfg).map(drop),
        Command::Evaluate(a) => {
            if a.split.is_some() {
                return Err(Error::InvalidArgument(
                    "evaluate scores every split; --split does not apply".into(),
                ));
            }
            report::evaluate(&cfg, &a.checkpoints).map(drop)
        }
        Command::Derive(a) => report::derive(&cfg, single(a)?, parse_split(&a.split)?).map(drop),
        Command::Perturb(a) => report::perturb(&cfg, single(a)?, parse_split(&a.split)?).map(drop),
    }
}

/// Process exit status for an error: 1 usage, 2 data, 3 numerical.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}
