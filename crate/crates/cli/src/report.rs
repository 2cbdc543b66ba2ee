use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thermocast::baselines::{
    all_zeros_forecast, ar_fit_closed_form, ar_forecast, last_scene_forecast, ArModel,
};
use thermocast::dataset::{chronological_split, Dataset, Phase, Split, SplitMode};
use thermocast::eval::{
    cumulative_histogram, derive_series, derived_rmse, histogram_match, perturb_time_experiment,
    rmse, DerivedPoint, DerivedRmse, PerturbationResult,
};
use thermocast::pipeline::write_json;
use thermocast::train::TrainingSplit;
use thermocast::{Error, Grid, Result};

use crate::config::{RunConfig, TrainingFilter};
use crate::output::{num, opt_num, relative, write_csv};
use crate::training::{dataset_for, forecasts, load_model, resolve_checkpoints, LoadedModel};

/// The split results are reported on when none is named: validation, or
/// test when training and validation are merged.
pub fn default_split(mode: SplitMode) -> Split {
    match mode {
        SplitMode::Standard => Split::Validation,
        SplitMode::Extended => Split::Test,
    }
}

fn open(cfg: &RunConfig, path: &Path) -> Result<(LoadedModel, Dataset)> {
    let loaded = load_model(path)?;
    if !cfg.model.matches(&loaded.meta.spec) {
        return Err(Error::Data(format!(
            "{} holds a {} {:?} model, but the configuration describes a {} {:?} model",
            path.display(),
            loaded.meta.spec.cell_kind,
            loaded.meta.spec.hidden_dims,
            cfg.model.cell_kind,
            cfg.model.hidden_dims
        )));
    }
    let ds = dataset_for(cfg, &loaded.meta)?;
    Ok((loaded, ds))
}

fn output_name(cfg: &RunConfig, path: &Path) -> String {
    relative(&cfg.output_dir, path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub model: f64,
    pub all_zeros: f64,
    pub last_scene: f64,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub split: Split,
    pub sequences: usize,
    pub pooled: Scores,
    pub per_volcano: BTreeMap<String, Scores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub checkpoint: String,
    pub training_filter: TrainingFilter,
    pub weight_decay: f64,
    pub window: usize,
    /// AR coefficients fit in closed form on the same training data.
    pub ar_coefficients: Option<Vec<f64>>,
    pub splits: Vec<SplitScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub table_split: Split,
    pub volcanoes: Vec<String>,
    pub models: Vec<ModelEvaluation>,
}

#[derive(Default)]
struct Pools {
    model: Vec<Grid>,
    zeros: Vec<Grid>,
    last: Vec<Grid>,
    ar: Vec<Grid>,
    targets: Vec<Grid>,
}

impl Pools {
    fn scores(&self) -> Result<Scores> {
        Ok(Scores {
            model: rmse(&self.model, &self.targets)?,
            all_zeros: rmse(&self.zeros, &self.targets)?,
            last_scene: rmse(&self.last, &self.targets)?,
            ar: if self.ar.is_empty() {
                None
            } else {
                Some(rmse(&self.ar, &self.targets)?)
            },
        })
    }
}

fn score_split(
    loaded: &LoadedModel,
    ds: &Dataset,
    ar: Option<&ArModel>,
    split: Split,
) -> Result<SplitScores> {
    let scaler = ds.scaler();
    let mut pooled = Pools::default();
    let mut by_volcano: BTreeMap<String, Pools> = BTreeMap::new();
    for seq in ds.read_all(split, Phase::Evaluation)? {
        let (h, w) = seq.dims();
        let target = scaler.inverse_grid(&seq.target.grid);
        let model = scaler.inverse_grid(&loaded.model.predict(seq)?);
        let zeros = all_zeros_forecast(h, w);
        let last = scaler.inverse_grid(&last_scene_forecast(seq)?);
        let ar = ar
            .map(|m| Ok::<_, Error>(scaler.inverse_grid(&ar_forecast(m, seq)?)))
            .transpose()?;
        for p in [
            &mut pooled,
            by_volcano.entry(seq.volcano_id.clone()).or_default(),
        ] {
            p.model.push(model.clone());
            p.zeros.push(zeros.clone());
            p.last.push(last.clone());
            p.targets.push(target.clone());
            if let Some(a) = &ar {
                p.ar.push(a.clone());
            }
        }
    }
    Ok(SplitScores {
        split,
        sequences: pooled.targets.len(),
        pooled: pooled.scores()?,
        per_volcano: by_volcano
            .into_iter()
            .map(|(id, p)| Ok((id, p.scores()?)))
            .collect::<Result<_>>()?,
    })
}

fn evaluate_one(cfg: &RunConfig, path: &Path) -> Result<(ModelEvaluation, Vec<String>)> {
    let (loaded, ds) = open(cfg, path)?;
    let window = loaded.meta.spec.window_length;
    let ar = match ar_fit_closed_form(&TrainingSplit(&ds), window) {
        Ok(fit) => Some(fit.model),
        Err(e) => {
            log::warn!("AR({window}) baseline skipped: {e}");
            None
        }
    };
    let splits = Split::ALL
        .into_iter()
        .filter(|&s| ds.len(s) > 0)
        .map(|s| score_split(&loaded, &ds, ar.as_ref(), s))
        .collect::<Result<_>>()?;
    let ids = ds.volcano_ids().into_iter().map(String::from).collect();
    Ok((
        ModelEvaluation {
            checkpoint: output_name(cfg, path),
            training_filter: loaded.meta.training_filter.clone(),
            weight_decay: loaded.meta.spec.weight_decay,
            window,
            ar_coefficients: ar.map(|m| m.coefficients),
            splits,
        },
        ids,
    ))
}

/// Scores each checkpoint and the baselines on every split, pooled and per
/// volcano, and lays out one row per training filter with one column per
/// volcano.
pub fn evaluate(cfg: &RunConfig, checkpoints: &[PathBuf]) -> Result<EvaluationReport> {
    let paths = resolve_checkpoints(cfg, checkpoints)?;
    let table_split = default_split(cfg.split_mode);
    let mut volcanoes: Vec<String> = Vec::new();
    let mut models = Vec::new();
    for p in &paths {
        let (m, ids) = evaluate_one(cfg, p)?;
        if volcanoes.is_empty() {
            volcanoes = ids;
        } else if volcanoes != ids {
            return Err(Error::Data(
                "checkpoints were trained on different corpora".into(),
            ));
        }
        models.push(m);
    }
    let report = EvaluationReport {
        table_split,
        volcanoes,
        models,
    };
    let dir = cfg.output_dir.join("evaluation");
    write_json(&dir.join("evaluation.json"), &report)?;
    let header: Vec<&str> = std::iter::once("training_filter")
        .chain(report.volcanoes.iter().map(String::as_str))
        .collect();
    write_csv(
        &dir.join("table.csv"),
        &header,
        report.models.iter().map(|m| {
            let scores = m.splits.iter().find(|s| s.split == table_split);
            std::iter::once(m.training_filter.label().to_string())
                .chain(
                    report.volcanoes.iter().map(|v| {
                        opt_num(scores.and_then(|s| s.per_volcano.get(v)).map(|s| s.model))
                    }),
                )
                .collect::<Vec<_>>()
        }),
    )?;
    Ok(report)
}

/// Which of the three series a derived point belongs to.
const SERIES: [&str; 3] = ["observed", "predicted", "matched"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveSummary {
    pub checkpoint: String,
    pub split: Split,
    /// Pooled over every volcano's forecasts.
    pub rmse_raw: DerivedRmse,
    pub rmse_matched: DerivedRmse,
    pub per_volcano_raw: BTreeMap<String, DerivedRmse>,
    pub per_volcano_matched: BTreeMap<String, DerivedRmse>,
    /// Largest pixel value of each population, °C.
    pub maxima: BTreeMap<String, f64>,
}

type Metric = (&'static str, fn(&DerivedPoint) -> f64);

const METRICS: [Metric; 3] = [
    ("max_excess_temp", |p| p.max_excess_temp),
    ("hotspot_count", |p| p.hotspot_count as f64),
    ("max_hotspot_distance", |p| p.max_hotspot_distance),
];

/// Training-split pixels (°C) of the volcanoes a model was trained on.
fn reference_population(ds: &Dataset) -> Vec<f64> {
    let filter = ds.training_filter();
    ds.volcanoes()
        .iter()
        .filter(|v| filter.is_none_or(|id| id == v.volcano_id))
        .flat_map(|v| chronological_split(&v.scenes, ds.options().split_mode).train)
        .flat_map(|s| s.grid.data().to_vec())
        .collect()
}

fn label_dir(cfg: &RunConfig, kind: &str, filter: &TrainingFilter, split: Split) -> PathBuf {
    cfg.output_dir
        .join(kind)
        .join(format!("{}-{}", filter.label(), split.name()))
}

/// Writes the three monitoring series of observed, forecast and
/// histogram-matched forecast scenes, their RMSEs and cumulative pixel
/// histograms.
pub fn derive(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    split: Option<Split>,
) -> Result<DeriveSummary> {
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => resolve_checkpoints(cfg, &[])?.swap_remove(0),
    };
    let (loaded, ds) = open(cfg, &path)?;
    let split = split.unwrap_or_else(|| default_split(loaded.meta.split_mode));
    if ds.len(split) == 0 {
        return Err(Error::Data(format!("the {split} split holds no sequences")));
    }
    let reference = reference_population(&ds);
    let mut by_volcano: BTreeMap<String, [Vec<(NaiveDate, Grid)>; 3]> = BTreeMap::new();
    for f in forecasts(&loaded.model, &ds, split)? {
        let matched = histogram_match(&f.pred, &reference)?;
        let e = by_volcano.entry(f.volcano_id).or_default();
        e[0].push((f.date, f.target));
        e[1].push((f.date, f.pred));
        e[2].push((f.date, matched));
    }

    let dir = label_dir(cfg, "derive", &loaded.meta.training_filter, split);
    let mut all: [Vec<DerivedPoint>; 3] = Default::default();
    let mut per_volcano_raw = BTreeMap::new();
    let mut per_volcano_matched = BTreeMap::new();
    for (id, scenes) in &by_volcano {
        let series: Vec<Vec<DerivedPoint>> = scenes
            .iter()
            .map(|s| derive_series(s.iter().map(|(d, g)| (*d, g)), &cfg.derive))
            .collect();
        for (name, f) in METRICS {
            write_csv(
                &dir.join(format!("{id}-{name}.csv")),
                &["date", "observed", "predicted", "matched"],
                (0..series[0].len()).map(|i| {
                    vec![
                        series[0][i].date.to_string(),
                        num(f(&series[0][i])),
                        num(f(&series[1][i])),
                        num(f(&series[2][i])),
                    ]
                }),
            )?;
        }
        per_volcano_raw.insert(id.clone(), derived_rmse(&series[1], &series[0])?);
        per_volcano_matched.insert(id.clone(), derived_rmse(&series[2], &series[0])?);
        for (acc, s) in all.iter_mut().zip(series) {
            acc.extend(s);
        }
    }

    let mut maxima = BTreeMap::new();
    for (k, name) in SERIES.iter().enumerate() {
        let pixels: Vec<f64> = by_volcano
            .values()
            .flat_map(|s| s[k].iter().flat_map(|(_, g)| g.data().iter().copied()))
            .collect();
        let h = cumulative_histogram(&pixels, cfg.histogram_bins)?;
        write_csv(
            &dir.join(format!("histogram-{name}.csv")),
            &["bin_edge", "cumulative_count"],
            h.edges
                .iter()
                .zip(&h.counts)
                .map(|(e, c)| vec![num(*e), c.to_string()]),
        )?;
        maxima.insert(name.to_string(), h.max);
    }
    let summary = DeriveSummary {
        checkpoint: output_name(cfg, &path),
        split,
        rmse_raw: derived_rmse(&all[1], &all[0])?,
        rmse_matched: derived_rmse(&all[2], &all[0])?,
        per_volcano_raw,
        per_volcano_matched,
        maxima,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTable {
    pub checkpoint: String,
    pub split: Split,
    pub sequences: usize,
    pub identity: PerturbationResult,
    pub rows: Vec<PerturbationResult>,
}

/// Re-forecasts with rescaled elapsed times and tabulates the change.
pub fn perturb(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    split: Option<Split>,
) -> Result<PerturbationTable> {
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => resolve_checkpoints(cfg, &[])?.swap_remove(0),
    };
    let (loaded, ds) = open(cfg, &path)?;
    let split = split.unwrap_or_else(|| default_split(loaded.meta.split_mode));
    let seqs = ds.read_all(split, Phase::Evaluation)?;
    let (identity, rows) = perturb_time_experiment(&loaded.model, &seqs, &ds.scaler())?;
    let table = PerturbationTable {
        checkpoint: output_name(cfg, &path),
        split,
        sequences: seqs.len(),
        identity,
        rows,
    };
    let dir = label_dir(cfg, "perturb", &loaded.meta.training_filter, split);
    write_json(&dir.join("perturbation.json"), &table)?;
    write_csv(
        &dir.join("perturbation.csv"),
        &["adjustment", "mean_diff", "rmse_vs_original"],
        std::iter::once(&table.identity)
            .chain(&table.rows)
            .map(|r| vec![r.label.clone(), num(r.mean_diff), num(r.rmse_vs_original)]),
    )?;
    Ok(table)
}
