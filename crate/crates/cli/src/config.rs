use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermocast::cells::{CellKind, ModelSpec};
use thermocast::dataset::{DatasetOptions, SplitMode, WindowPolicy};
use thermocast::eval::DeriveOptions;
use thermocast::pipeline::read_json;
use thermocast::{Error, Result};

/// Architecture of the neural forecaster. Window length and weight decay
/// are filled in by the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub cell_kind: CellKind,
    pub hidden_dims: Vec<usize>,
    pub kernel_size: usize,
    pub unet: bool,
    pub dt_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let spec = ModelSpec::new(CellKind::ConvTimeLstm, vec![8, 8], 1);
        ModelConfig {
            cell_kind: spec.cell_kind,
            hidden_dims: spec.hidden_dims,
            kernel_size: spec.kernel_size,
            unet: spec.unet,
            dt_scale: spec.dt_scale,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, window_length: usize, weight_decay: f64) -> ModelSpec {
        ModelSpec {
            cell_kind: self.cell_kind,
            hidden_dims: self.hidden_dims.clone(),
            kernel_size: self.kernel_size,
            unet: self.unet,
            window_length,
            weight_decay,
            dt_scale: self.dt_scale,
        }
    }

    /// Whether `spec` describes this architecture.
    pub fn matches(&self, spec: &ModelSpec) -> bool {
        spec.cell_kind == self.cell_kind
            && spec.hidden_dims == self.hidden_dims
            && spec.kernel_size == self.kernel_size
            && spec.unet == self.unet
            && spec.dt_scale == self.dt_scale
    }
}

/// Which volcanoes a model is trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TrainingFilter {
    All,
    Volcano(String),
}

impl TrainingFilter {
    pub fn label(&self) -> &str {
        match self {
            TrainingFilter::All => "all",
            TrainingFilter::Volcano(id) => id,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::InvalidArgument("empty training filter".into())),
            "all" => Ok(TrainingFilter::All),
            id => Ok(TrainingFilter::Volcano(id.to_string())),
        }
    }
}

impl From<TrainingFilter> for String {
    fn from(f: TrainingFilter) -> String {
        f.label().to_string()
    }
}

impl TryFrom<String> for TrainingFilter {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        TrainingFilter::parse(&s)
    }
}

/// Everything that determines a run. Loaded from one JSON file; command-line
/// flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of raw scene manifests.
    pub manifest_dir: PathBuf,
    /// Directory all derived artifacts are written under.
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Regularization strengths every model is fit with.
    pub weight_decays: Vec<f64>,
    pub split_mode: SplitMode,
    pub window: WindowPolicy,
    /// Per-pixel time maps carry only the scene gap, ignoring fill age.
    pub uniform_maps: bool,
    /// One set of models is trained per filter.
    pub training_filters: Vec<TrainingFilter>,
    pub seed: u64,
    pub histogram_bins: usize,
    pub derive: DeriveOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dataset = DatasetOptions::default();
        RunConfig {
            manifest_dir: PathBuf::from("data/raw"),
            output_dir: PathBuf::from("out"),
            model: ModelConfig::default(),
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decays: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            split_mode: dataset.split_mode,
            window: dataset.window,
            uniform_maps: dataset.uniform_maps,
            training_filters: vec![TrainingFilter::All],
            seed: 0,
            histogram_bins: 50,
            derive: DeriveOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.weight_decays.is_empty() {
            return bad("the weight decay sweep needs at least one strength".into());
        }
        if let Some(w) = self
            .weight_decays
            .iter()
            .find(|w| !(**w >= 0.0 && w.is_finite()))
        {
            return bad(format!("weight decay must be finite and >= 0, got {w}"));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.training_filters.is_empty() {
            return bad("at least one training filter is needed".into());
        }
        if self.histogram_bins == 0 {
            return bad("histogram bins must be at least 1".into());
        }
        if matches!(self.window, WindowPolicy::Fixed(0)) {
            return bad("window length must be at least 1".into());
        }
        self.model.spec(1, 0.0).validate()
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            split_mode: self.split_mode,
            window: self.window,
            uniform_maps: self.uniform_maps,
        }
    }

    /// Window policy for a model restricted to one volcano: a pooled
    /// choice becomes that volcano's own selection.
    pub fn window_for(&self, filter: &TrainingFilter) -> WindowPolicy {
        match (filter, self.window) {
            (TrainingFilter::Volcano(_), WindowPolicy::Pooled) => WindowPolicy::PerVolcano,
            (_, w) => w,
        }
    }
}
