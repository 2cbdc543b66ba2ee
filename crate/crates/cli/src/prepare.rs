use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thermocast::dataset::{
    chronological_split, synthesize_corpus, write_corpus, Dataset, DatasetOptions,
    ProcessedVolcano, Split, SynthConfig, WindowSelection,
};
use thermocast::pipeline::{
    find_manifests, preprocess_volcano, write_json, Manifest, PipelineReport, ScalerParams,
};
use thermocast::{Error, Result};

use crate::config::{RunConfig, TrainingFilter};
use crate::store;

pub fn processed_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("processed")
}

pub fn dataset_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("dataset")
}

/// Writes a synthetic corpus into the manifest directory.
pub fn synthesize(cfg: &RunConfig, synth: &SynthConfig) -> Result<()> {
    let corpus = synthesize_corpus(synth)?;
    write_corpus(&cfg.manifest_dir, &corpus)?;
    log::info!(
        "wrote {} synthetic volcanoes to {}",
        corpus.len(),
        cfg.manifest_dir.display()
    );
    Ok(())
}

/// Runs the preprocessing pipeline over every manifest and writes the
/// processed store, per-volcano reports and the training-split scaler.
pub fn preprocess(cfg: &RunConfig) -> Result<Vec<PipelineReport>> {
    let manifests = find_manifests(&cfg.manifest_dir)?;
    if manifests.is_empty() {
        return Err(Error::Data(format!(
            "no manifests found in {}",
            cfg.manifest_dir.display()
        )));
    }
    let root = processed_dir(cfg);
    store::create_dir(&root)?;
    let mut ids = Vec::new();
    let mut reports = Vec::new();
    let mut volcanoes = Vec::new();
    for path in &manifests {
        let manifest = Manifest::load(path)?;
        let raw = manifest.load_scenes(&cfg.manifest_dir)?;
        let (scenes, report) = preprocess_volcano(&manifest.volcano_id, &raw)?;
        log::info!(
            "{}: {} scenes kept, {} excluded",
            manifest.volcano_id,
            scenes.len(),
            report.excluded
        );
        if ids.contains(&manifest.volcano_id) {
            return Err(Error::Data(format!(
                "volcano {} listed twice",
                manifest.volcano_id
            )));
        }
        let volcano = ProcessedVolcano {
            volcano_id: manifest.volcano_id.clone(),
            scenes,
        };
        store::write_volcano(&root, &volcano)?;
        write_json(&store::report_path(&root, &volcano.volcano_id), &report)?;
        ids.push(manifest.volcano_id);
        reports.push(report);
        volcanoes.push(volcano);
    }
    store::write_index(&root, &ids)?;
    let train: Vec<_> = volcanoes
        .iter()
        .flat_map(|v| chronological_split(&v.scenes, cfg.split_mode).train)
        .collect();
    let scaler = ScalerParams::fit(train.iter().map(|s| &s.grid))?;
    write_json(&root.join("scaler.json"), &scaler)?;
    Ok(reports)
}

/// Builds the dataset for one training filter from the processed store.
pub fn load_dataset(cfg: &RunConfig, filter: &TrainingFilter) -> Result<Dataset> {
    let volcanoes = store::read_store(&processed_dir(cfg))?;
    match filter {
        TrainingFilter::All => Dataset::build(volcanoes, cfg.dataset_options()),
        TrainingFilter::Volcano(id) => {
            let opts = DatasetOptions {
                window: cfg.window_for(filter),
                ..cfg.dataset_options()
            };
            Dataset::build_for_volcano(volcanoes, opts, id)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub training_filter: TrainingFilter,
    pub window: usize,
    pub selections: Vec<(String, WindowSelection)>,
    pub scaler: ScalerParams,
    /// Sequences per split: train, validation, test.
    pub sequences: [usize; 3],
}

/// Builds the dataset for every configured training filter and records
/// the split assignment, window choice and scaler of each.
pub fn build_dataset(cfg: &RunConfig) -> Result<Vec<DatasetSummary>> {
    let dir = dataset_dir(cfg);
    let mut summaries = Vec::new();
    for filter in &cfg.training_filters {
        let ds = load_dataset(cfg, filter)?;
        if summaries.is_empty() {
            write_json(&dir.join("splits.json"), &ds.split_records())?;
        }
        summaries.push(DatasetSummary {
            training_filter: filter.clone(),
            window: ds.window(),
            selections: ds.window_selections().to_vec(),
            scaler: ds.scaler(),
            sequences: Split::ALL.map(|s| ds.len(s)),
        });
    }
    write_json(&dir.join("summary.json"), &summaries)?;
    Ok(summaries)
}
