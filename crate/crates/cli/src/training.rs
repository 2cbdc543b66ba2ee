use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thermocast::cells::{Forecaster, ModelSpec};
use thermocast::dataset::{AccessReport, Dataset, Phase, Split, SplitMode, WindowPolicy};
use thermocast::eval::rmse;
use thermocast::ndauto::{load_checkpoint, save_checkpoint, AdamConfig};
use thermocast::pipeline::{read_json, write_json, ScalerParams};
use thermocast::train::{train as fit, TrainConfig, TrainingSplit};
use thermocast::{Error, Grid, Result};

use crate::config::{RunConfig, TrainingFilter};
use crate::output::{num, opt_num, relative, write_csv};
use crate::prepare::load_dataset;
use crate::store::create_dir;

/// Self-description stored in every checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub scaler: ScalerParams,
    pub training_filter: TrainingFilter,
    pub split_mode: SplitMode,
    pub uniform_maps: bool,
    pub seed: u64,
}

/// A trained model with the data settings it was fit under.
pub struct LoadedModel {
    pub meta: CheckpointMeta,
    pub model: Forecaster,
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let (header, params) = load_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_value(header).map_err(|e| Error::Json {
        context: format!("checkpoint header of {}", path.display()),
        source: e,
    })?;
    let model = Forecaster::from_parts(meta.spec.clone(), params)?;
    Ok(LoadedModel { meta, model })
}

/// Rebuilds the dataset a checkpoint was trained on and checks that it
/// still matches: same window length and the same fitted scaler.
pub fn dataset_for(cfg: &RunConfig, meta: &CheckpointMeta) -> Result<Dataset> {
    let mut c = cfg.clone();
    c.split_mode = meta.split_mode;
    c.uniform_maps = meta.uniform_maps;
    c.window = WindowPolicy::Fixed(meta.spec.window_length);
    let ds = load_dataset(&c, &meta.training_filter)?;
    if ds.scaler() != meta.scaler {
        return Err(Error::Data(format!(
            "checkpoint scaler {:?} does not match the processed data ({:?}); \
             the scenes changed since training",
            meta.scaler,
            ds.scaler()
        )));
    }
    Ok(ds)
}

/// One scored forecast, in °C.
pub struct Forecast {
    pub volcano_id: String,
    pub date: NaiveDate,
    pub pred: Grid,
    pub target: Grid,
}

/// Forecasts and targets of every sequence of `split`.
pub fn forecasts(model: &Forecaster, ds: &Dataset, split: Split) -> Result<Vec<Forecast>> {
    let scaler = ds.scaler();
    ds.read_all(split, Phase::Evaluation)?
        .into_iter()
        .map(|seq| {
            Ok(Forecast {
                volcano_id: seq.volcano_id.clone(),
                date: seq.target.date,
                pred: scaler.inverse_grid(&model.predict(seq)?),
                target: scaler.inverse_grid(&seq.target.grid),
            })
        })
        .collect()
}

fn split_rmse(model: &Forecaster, ds: &Dataset, split: Split) -> Result<Option<f64>> {
    if ds.len(split) == 0 {
        return Ok(None);
    }
    let (preds, targets): (Vec<Grid>, Vec<Grid>) = forecasts(model, ds, split)?
        .into_iter()
        .map(|f| (f.pred, f.target))
        .unzip();
    rmse(&preds, &targets).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub weight_decay: f64,
    pub epochs_completed: usize,
    /// Mean training loss of the last completed epoch, scaled units.
    pub final_train_loss: Option<f64>,
    /// Pooled validation RMSE, °C.
    pub validation_rmse: Option<f64>,
    pub diverged: Option<String>,
    /// Relative to the output directory; absent for diverged runs.
    pub checkpoint: Option<String>,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub training_filter: TrainingFilter,
    pub spec: ModelSpec,
    pub rows: Vec<SweepRow>,
    /// Index of the selected row.
    pub best: Option<usize>,
    /// What was read while computing gradients and while scoring.
    pub access: AccessReport,
}

/// Filter label to selected checkpoint, relative to the output directory.
pub type BestCheckpoints = BTreeMap<String, String>;

pub fn runs_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("runs")
}

pub fn best_path(cfg: &RunConfig) -> PathBuf {
    runs_dir(cfg).join("best.json")
}

/// Picks the row with the lowest validation RMSE. Without a validation
/// split (85/15 mode) the lowest final training loss decides.
fn select(rows: &[SweepRow]) -> Option<usize> {
    let key = |r: &SweepRow| r.validation_rmse.or(r.final_train_loss);
    let has_validation = rows.iter().any(|r| r.validation_rmse.is_some());
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.diverged.is_none() && r.checkpoint.is_some())
        .filter(|(_, r)| !has_validation || r.validation_rmse.is_some())
        .filter_map(|(i, r)| key(r).map(|k| (i, k)))
        .fold(None, |best: Option<(usize, f64)>, (i, k)| match best {
            Some((_, b)) if b <= k => best,
            _ => Some((i, k)),
        })
        .map(|(i, _)| i)
}

fn train_filter(cfg: &RunConfig, filter: &TrainingFilter) -> Result<SweepTable> {
    let ds = load_dataset(cfg, filter)?;
    let window = ds.window();
    let dir = runs_dir(cfg).join(filter.label());
    create_dir(&dir)?;
    let mut rows = Vec::with_capacity(cfg.weight_decays.len());
    for &wd in &cfg.weight_decays {
        let spec = cfg.model.spec(window, wd);
        let mut model = Forecaster::new(spec.clone(), cfg.seed)?;
        let tc = TrainConfig {
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            adam: AdamConfig {
                learning_rate: cfg.learning_rate,
                weight_decay: wd,
                ..AdamConfig::default()
            },
        };
        let report = fit(&mut model, &TrainingSplit(&ds), &tc)?;
        let mut row = SweepRow {
            weight_decay: wd,
            epochs_completed: report.epoch_losses.len(),
            final_train_loss: report.epoch_losses.last().copied(),
            validation_rmse: None,
            diverged: report.diverged.clone(),
            checkpoint: None,
            epoch_losses: report.epoch_losses,
        };
        if let Some(why) = &report.diverged {
            log::warn!("{} wd={wd}: training aborted, {why}", filter.label());
        } else {
            row.validation_rmse = split_rmse(&model, &ds, Split::Validation)?;
            let path = dir.join(format!("wd-{wd:e}.ckpt"));
            let meta = CheckpointMeta {
                spec,
                scaler: ds.scaler(),
                training_filter: filter.clone(),
                split_mode: cfg.split_mode,
                uniform_maps: cfg.uniform_maps,
                seed: cfg.seed,
            };
            save_checkpoint(&path, &meta, model.params())?;
            row.checkpoint = Some(relative(&cfg.output_dir, &path));
        }
        log::info!(
            "{} wd={wd}: final loss {}, validation rmse {}",
            filter.label(),
            opt_num(row.final_train_loss),
            opt_num(row.validation_rmse)
        );
        rows.push(row);
    }
    let best = select(&rows);
    let table = SweepTable {
        training_filter: filter.clone(),
        spec: cfg.model.spec(window, 0.0),
        best,
        rows,
        access: ds.audit().report(),
    };
    write_sweep(&dir, &table)?;
    Ok(table)
}

fn write_sweep(dir: &Path, table: &SweepTable) -> Result<()> {
    write_json(&dir.join("sweep.json"), table)?;
    write_csv(
        &dir.join("sweep.csv"),
        &[
            "weight_decay",
            "epochs_completed",
            "final_train_loss",
            "validation_rmse",
            "diverged",
            "selected",
        ],
        table.rows.iter().enumerate().map(|(i, r)| {
            vec![
                num(r.weight_decay),
                r.epochs_completed.to_string(),
                opt_num(r.final_train_loss),
                opt_num(r.validation_rmse),
                r.diverged.clone().unwrap_or_default(),
                (table.best == Some(i)).to_string(),
            ]
        }),
    )?;
    let epochs = table
        .rows
        .iter()
        .map(|r| r.epoch_losses.len())
        .max()
        .unwrap_or(0);
    let header: Vec<String> = std::iter::once("epoch".to_string())
        .chain(
            table
                .rows
                .iter()
                .map(|r| format!("wd={}", num(r.weight_decay))),
        )
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("losses.csv"),
        &header,
        (0..epochs).map(|e| {
            std::iter::once((e + 1).to_string())
                .chain(
                    table
                        .rows
                        .iter()
                        .map(|r| opt_num(r.epoch_losses.get(e).copied())),
                )
                .collect::<Vec<_>>()
        }),
    )
}

/// Trains the configured model at every sweep strength for every training
/// filter, then records the selected checkpoint per filter.
pub fn train(cfg: &RunConfig) -> Result<Vec<SweepTable>> {
    let mut best: BestCheckpoints = if best_path(cfg).exists() {
        read_json(&best_path(cfg))?
    } else {
        BTreeMap::new()
    };
    let mut tables = Vec::new();
    for filter in &cfg.training_filters {
        let table = train_filter(cfg, filter)?;
        match table.best {
            Some(i) => {
                let ckpt = table.rows[i]
                    .checkpoint
                    .clone()
                    .expect("selected rows have checkpoints");
                best.insert(filter.label().to_string(), ckpt);
            }
            None => {
                best.remove(filter.label());
                log::warn!("{}: every sweep run diverged", filter.label());
            }
        }
        tables.push(table);
    }
    write_json(&best_path(cfg), &best)?;
    Ok(tables)
}

/// Checkpoints named on the command line, or else the selected checkpoint
/// of each configured training filter.
pub fn resolve_checkpoints(cfg: &RunConfig, explicit: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let path = best_path(cfg);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "no checkpoint given and {} does not exist; run train first",
            path.display()
        )));
    }
    let best: BestCheckpoints = read_json(&path)?;
    cfg.training_filters
        .iter()
        .map(|f| {
            best.get(f.label())
                .map(|rel| cfg.output_dir.join(rel))
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no trained checkpoint for training filter {}",
                        f.label()
                    ))
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(wd: f64, loss: Option<f64>, val: Option<f64>, ok: bool) -> SweepRow {
        SweepRow {
            weight_decay: wd,
            epochs_completed: 1,
            final_train_loss: loss,
            validation_rmse: val,
            diverged: (!ok).then(|| "nan".to_string()),
            checkpoint: ok.then(|| "x".to_string()),
            epoch_losses: vec![],
        }
    }

    #[test]
    fn selection_prefers_lowest_validation_then_first() {
        let rows = [
            row(1e-4, Some(0.1), Some(3.0), true),
            row(1e-3, Some(0.2), Some(2.0), true),
            row(1e-2, Some(0.3), Some(2.0), true),
            row(1e-1, None, None, false),
        ];
        assert_eq!(select(&rows), Some(1));
    }

    #[test]
    fn without_validation_training_loss_decides() {
        let rows = [
            row(1e-4, Some(0.3), None, true),
            row(1e-3, Some(0.2), None, true),
        ];
        assert_eq!(select(&rows), Some(1));
        assert_eq!(select(&[row(1.0, None, None, false)]), None);
    }
}
