//! Mini-batch training with Adam.
//!
//! Each batch item gets its own graph, built and differentiated in
//! parallel. Gradients are then summed in batch order on the calling thread,
//! so results do not depend on thread scheduling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::Forecaster;
use crate::dataset::{Dataset, Phase, SceneSequence, Split};
use crate::error::{Error, Result};
use crate::ndauto::{adam_step, AdamConfig, AdamState, Graph, ParamStore, Var};

/// A model whose parameters can be fit by gradient descent on sequences.
pub trait Trainable: Sync {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Graph whose output is the scalar loss for one sequence.
    fn loss_graph(&self, seq: &SceneSequence) -> Result<(Graph, Var)>;
}

impl Trainable for Forecaster {
    fn params(&self) -> &ParamStore {
        Forecaster::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        Forecaster::params_mut(self)
    }

    fn loss_graph(&self, seq: &SceneSequence) -> Result<(Graph, Var)> {
        Forecaster::loss_graph(self, seq)
    }
}

/// Indexed access to training sequences.
pub trait SequenceSource: Sync {
    fn count(&self) -> usize;
    fn fetch(&self, index: usize) -> Result<&SceneSequence>;
}

impl SequenceSource for [SceneSequence] {
    fn count(&self) -> usize {
        self.len()
    }

    fn fetch(&self, index: usize) -> Result<&SceneSequence> {
        self.get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("sequence {index} out of range")))
    }
}

/// The training split of a dataset, read in the gradient phase.
pub struct TrainingSplit<'a>(pub &'a Dataset);

impl SequenceSource for TrainingSplit<'_> {
    fn count(&self) -> usize {
        self.0.len(Split::Train)
    }

    fn fetch(&self, index: usize) -> Result<&SceneSequence> {
        self.0.read(Split::Train, Phase::Gradient, index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sequence loss seen during each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    /// Why training stopped early, if it did.
    pub diverged: Option<String>,
}

struct ItemResult {
    loss: f64,
    grads: Vec<Vec<f64>>,
}

fn item_gradients<M: Trainable>(model: &M, seq: &SceneSequence) -> Result<ItemResult> {
    let (mut g, loss) = model.loss_graph(seq)?;
    g.backward(loss)?;
    let store = model.params();
    let mut grads: Vec<Vec<f64>> = store
        .ids()
        .map(|id| vec![0.0; store.value(id).len()])
        .collect();
    for (id, grad) in g.param_grads() {
        grads[id.index()]
            .iter_mut()
            .zip(grad)
            .for_each(|(d, s)| *d += s);
    }
    Ok(ItemResult {
        loss: g.value(loss).item(),
        grads,
    })
}

/// Fits `model` to every sequence of `data` for `config.epochs` epochs.
///
/// A non-finite loss or gradient stops training; the parameters are left as
/// they were after the last successful step and the cause is recorded in
/// the report. Data access failures are returned as errors.
pub fn train<M, S>(model: &mut M, data: &S, config: &TrainConfig) -> Result<TrainReport>
where
    M: Trainable,
    S: SequenceSource + ?Sized,
{
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs and batch size must be at least 1".into(),
        ));
    }
    let count = data.count();
    if count == 0 {
        return Err(Error::Data("no training sequences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.adam, model.params());
    let mut order: Vec<usize> = (0..count).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        steps: 0,
        diverged: None,
    };
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let shared: &M = model;
            let items: Vec<ItemResult> = batch
                .par_iter()
                .map(|&i| item_gradients(shared, data.fetch(i)?))
                .collect::<Result<_>>()?;
            if let Some(bad) = items.iter().find(|r| !r.loss.is_finite()) {
                report.diverged = Some(format!("epoch {}: loss became {}", epoch + 1, bad.loss));
                return Ok(report);
            }
            let params = model.params_mut();
            params.zero_grads();
            for r in &items {
                params.accumulate_flat(&r.grads);
                total += r.loss;
            }
            params.scale_grads(1.0 / items.len() as f64);
            match adam_step(params, &mut adam) {
                Ok(()) => report.steps += 1,
                Err(Error::NonFinite(what)) => {
                    report.diverged = Some(format!("epoch {}: non-finite {what}", epoch + 1));
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }
        let mean = total / count as f64;
        log::debug!("epoch {}: loss {mean:.6e}", epoch + 1);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}
