//! Naive forecasts and the pooled autoregressive model.
//!
//! The AR model shares one coefficient vector across every pixel:
//! `x_t = Σ φ_i x_{t-i}`, with no intercept. `φ_1` weighs the most recent
//! input scene.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::SceneSequence;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ndauto::{Graph, ParamStore, Tensor, Var};
use crate::train::{train, SequenceSource, TrainConfig, TrainReport, Trainable};

/// The final input scene, unchanged.
pub fn last_scene_forecast(seq: &SceneSequence) -> Result<Grid> {
    seq.inputs
        .last()
        .map(|s| s.grid.clone())
        .ok_or_else(|| Error::InvalidArgument("empty input sequence".into()))
}

/// A scene with no pixel above the background.
pub fn all_zeros_forecast(height: usize, width: usize) -> Grid {
    Grid::zeros(height, width)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `φ_1..φ_p`, most recent lag first.
    pub coefficients: Vec<f64>,
}

impl ArModel {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidArgument(
                "an AR model needs order at least 1".into(),
            ));
        }
        Ok(ArModel { coefficients })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }
}

/// Per-pixel `Σ φ_i x_{t-i}` over the last `p` input scenes.
pub fn ar_forecast(model: &ArModel, seq: &SceneSequence) -> Result<Grid> {
    let p = model.order();
    let n = seq.inputs.len();
    if n < p {
        return Err(Error::InvalidArgument(format!(
            "AR({p}) needs at least {p} input scenes, got {n}"
        )));
    }
    let (h, w) = seq.dims();
    let mut out = seq.inputs[n - 1].grid.map(|v| model.coefficients[0] * v);
    for i in 1..p {
        let phi = model.coefficients[i];
        let x = seq.inputs[n - 1 - i].grid.data();
        out.data_mut()
            .iter_mut()
            .zip(x)
            .for_each(|(o, &v)| *o += phi * v);
    }
    debug_assert_eq!(out.dims(), (h, w));
    Ok(out)
}

/// Regression rows: one per pixel per sequence, lags most recent first.
fn design_rows(seq: &SceneSequence, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = seq.inputs.len();
    if n < p {
        return Err(Error::InvalidArgument(format!(
            "AR({p}) needs windows of at least {p} inputs, got {n}"
        )));
    }
    let pixels = seq.target.grid.len();
    let mut x = Vec::with_capacity(pixels * p);
    for k in 0..pixels {
        for i in 0..p {
            x.push(seq.inputs[n - 1 - i].grid.data()[k]);
        }
    }
    Ok((x, seq.target.grid.data().to_vec()))
}

/// Result of a closed-form fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub model: ArModel,
    /// Ratio of largest to smallest singular value of the normal matrix.
    pub condition: f64,
    pub rank: usize,
    /// Mean squared residual over all rows.
    pub mse: f64,
}

/// Least squares over all (pixel, window) rows via the normal equations.
///
/// The normal matrix is inverted through its SVD, discarding singular
/// values below `1e-12` of the largest, so rank-deficient data (for
/// example constant sequences) yields the minimum-norm optimum. A normal
/// matrix with no usable singular value is rejected.
pub fn ar_fit_closed_form<S: SequenceSource + ?Sized>(data: &S, p: usize) -> Result<ArFit> {
    if p == 0 {
        return Err(Error::InvalidArgument(
            "an AR model needs order at least 1".into(),
        ));
    }
    if data.count() < p + 1 {
        return Err(Error::InvalidArgument(format!(
            "closed-form AR({p}) needs at least {} windows, got {}",
            p + 1,
            data.count()
        )));
    }
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut atb = DVector::<f64>::zeros(p);
    let mut rows = 0usize;
    for s in 0..data.count() {
        let (x, y) = design_rows(data.fetch(s)?, p)?;
        for (row, &t) in x.chunks_exact(p).zip(&y) {
            for i in 0..p {
                atb[i] += row[i] * t;
                for j in 0..p {
                    ata[(i, j)] += row[i] * row[j];
                }
            }
        }
        rows += y.len();
    }
    let svd = ata.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    let tol = smax * 1e-12;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank == 0 || !smax.is_finite() {
        return Err(Error::Singular(format!(
            "AR({p}) normal matrix has no usable singular value (largest {smax:e}, condition {condition:e})"
        )));
    }
    let phi = svd
        .solve(&atb, tol)
        .map_err(|e| Error::Singular(format!("AR({p}) solve failed: {e}")))?;
    let model = ArModel::new(phi.iter().copied().collect())?;
    let mut sse = 0.0;
    for s in 0..data.count() {
        let seq = data.fetch(s)?;
        let pred = ar_forecast(&model, seq)?;
        sse += pred
            .data()
            .iter()
            .zip(seq.target.grid.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(ArFit {
        model,
        condition,
        rank,
        mse: sse / rows as f64,
    })
}

/// AR model as a trainable graph: one `[1, p]` weight, applied row-wise.
pub struct ArTrainer {
    order: usize,
    store: ParamStore,
}

impl ArTrainer {
    /// Starts from all-zero coefficients.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "an AR model needs order at least 1".into(),
            ));
        }
        let mut store = ParamStore::new();
        store.register("phi", Tensor::zeros(&[1, order])?);
        Ok(ArTrainer { order, store })
    }

    pub fn model(&self) -> ArModel {
        let id = self.store.find("phi").expect("registered in new");
        ArModel {
            coefficients: self.store.value(id).data().to_vec(),
        }
    }
}

impl Trainable for ArTrainer {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss_graph(&self, seq: &SceneSequence) -> Result<(Graph, Var)> {
        let (x, y) = design_rows(seq, self.order)?;
        let rows = y.len();
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(rows, self.order, x)?);
        let phi = g.param(
            &self.store,
            self.store.find("phi").expect("registered in new"),
        );
        let pred = g.affine(x, phi, None)?;
        let target = g.constant(Tensor::matrix(rows, 1, y)?);
        let loss = g.mse_loss(pred, target)?;
        Ok((g, loss))
    }
}

/// Fits AR coefficients by Adam on the per-sequence MSE.
pub fn ar_fit_gradient<S: SequenceSource + ?Sized>(
    data: &S,
    p: usize,
    config: &TrainConfig,
) -> Result<(ArModel, TrainReport)> {
    let mut t = ArTrainer::new(p)?;
    let report = train(&mut t, data, config)?;
    Ok((t.model(), report))
}
