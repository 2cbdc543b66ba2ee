//! Central finite-difference gradients, used as an independent oracle for
//! the analytic reverse pass.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`; zero when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate `i`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Per-parameter report of a gradient check.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub relative_error: f64,
    pub analytic_norm: f64,
}

/// Compares the reverse-pass gradient of a scalar loss against central
/// differences for every parameter in `store`.
///
/// `build` must record the loss on a fresh graph, binding parameters from
/// the store it is given.
pub fn check_params<F>(store: &ParamStore, h: f64, build: F) -> Result<Vec<ParamCheck>>
where
    F: Fn(&ParamStore) -> Result<(Graph, Var)>,
{
    let (mut g, loss) = build(store)?;
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = store
        .ids()
        .map(|id| vec![0.0; store.value(id).len()])
        .collect();
    for (id, grad) in g.param_grads() {
        analytic[id.index()].copy_from_slice(grad);
    }

    let mut probe = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let base = store.value(id).data().to_vec();
        let mut failure = None;
        let numeric = numeric_gradient(&base, h, |x| {
            probe.value_mut(id).data_mut().copy_from_slice(x);
            match build(&probe) {
                Ok((g, l)) => g.value(l).item(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        probe.value_mut(id).data_mut().copy_from_slice(&base);
        if let Some(e) = failure {
            return Err(e);
        }
        let a = &analytic[id.index()];
        out.push(ParamCheck {
            name: store.name(id).to_string(),
            relative_error: relative_error(a, &numeric),
            analytic_norm: a.iter().map(|v| v * v).sum::<f64>().sqrt(),
        });
    }
    Ok(out)
}

/// Largest relative error over a report.
pub fn worst(checks: &[ParamCheck]) -> f64 {
    checks.iter().map(|c| c.relative_error).fold(0.0, f64::max)
}
