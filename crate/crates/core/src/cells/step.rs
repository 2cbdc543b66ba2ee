//! Single-step cell updates.
//!
//! Every step function takes already-bound parameters and a [`CellState`]
//! living on the same graph, and returns the next state. Dense cells accept
//! either a `[features]` vector or a `[rows, features]` batch; convolutional
//! cells take `[channels, height, width]` grids.

use super::params::{CellParams, Gate};
use super::time_discount;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ndauto::{Graph, Tensor, Var};

/// Hidden state `h` and cell memory `c` of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

impl CellState {
    /// Zero state of the given shape (`[hidden]`, `[rows, hidden]` or
    /// `[hidden, height, width]`).
    pub fn zeros(g: &mut Graph, shape: &[usize]) -> Result<Self> {
        let h = g.constant(Tensor::zeros(shape)?);
        let c = g.constant(Tensor::zeros(shape)?);
        Ok(CellState { h, c })
    }
}

/// Nonlinearity applied to the intermediate memory when forming the hidden
/// output of a Time-LSTM style cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSquash {
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Layout {
    Dense,
    Conv,
}

enum Discount {
    Scalar(f64),
    Map(Var),
}

/// `W x (+ b)`, as an affine map or a same-padded convolution.
fn project(g: &mut Graph, layout: Layout, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    match layout {
        Layout::Dense => g.affine(x, w, b),
        Layout::Conv => g.conv2d(x, w, b),
    }
}

/// Several projections of the same input. Convolutions are fused into one
/// call over stacked kernels.
fn project_many(
    g: &mut Graph,
    layout: Layout,
    x: Var,
    weights: &[Var],
    biases: Option<&[Var]>,
) -> Result<Vec<Var>> {
    if layout == Layout::Dense || weights.len() == 1 {
        return weights
            .iter()
            .enumerate()
            .map(|(k, &w)| project(g, layout, x, w, biases.map(|b| b[k])))
            .collect();
    }
    let sizes: Vec<usize> = weights.iter().map(|&w| g.shape(w)[0]).collect();
    let w = g.concat(weights)?;
    let b = biases.map(|b| g.concat(b)).transpose()?;
    let y = g.conv2d(x, w, b)?;
    g.split(y, &sizes)
}

/// Pre-activations `W_x x + W_h h + b` of gates that all see `x` and `h`.
fn recurrent_preacts(
    g: &mut Graph,
    layout: Layout,
    gates: &[&Gate<Var>],
    x: Var,
    h: Var,
) -> Result<Vec<Var>> {
    let wx: Vec<Var> = gates.iter().map(|q| q.input).collect();
    let bs: Vec<Var> = gates.iter().map(|q| q.bias).collect();
    let wh: Vec<Var> = gates
        .iter()
        .map(|q| q.hidden.expect("recurrent gate has hidden weights"))
        .collect();
    let xs = project_many(g, layout, x, &wx, Some(&bs))?;
    let hs = project_many(g, layout, h, &wh, None)?;
    xs.into_iter().zip(hs).map(|(a, b)| g.add(a, b)).collect()
}

fn missing(part: &str) -> Error {
    Error::InvalidArgument(format!("cell parameters lack {part}"))
}

fn lstm_core(
    g: &mut Graph,
    layout: Layout,
    p: &CellParams<Var>,
    x: Var,
    state: CellState,
    discount: Option<Discount>,
) -> Result<CellState> {
    let f_gate = p
        .forget_gate
        .as_ref()
        .ok_or_else(|| missing("a forget gate"))?;
    let pre = recurrent_preacts(
        g,
        layout,
        &[&p.input_gate, f_gate, &p.candidate, &p.output_gate],
        x,
        state.h,
    )?;
    let i = g.sigmoid(pre[0]);
    let f = g.sigmoid(pre[1]);
    let cand = g.tanh(pre[2]);
    let o = g.sigmoid(pre[3]);

    let c_prev = match discount {
        None => state.c,
        Some(d) => {
            let dec = p
                .decomposition
                .as_ref()
                .ok_or_else(|| missing("a decomposition"))?;
            let short_pre = project(g, layout, state.c, dec.weight, Some(dec.bias))?;
            let short = g.tanh(short_pre);
            let discounted = match d {
                Discount::Scalar(k) => g.scale(short, k),
                Discount::Map(m) => g.mul(short, m)?,
            };
            let long = g.sub(state.c, short)?;
            g.add(long, discounted)?
        }
    };

    let kept = g.mul(f, c_prev)?;
    let written = g.mul(i, cand)?;
    let c = g.add(kept, written)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(CellState { h, c })
}

fn time_lstm_core(
    g: &mut Graph,
    layout: Layout,
    p: &CellParams<Var>,
    x: Var,
    state: CellState,
    dt: Var,
    squash: OutputSquash,
) -> Result<CellState> {
    let t1 = p
        .time_gate1
        .as_ref()
        .ok_or_else(|| missing("time gate 1"))?;
    let t2 = p
        .time_gate2
        .as_ref()
        .ok_or_else(|| missing("time gate 2"))?;
    let o_gate = &p.output_gate;

    let wx = [
        p.input_gate.input,
        t1.input,
        t2.input,
        p.candidate.input,
        o_gate.input,
    ];
    let bs = [
        p.input_gate.bias,
        t1.bias,
        t2.bias,
        p.candidate.bias,
        o_gate.bias,
    ];
    let xs = project_many(g, layout, x, &wx, Some(&bs))?;
    let wh = [
        p.input_gate.hidden.ok_or_else(|| missing("W_hi"))?,
        p.candidate.hidden.ok_or_else(|| missing("W_hc"))?,
        o_gate.hidden.ok_or_else(|| missing("W_ho"))?,
    ];
    let hs = project_many(g, layout, state.h, &wh, None)?;
    let mut wt = vec![
        t1.time.ok_or_else(|| missing("W_t1"))?,
        t2.time.ok_or_else(|| missing("W_t2"))?,
    ];
    wt.extend(o_gate.time);
    let ts = project_many(g, layout, dt, &wt, None)?;

    let i_pre = g.add(xs[0], hs[0])?;
    let i = g.sigmoid(i_pre);

    let s1 = g.sigmoid(ts[0]);
    let t1_pre = g.add(xs[1], s1)?;
    let t1v = g.sigmoid(t1_pre);
    let s2 = g.sigmoid(ts[1]);
    let t2_pre = g.add(xs[2], s2)?;
    let t2v = g.sigmoid(t2_pre);

    let c_pre = g.add(xs[3], hs[1])?;
    let cand = g.sigmoid(c_pre);

    let mut o_pre = g.add(xs[4], hs[2])?;
    if let Some(&to) = ts.get(2) {
        o_pre = g.add(o_pre, to)?;
    }
    let o = g.sigmoid(o_pre);

    // Intermediate memory, used only for the output.
    let it1 = g.mul(i, t1v)?;
    let keep1 = g.one_minus(it1);
    let a = g.mul(keep1, state.c)?;
    let b = g.mul(it1, cand)?;
    let c_tilde = g.add(a, b)?;

    // Carried memory.
    let keep2 = g.one_minus(i);
    let a = g.mul(keep2, state.c)?;
    let it2 = g.mul(i, t2v)?;
    let b = g.mul(it2, cand)?;
    let c = g.add(a, b)?;

    let sq = match squash {
        OutputSquash::Tanh => g.tanh(c_tilde),
        OutputSquash::Sigmoid => g.sigmoid(c_tilde),
    };
    let h = g.mul(o, sq)?;
    Ok(CellState { h, c })
}

fn check_gap(dt: f64) -> Result<()> {
    if dt.is_finite() && dt >= 0.0 {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "elapsed time must be finite and >= 0, got {dt}"
        )))
    }
}

fn check_map(g: &Graph, x: Var, dt: &Grid) -> Result<()> {
    let xs = g.shape(x);
    if xs.len() != 3 || xs[1..] != [dt.height(), dt.width()] {
        return Err(Error::ShapeMismatch {
            op: "elapsed-time map",
            left: xs.to_vec(),
            right: vec![dt.height(), dt.width()],
        });
    }
    dt.data().iter().try_for_each(|&v| check_gap(v))
}

/// Scaled scalar gap shaped to broadcast against a dense input: `[1]` for a
/// vector input, `[rows, 1]` for a batch.
fn dense_gap(g: &mut Graph, x: Var, scaled: f64) -> Result<Var> {
    let shape = match g.shape(x) {
        [_] => vec![1],
        [rows, _] => vec![*rows, 1],
        other => {
            return Err(Error::InvalidShape {
                shape: other.to_vec(),
                reason: "dense cell input must be a vector or a batch of rows".into(),
            })
        }
    };
    Ok(g.constant(Tensor::filled(&shape, scaled)?))
}

/// Standard LSTM step with a forget gate.
pub fn lstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    state: CellState,
) -> Result<CellState> {
    lstm_core(g, Layout::Dense, p, x, state, None)
}

/// Time-LSTM step. `dt_days` is the gap to the next observation; learned
/// time gates see `dt_days / dt_scale`.
pub fn timelstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_days: f64,
    dt_scale: f64,
    state: CellState,
) -> Result<CellState> {
    check_gap(dt_days)?;
    let dt = dense_gap(g, x, dt_days / dt_scale)?;
    time_lstm_core(g, Layout::Dense, p, x, state, dt, OutputSquash::Tanh)
}

/// Time-Aware LSTM step. `dt_days` is the gap since the previous
/// observation and only enters through [`time_discount`].
pub fn timeawarelstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_days: f64,
    state: CellState,
) -> Result<CellState> {
    check_gap(dt_days)?;
    let d = Discount::Scalar(time_discount(dt_days));
    lstm_core(g, Layout::Dense, p, x, state, Some(d))
}

pub fn convlstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    state: CellState,
) -> Result<CellState> {
    lstm_core(g, Layout::Conv, p, x, state, None)
}

/// Fused convolutional Time-LSTM step with a per-pixel elapsed-time map in
/// days. The hidden output is `O ∘ σ(C̃)`.
pub fn convtimelstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_map: &Grid,
    dt_scale: f64,
    state: CellState,
) -> Result<CellState> {
    convtimelstm_step_with(g, p, x, dt_map, dt_scale, state, OutputSquash::Sigmoid)
}

/// [`convtimelstm_step`] with a selectable output nonlinearity.
pub fn convtimelstm_step_with(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_map: &Grid,
    dt_scale: f64,
    state: CellState,
    squash: OutputSquash,
) -> Result<CellState> {
    check_map(g, x, dt_map)?;
    let scaled = dt_map.map(|v| v / dt_scale).to_tensor();
    let dt = g.constant(scaled);
    time_lstm_core(g, Layout::Conv, p, x, state, dt, squash)
}

/// Fused convolutional Time-Aware LSTM step; the discount is applied
/// pixelwise from the elapsed-time map.
pub fn convtimeawarelstm_step(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_map: &Grid,
    state: CellState,
) -> Result<CellState> {
    check_map(g, x, dt_map)?;
    let hidden = g.shape(state.c)[0];
    let plane: Vec<f64> = dt_map.data().iter().map(|&d| time_discount(d)).collect();
    let mut data = Vec::with_capacity(hidden * plane.len());
    for _ in 0..hidden {
        data.extend_from_slice(&plane);
    }
    let m = g.constant(Tensor::new(
        vec![hidden, dt_map.height(), dt_map.width()],
        data,
    )?);
    lstm_core(g, Layout::Conv, p, x, state, Some(Discount::Map(m)))
}

/// First time gate `t1` of a dense Time-LSTM step, for inspection.
pub fn timelstm_gate1(
    g: &mut Graph,
    p: &CellParams<Var>,
    x: Var,
    dt_days: f64,
    dt_scale: f64,
) -> Result<Var> {
    check_gap(dt_days)?;
    let t1 = p
        .time_gate1
        .as_ref()
        .ok_or_else(|| missing("time gate 1"))?;
    let dt = dense_gap(g, x, dt_days / dt_scale)?;
    let xs = project(g, Layout::Dense, x, t1.input, Some(t1.bias))?;
    let ts = project(
        g,
        Layout::Dense,
        dt,
        t1.time.ok_or_else(|| missing("W_t1"))?,
        None,
    )?;
    let s = g.sigmoid(ts);
    let pre = g.add(xs, s)?;
    Ok(g.sigmoid(pre))
}
