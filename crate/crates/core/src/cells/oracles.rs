//! Cell oracles: straight-line re-evaluations of each update, algebraic
//! reductions between cell kinds, and finite-difference gradient checks.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::register_layer;
use super::*;
use crate::dataset::SceneSequence;
use crate::grid::Grid;
use crate::ndauto::gradcheck::{check_params, worst};
use crate::ndauto::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::pipeline::Scene;

// ---- plain-arithmetic helpers ---------------------------------------------

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `W v` for a row-major `[rows, cols]` matrix.
fn matvec(w: &[f64], v: &[f64]) -> Vec<f64> {
    let cols = v.len();
    w.chunks_exact(cols)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn vadd(parts: &[&[f64]]) -> Vec<f64> {
    (0..parts[0].len())
        .map(|i| parts.iter().map(|p| p[i]).sum())
        .collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

struct Layer {
    store: ParamStore,
    ids: CellParams<ParamId>,
}

impl Layer {
    fn new(kind: CellKind, input: usize, hidden: usize, kernel: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids = register_layer(&mut store, "l0", kind, input, hidden, kernel, &mut rng);
        Layer { store, ids }
    }

    /// Overwrites every weight with uniform values in `±scale`, keeping the
    /// sign constraint on constrained tensors.
    fn randomize(&mut self, rng: &mut ChaCha8Rng, scale: f64) {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            for v in self.store.value_mut(id).data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        self.store.apply_constraints();
    }

    fn zero(&mut self) {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            self.store.value_mut(id).data_mut().fill(0.0);
        }
    }

    fn get(&self, name: &str) -> &[f64] {
        self.store
            .value(self.store.find(&format!("l0.{name}")).unwrap())
            .data()
    }

    fn set(&mut self, name: &str, data: &[f64]) {
        let id = self.store.find(&format!("l0.{name}")).unwrap();
        self.store.value_mut(id).data_mut().copy_from_slice(data);
    }

    fn bind(&self, g: &mut Graph) -> CellParams<Var> {
        self.ids.bind(g, &self.store)
    }

    /// Copies every tensor of `other` whose name also exists here.
    fn copy_shared(&mut self, other: &Layer) {
        for id in other.store.ids() {
            if let Some(mine) = self.store.find(other.store.name(id)) {
                let src = other.store.value(id).data().to_vec();
                self.store.value_mut(mine).data_mut().copy_from_slice(&src);
            }
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn constant(g: &mut Graph, shape: &[usize], data: &[f64]) -> Var {
    g.constant(Tensor::new(shape.to_vec(), data.to_vec()).unwrap())
}

fn state(g: &mut Graph, shape: &[usize], h: &[f64], c: &[f64]) -> CellState {
    CellState {
        h: constant(g, shape, h),
        c: constant(g, shape, c),
    }
}

// ---- straight-line oracles ------------------------------------------------

struct Oracle<'a> {
    l: &'a Layer,
    x: &'a [f64],
    h: &'a [f64],
}

impl Oracle<'_> {
    /// `W_x{tag} x + W_h{tag} h + b_{tag}`.
    fn pre(&self, tag: &str) -> Vec<f64> {
        let a = matvec(self.l.get(&format!("w_x{tag}")), self.x);
        let b = matvec(self.l.get(&format!("w_h{tag}")), self.h);
        vadd(&[&a, &b, self.l.get(&format!("b_{tag}"))])
    }
}

fn lstm_oracle(l: &Layer, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let o = Oracle { l, x, h };
    let (ip, fp, cp, op) = (o.pre("i"), o.pre("f"), o.pre("c"), o.pre("o"));
    let c_new: Vec<f64> = (0..c.len())
        .map(|k| sig(fp[k]) * c[k] + sig(ip[k]) * cp[k].tanh())
        .collect();
    let h_new = (0..c.len()).map(|k| sig(op[k]) * c_new[k].tanh()).collect();
    (h_new, c_new)
}

fn timelstm_oracle(l: &Layer, x: &[f64], dt: f64, h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let o = Oracle { l, x, h };
    let (ip, cp, op) = (o.pre("i"), o.pre("c"), o.pre("o"));
    let x1 = matvec(l.get("w_x1"), x);
    let x2 = matvec(l.get("w_x2"), x);
    let (wt1, wt2) = (l.get("w_t1"), l.get("w_t2"));
    let (b1, b2) = (l.get("b_1"), l.get("b_2"));
    let mut h_new = vec![0.0; c.len()];
    let mut c_new = vec![0.0; c.len()];
    for k in 0..c.len() {
        let i = sig(ip[k]);
        let t1 = sig(x1[k] + sig(wt1[k] * dt) + b1[k]);
        let t2 = sig(x2[k] + sig(wt2[k] * dt) + b2[k]);
        let cand = sig(cp[k]);
        let c_tilde = (1.0 - i * t1) * c[k] + i * t1 * cand;
        c_new[k] = (1.0 - i) * c[k] + i * t2 * cand;
        h_new[k] = sig(op[k]) * c_tilde.tanh();
    }
    (h_new, c_new)
}

fn timeaware_oracle(
    l: &Layer,
    x: &[f64],
    dt_days: f64,
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let o = Oracle { l, x, h };
    let (ip, fp, cp, op) = (o.pre("i"), o.pre("f"), o.pre("c"), o.pre("o"));
    let gdt = 1.0 / (std::f64::consts::E + dt_days).ln();
    let dpre = vadd(&[&matvec(l.get("w_d"), c), l.get("b_d")]);
    let mut h_new = vec![0.0; c.len()];
    let mut c_new = vec![0.0; c.len()];
    for k in 0..c.len() {
        let short = dpre[k].tanh();
        let star = (c[k] - short) + short * gdt;
        c_new[k] = sig(fp[k]) * star + sig(ip[k]) * cp[k].tanh();
        h_new[k] = sig(op[k]) * c_new[k].tanh();
    }
    (h_new, c_new)
}

#[test]
fn zero_weight_lstm_outputs_zero() {
    let mut l = Layer::new(CellKind::Lstm, 3, 4, 1, 0);
    l.zero();
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let x = constant(&mut g, &[3], &[0.3, -2.0, 5.0]);
    let s = CellState::zeros(&mut g, &[4]).unwrap();
    let out = lstm_step(&mut g, &p, x, s).unwrap();
    assert!(g.value(out.h).data().iter().all(|&v| v == 0.0));
    assert!(g.value(out.c).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_everything_convlstm_outputs_zero() {
    let mut l = Layer::new(CellKind::ConvLstm, 1, 2, 3, 0);
    l.zero();
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let x = g.constant(Tensor::zeros(&[1, 4, 4]).unwrap());
    let s = CellState::zeros(&mut g, &[2, 4, 4]).unwrap();
    let out = convlstm_step(&mut g, &p, x, s).unwrap();
    assert!(g.value(out.h).data().iter().all(|&v| v == 0.0));
}

#[test]
fn dense_steps_match_straight_line_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for trial in 0..5 {
        let x = random_vec(&mut rng, 3);
        let h0 = random_vec(&mut rng, 2);
        let c0 = random_vec(&mut rng, 2);
        let dt = rng.random_range(0.0..100.0);

        let l = Layer::new(CellKind::Lstm, 3, 2, 1, trial);
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let xv = constant(&mut g, &[3], &x);
        let s = state(&mut g, &[2], &h0, &c0);
        let out = lstm_step(&mut g, &p, xv, s).unwrap();
        let (eh, ec) = lstm_oracle(&l, &x, &h0, &c0);
        assert!(close(g.value(out.h).data(), &eh, 1e-12));
        assert!(close(g.value(out.c).data(), &ec, 1e-12));

        let mut l = Layer::new(CellKind::TimeLstm, 3, 2, 1, trial);
        l.randomize(&mut rng, 1.0);
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let xv = constant(&mut g, &[3], &x);
        let s = state(&mut g, &[2], &h0, &c0);
        let out = timelstm_step(&mut g, &p, xv, dt, DEFAULT_DT_SCALE, s).unwrap();
        let (eh, ec) = timelstm_oracle(&l, &x, dt / DEFAULT_DT_SCALE, &h0, &c0);
        assert!(close(g.value(out.h).data(), &eh, 1e-12));
        assert!(close(g.value(out.c).data(), &ec, 1e-12));

        let mut l = Layer::new(CellKind::TimeAwareLstm, 3, 2, 1, trial);
        l.randomize(&mut rng, 1.0);
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let xv = constant(&mut g, &[3], &x);
        let s = state(&mut g, &[2], &h0, &c0);
        let out = timeawarelstm_step(&mut g, &p, xv, dt, s).unwrap();
        let (eh, ec) = timeaware_oracle(&l, &x, dt, &h0, &c0);
        assert!(close(g.value(out.h).data(), &eh, 1e-12));
        assert!(close(g.value(out.c).data(), &ec, 1e-12));
    }
}

#[test]
fn batched_dense_step_equals_per_row_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let l = Layer::new(CellKind::TimeLstm, 1, 3, 1, 5);
    let rows = 4;
    let x = random_vec(&mut rng, rows);
    let h0 = random_vec(&mut rng, rows * 3);
    let c0 = random_vec(&mut rng, rows * 3);
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let xv = constant(&mut g, &[rows, 1], &x);
    let s = state(&mut g, &[rows, 3], &h0, &c0);
    let out = timelstm_step(&mut g, &p, xv, 12.0, 37.0, s).unwrap();
    let batch = g.value(out.h).data().to_vec();
    for r in 0..rows {
        let (eh, _) = timelstm_oracle(
            &l,
            &x[r..r + 1],
            12.0 / 37.0,
            &h0[r * 3..r * 3 + 3],
            &c0[r * 3..r * 3 + 3],
        );
        assert!(close(&batch[r * 3..r * 3 + 3], &eh, 1e-12));
    }
}

/// Same-padded convolution by direct summation.
fn naive_conv(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    k: &[f64],
    cout: usize,
    ks: usize,
) -> Vec<f64> {
    let pad = (ks / 2) as isize;
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for i in 0..cin {
                    for dr in 0..ks {
                        for dc in 0..ks {
                            let rr = r as isize + dr as isize - pad;
                            let cc = c as isize + dc as isize - pad;
                            if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                                continue;
                            }
                            acc += k[((o * cin + i) * ks + dr) * ks + dc]
                                * x[(i * h + rr as usize) * w + cc as usize];
                        }
                    }
                }
                out[(o * h + r) * w + c] = acc;
            }
        }
    }
    out
}

#[test]
fn conv_time_aware_step_matches_direct_convolution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (cin, hid, h, w) = (2, 3, 4, 5);
    let mut l = Layer::new(CellKind::ConvTimeAwareLstm, cin, hid, 3, 1);
    l.randomize(&mut rng, 0.5);
    let x = random_vec(&mut rng, cin * h * w);
    let h0 = random_vec(&mut rng, hid * h * w);
    let c0 = random_vec(&mut rng, hid * h * w);
    let dt = Grid::from_fn(h, w, |r, c| (r * 7 + c * 3) as f64);

    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let xv = constant(&mut g, &[cin, h, w], &x);
    let s = state(&mut g, &[hid, h, w], &h0, &c0);
    let out = convtimeawarelstm_step(&mut g, &p, xv, &dt, s).unwrap();

    let pre = |tag: &str| {
        let a = naive_conv(&x, cin, h, w, l.get(&format!("w_x{tag}")), hid, 3);
        let b = naive_conv(&h0, hid, h, w, l.get(&format!("w_h{tag}")), hid, 3);
        let bias = l.get(&format!("b_{tag}"));
        (0..hid * h * w)
            .map(|j| a[j] + b[j] + bias[j / (h * w)])
            .collect::<Vec<_>>()
    };
    let (ip, fp, cp, op) = (pre("i"), pre("f"), pre("c"), pre("o"));
    let d = naive_conv(&c0, hid, h, w, l.get("w_d"), hid, 3);
    let bd = l.get("b_d");
    let mut eh = vec![0.0; hid * h * w];
    for j in 0..hid * h * w {
        let short = (d[j] + bd[j / (h * w)]).tanh();
        let gdt = time_discount(dt.data()[j % (h * w)]);
        let star = (c0[j] - short) + short * gdt;
        let c = sig(fp[j]) * star + sig(ip[j]) * cp[j].tanh();
        eh[j] = sig(op[j]) * c.tanh();
    }
    assert!(close(g.value(out.h).data(), &eh, 1e-12));
}

// ---- reduction ladder -----------------------------------------------------

/// Dense and 1×1-convolutional layers holding identical random weights.
fn twin_layers(dense: CellKind, conv: CellKind, rng: &mut ChaCha8Rng) -> (Layer, Layer) {
    let mut c = Layer::new(conv, 3, 4, 1, 0);
    c.randomize(rng, 1.0);
    let mut d = Layer::new(dense, 3, 4, 1, 0);
    d.copy_shared(&c);
    (d, c)
}

#[test]
fn conv_cells_on_single_pixel_reduce_to_dense_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..20 {
        let x = random_vec(&mut rng, 3);
        let h0 = random_vec(&mut rng, 4);
        let c0 = random_vec(&mut rng, 4);
        let dt = rng.random_range(0.0..200.0);
        let map = Grid::filled(1, 1, dt);

        // ConvLSTM -> LSTM
        let (d, c) = twin_layers(CellKind::Lstm, CellKind::ConvLstm, &mut rng);
        let (mut g, mut gc) = (Graph::new(), Graph::new());
        let (pd, pc) = (d.bind(&mut g), c.bind(&mut gc));
        let xd = constant(&mut g, &[3], &x);
        let xc = constant(&mut gc, &[3, 1, 1], &x);
        let sd = state(&mut g, &[4], &h0, &c0);
        let sc = state(&mut gc, &[4, 1, 1], &h0, &c0);
        let a = lstm_step(&mut g, &pd, xd, sd).unwrap();
        let b = convlstm_step(&mut gc, &pc, xc, sc).unwrap();
        assert!(close(g.value(a.h).data(), gc.value(b.h).data(), 1e-12));
        assert!(close(g.value(a.c).data(), gc.value(b.c).data(), 1e-12));

        // ConvTimeLSTM (W_to = 0, tanh output) -> TimeLSTM
        let (d, mut c) = twin_layers(CellKind::TimeLstm, CellKind::ConvTimeLstm, &mut rng);
        c.set("w_to", &[0.0; 4]);
        let (mut g, mut gc) = (Graph::new(), Graph::new());
        let (pd, pc) = (d.bind(&mut g), c.bind(&mut gc));
        let xd = constant(&mut g, &[3], &x);
        let xc = constant(&mut gc, &[3, 1, 1], &x);
        let sd = state(&mut g, &[4], &h0, &c0);
        let sc = state(&mut gc, &[4, 1, 1], &h0, &c0);
        let a = timelstm_step(&mut g, &pd, xd, dt, 37.0, sd).unwrap();
        let b =
            convtimelstm_step_with(&mut gc, &pc, xc, &map, 37.0, sc, OutputSquash::Tanh).unwrap();
        assert!(close(g.value(a.h).data(), gc.value(b.h).data(), 1e-12));
        assert!(close(g.value(a.c).data(), gc.value(b.c).data(), 1e-12));

        // ConvTimeAwareLSTM -> TimeAwareLSTM
        let (d, c) = twin_layers(
            CellKind::TimeAwareLstm,
            CellKind::ConvTimeAwareLstm,
            &mut rng,
        );
        let (mut g, mut gc) = (Graph::new(), Graph::new());
        let (pd, pc) = (d.bind(&mut g), c.bind(&mut gc));
        let xd = constant(&mut g, &[3], &x);
        let xc = constant(&mut gc, &[3, 1, 1], &x);
        let sd = state(&mut g, &[4], &h0, &c0);
        let sc = state(&mut gc, &[4, 1, 1], &h0, &c0);
        let a = timeawarelstm_step(&mut g, &pd, xd, dt, sd).unwrap();
        let b = convtimeawarelstm_step(&mut gc, &pc, xc, &map, sc).unwrap();
        assert!(close(g.value(a.h).data(), gc.value(b.h).data(), 1e-12));
        assert!(close(g.value(a.c).data(), gc.value(b.c).data(), 1e-12));
    }
}

#[test]
fn time_aware_cells_without_discount_reduce_to_lstm() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..20 {
        // dense
        let mut ta = Layer::new(CellKind::TimeAwareLstm, 3, 4, 1, 0);
        ta.randomize(&mut rng, 1.0);
        let mut plain = Layer::new(CellKind::Lstm, 3, 4, 1, 0);
        plain.copy_shared(&ta);
        let x = random_vec(&mut rng, 3);
        let h0 = random_vec(&mut rng, 4);
        let c0 = random_vec(&mut rng, 4);
        let (mut g, mut gb) = (Graph::new(), Graph::new());
        let (pa, pb) = (ta.bind(&mut g), plain.bind(&mut gb));
        let xv = constant(&mut g, &[3], &x);
        let xb = constant(&mut gb, &[3], &x);
        let s = state(&mut g, &[4], &h0, &c0);
        let sb = state(&mut gb, &[4], &h0, &c0);
        let a = timeawarelstm_step(&mut g, &pa, xv, 0.0, s).unwrap();
        let b = lstm_step(&mut gb, &pb, xb, sb).unwrap();
        assert!(close(g.value(a.h).data(), gb.value(b.h).data(), 1e-12));
        assert!(close(g.value(a.c).data(), gb.value(b.c).data(), 1e-12));

        // convolutional
        let mut ta = Layer::new(CellKind::ConvTimeAwareLstm, 2, 3, 3, 0);
        ta.randomize(&mut rng, 1.0);
        let mut plain = Layer::new(CellKind::ConvLstm, 2, 3, 3, 0);
        plain.copy_shared(&ta);
        let x = random_vec(&mut rng, 2 * 4 * 4);
        let h0 = random_vec(&mut rng, 3 * 4 * 4);
        let c0 = random_vec(&mut rng, 3 * 4 * 4);
        let (mut g, mut gb) = (Graph::new(), Graph::new());
        let (pa, pb) = (ta.bind(&mut g), plain.bind(&mut gb));
        let xv = constant(&mut g, &[2, 4, 4], &x);
        let xb = constant(&mut gb, &[2, 4, 4], &x);
        let s = state(&mut g, &[3, 4, 4], &h0, &c0);
        let sb = state(&mut gb, &[3, 4, 4], &h0, &c0);
        let a = convtimeawarelstm_step(&mut g, &pa, xv, &Grid::zeros(4, 4), s).unwrap();
        let b = convlstm_step(&mut gb, &pb, xb, sb).unwrap();
        assert!(close(g.value(a.h).data(), gb.value(b.h).data(), 1e-12));
        assert!(close(g.value(a.c).data(), gb.value(b.c).data(), 1e-12));
    }
}

// ---- time handling --------------------------------------------------------

#[test]
fn zero_gap_puts_half_inside_time_gates() {
    // With x = 0 and zero biases, t1 = σ(σ(0)) = σ(0.5) exactly.
    let l = Layer::new(CellKind::TimeLstm, 1, 3, 1, 9);
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let x = constant(&mut g, &[1], &[0.0]);
    let t1 = timelstm_gate1(&mut g, &p, x, 0.0, 37.0).unwrap();
    for &v in g.value(t1).data() {
        assert_eq!(v, sig(0.5));
    }
}

#[test]
fn first_time_gate_is_non_increasing_in_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..10 {
        let mut l = Layer::new(CellKind::TimeLstm, 2, 5, 1, 0);
        l.randomize(&mut rng, 3.0);
        let x = random_vec(&mut rng, 2);
        let mut prev: Option<Vec<f64>> = None;
        for dt in [0.0, 1.0, 10.0, 100.0] {
            let mut g = Graph::new();
            let p = l.bind(&mut g);
            let xv = constant(&mut g, &[2], &x);
            let t1 = timelstm_gate1(&mut g, &p, xv, dt, 37.0).unwrap();
            let now = g.value(t1).data().to_vec();
            if let Some(before) = prev {
                assert!(now.iter().zip(&before).all(|(a, b)| a <= b));
            }
            prev = Some(now);
        }
    }
}

#[test]
fn negative_gaps_are_rejected() {
    let l = Layer::new(CellKind::TimeLstm, 1, 2, 1, 0);
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let x = constant(&mut g, &[1], &[0.0]);
    let s = CellState::zeros(&mut g, &[2]).unwrap();
    assert!(timelstm_step(&mut g, &p, x, -1.0, 37.0, s).is_err());

    let l = Layer::new(CellKind::ConvTimeLstm, 1, 2, 3, 0);
    let mut g = Graph::new();
    let p = l.bind(&mut g);
    let x = g.constant(Tensor::zeros(&[1, 3, 3]).unwrap());
    let s = CellState::zeros(&mut g, &[2, 3, 3]).unwrap();
    let mut bad = Grid::zeros(3, 3);
    bad.set(1, 1, -0.5);
    assert!(convtimelstm_step(&mut g, &p, x, &bad, 37.0, s).is_err());
    assert!(convtimelstm_step(&mut g, &p, x, &Grid::zeros(3, 4), 37.0, s).is_err());
}

#[test]
fn uniform_map_equals_per_pixel_map_of_same_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut l = Layer::new(CellKind::ConvTimeLstm, 1, 2, 3, 0);
    l.randomize(&mut rng, 1.0);
    let x = random_vec(&mut rng, 9);
    let uniform = Grid::filled(3, 3, 21.0);
    let per_pixel = Grid::from_fn(3, 3, |_, _| 21.0);
    let run = |map: &Grid| {
        let mut g = Graph::new();
        let p = l.bind(&mut g);
        let xv = constant(&mut g, &[1, 3, 3], &x);
        let s = CellState::zeros(&mut g, &[2, 3, 3]).unwrap();
        let out = convtimelstm_step(&mut g, &p, xv, map, 37.0, s).unwrap();
        g.value(out.h).data().to_vec()
    };
    assert_eq!(run(&uniform), run(&per_pixel));
}

#[test]
fn hidden_outputs_are_bounded_and_steps_are_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for kind in CellKind::ALL {
        let (input_shape, state_shape, map) = if kind.is_conv() {
            (vec![2, 3, 3], vec![3, 3, 3], Grid::filled(3, 3, 40.0))
        } else {
            (vec![2], vec![3], Grid::filled(1, 1, 40.0))
        };
        let mut l = Layer::new(kind, 2, 3, 3, 0);
        l.randomize(&mut rng, 20.0);
        let nx: usize = input_shape.iter().product();
        let ns: usize = state_shape.iter().product();
        let x: Vec<f64> = random_vec(&mut rng, nx).iter().map(|v| v * 50.0).collect();
        let h0 = random_vec(&mut rng, ns);
        let c0: Vec<f64> = random_vec(&mut rng, ns).iter().map(|v| v * 10.0).collect();
        let run = || {
            let mut g = Graph::new();
            let p = l.bind(&mut g);
            let xv = constant(&mut g, &input_shape, &x);
            let s = state(&mut g, &state_shape, &h0, &c0);
            let out = match kind {
                CellKind::Lstm => lstm_step(&mut g, &p, xv, s),
                CellKind::TimeLstm => timelstm_step(&mut g, &p, xv, 40.0, 37.0, s),
                CellKind::TimeAwareLstm => timeawarelstm_step(&mut g, &p, xv, 40.0, s),
                CellKind::ConvLstm => convlstm_step(&mut g, &p, xv, s),
                CellKind::ConvTimeLstm => convtimelstm_step(&mut g, &p, xv, &map, 37.0, s),
                CellKind::ConvTimeAwareLstm => convtimeawarelstm_step(&mut g, &p, xv, &map, s),
            }
            .unwrap();
            g.value(out.h).data().to_vec()
        };
        let a = run();
        assert!(a.iter().all(|v| v.abs() <= 1.0), "{kind}");
        let b = run();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{kind}");
    }
}

// ---- whole-model checks ---------------------------------------------------

fn random_sequence(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> SceneSequence {
    let mut day = 0u64;
    let base = NaiveDate::from_ymd_opt(2005, 3, 1).unwrap();
    let scenes: Vec<Scene> = (0..=n)
        .map(|_| {
            day += rng.random_range(5..80);
            let grid = Grid::from_fn(h, w, |_, _| rng.random_range(0.0..1.0));
            let mut s = Scene::observed(base + chrono::Days::new(day), grid);
            s.fill_age = Grid::from_fn(h, w, |_, _| {
                if rng.random_bool(0.3) {
                    rng.random_range(0.0..60.0)
                } else {
                    0.0
                }
            });
            s
        })
        .collect();
    SceneSequence::from_scenes("v", &scenes, false).unwrap()
}

fn gradient_check(spec: ModelSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = random_sequence(&mut rng, spec.window_length, 6, 6);
    let model = Forecaster::new(spec, seed).unwrap();
    let checks = check_params(model.params(), 1e-6, |s| model.loss_graph_with(s, &seq)).unwrap();
    worst(&checks)
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for (k, kind) in CellKind::ALL.into_iter().enumerate() {
        let err = gradient_check(ModelSpec::new(kind, vec![4], 2), 70 + k as u64);
        assert!(err < 1e-4, "{kind}: {err}");
    }
    let unet = ModelSpec::new(CellKind::ConvTimeLstm, vec![4, 4, 4], 2).with_unet();
    let err = gradient_check(unet, 80);
    assert!(err < 1e-4, "u-net: {err}");
}

#[test]
fn head_gradient_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for kind in [CellKind::Lstm, CellKind::ConvLstm] {
        let seq = random_sequence(&mut rng, 2, 6, 6);
        let model = Forecaster::new(ModelSpec::new(kind, vec![4], 2), 3).unwrap();
        let checks =
            check_params(model.params(), 1e-6, |s| model.loss_graph_with(s, &seq)).unwrap();
        for c in checks.iter().filter(|c| c.name.starts_with("head.")) {
            assert!(
                c.relative_error < 1e-6,
                "{kind} {}: {}",
                c.name,
                c.relative_error
            );
        }
    }
}

#[test]
fn zero_parameters_forecast_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let seq = random_sequence(&mut rng, 3, 4, 4);
    for kind in CellKind::ALL {
        let mut model = Forecaster::new(ModelSpec::new(kind, vec![3, 2], 3), 1).unwrap();
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            model.params_mut().value_mut(id).data_mut().fill(0.0);
        }
        let f = model.predict(&seq).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0), "{kind}");
    }
}

#[test]
fn constant_hidden_field_gives_constant_forecast() {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let seq = random_sequence(&mut rng, 2, 5, 5);
    let mut model = Forecaster::new(ModelSpec::new(CellKind::ConvLstm, vec![3], 2), 1).unwrap();
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let name = model.params().name(id).to_string();
        let t = model.params_mut().value_mut(id);
        if name.contains(".w_") {
            t.data_mut().fill(0.0);
        } else if name.contains(".b_") {
            t.data_mut().fill(0.7);
        }
    }
    let f = model.predict(&seq).unwrap();
    let first = f.data()[0];
    assert!(first != 0.0);
    assert!(f.data().iter().all(|&v| v == first));
}

#[test]
fn rollout_is_deterministic_and_checks_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    let seq = random_sequence(&mut rng, 1, 6, 6);
    let model = Forecaster::new(ModelSpec::new(CellKind::ConvLstm, vec![4], 1), 2).unwrap();
    let a = model.predict(&seq).unwrap();
    let b = model.predict(&seq).unwrap();
    let bits = |g: &Grid| g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let longer = random_sequence(&mut rng, 2, 6, 6);
    assert!(model.predict(&longer).is_err());
}

#[test]
fn unet_layout_halves_then_restores_resolution() {
    let spec = ModelSpec::new(CellKind::ConvTimeLstm, vec![64, 128, 64], 1).with_unet();
    let model = Forecaster::new(spec, 0).unwrap();
    let layout = model.layer_layout(96, 96);
    let sizes: Vec<usize> = layout.iter().map(|l| l.height).collect();
    assert_eq!(sizes, vec![96, 48, 96]);
    assert_eq!(layout[2].input_channels, 128);
    let mut rng = ChaCha8Rng::seed_from_u64(85);
    let seq = random_sequence(&mut rng, 1, 96, 96);
    let f = model.predict(&seq).unwrap();
    assert_eq!(f.dims(), (96, 96));
}

#[test]
fn unet_rejects_indivisible_extent() {
    let spec = ModelSpec::new(CellKind::ConvLstm, vec![2, 2, 2, 2, 2], 1).with_unet();
    let model = Forecaster::new(spec, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(86);
    assert!(model.predict(&random_sequence(&mut rng, 1, 6, 6)).is_err());
    assert!(model.predict(&random_sequence(&mut rng, 1, 8, 8)).is_ok());
}

#[test]
fn skip_path_carries_gradient_to_first_layer() {
    let spec = ModelSpec::new(CellKind::ConvTimeLstm, vec![3, 4, 3], 2).with_unet();
    let model = Forecaster::new(spec, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(87);
    let seq = random_sequence(&mut rng, 2, 6, 6);
    let grad_of_first_layer = |ablate: bool| {
        let mut g = Graph::new();
        let y = model
            .forward(
                &mut g,
                &seq,
                ForwardOptions {
                    ablate_skip: ablate,
                },
            )
            .unwrap();
        let t = g.constant(seq.target.grid.to_tensor());
        let l = g.mse_loss(y, t).unwrap();
        g.backward(l).unwrap();
        let id = model.params().find("l0.w_xi").unwrap();
        let grad = g
            .param_grads()
            .find(|(p, _)| *p == id)
            .map(|(_, d)| d.to_vec())
            .unwrap();
        grad
    };
    let with = grad_of_first_layer(false);
    let without = grad_of_first_layer(true);
    assert!(without.iter().any(|v| *v != 0.0));
    let diff: f64 = with.iter().zip(&without).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 1e-9);
}

#[test]
fn from_parts_rejects_mismatched_layout() {
    let a = Forecaster::new(ModelSpec::new(CellKind::ConvLstm, vec![4], 2), 0).unwrap();
    let b = ModelSpec::new(CellKind::ConvLstm, vec![5], 2);
    assert!(Forecaster::from_parts(b, a.params().clone()).is_err());
    let same = ModelSpec::new(CellKind::ConvLstm, vec![4], 2);
    assert!(Forecaster::from_parts(same, a.params().clone()).is_ok());
}
