use std::collections::HashMap;

use super::gemm::{gemm, MatRef};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations. `Add`, `Sub` and `Mul` are binary and require
/// equal shapes; the rest are unary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Scale(f64),
    AddScalar(f64),
}

impl ElementwiseOp {
    fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Affine {
        x: usize,
        w: usize,
        b: Option<usize>,
        rows: usize,
        inner: usize,
        out: usize,
    },
    Conv2d {
        x: usize,
        k: usize,
        b: Option<usize>,
        cols: Option<Vec<f64>>,
        geom: ConvGeom,
    },
    Pool2 {
        x: usize,
        argmax: Vec<usize>,
    },
    Upsample2 {
        x: usize,
        planes: usize,
        h: usize,
        w: usize,
    },
    Concat(Vec<usize>),
    Slice {
        x: usize,
        offset: usize,
    },
    Reshape(usize),
    Mse {
        pred: usize,
        target: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    cin: usize,
    cout: usize,
    ksize: usize,
    h: usize,
    w: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.cin * self.ksize * self.ksize
    }

    fn pixels(&self) -> usize {
        self.h * self.w
    }
}

/// Record of executed operations, in execution order.
///
/// Nodes are stored column-wise so that the backward pass can read forward
/// values while it writes gradients.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    requires: Vec<bool>,
    ops: Vec<Op>,
    bound: Vec<(ParamId, usize)>,
    bound_lookup: HashMap<ParamId, Var>,
    store: Option<u64>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, requires: bool, op: Op) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.requires.push(requires);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Binds a stored parameter. Binding the same parameter twice returns
    /// the same handle, so every use accumulates into one gradient.
    ///
    /// # Panics
    ///
    /// If parameters from two different stores are bound on one graph.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let uid = *self.store.get_or_insert(store.uid());
        assert_eq!(
            uid,
            store.uid(),
            "a graph binds parameters from a single store"
        );
        if let Some(&v) = self.bound_lookup.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), true, Op::Leaf);
        self.bound.push((id, v.0));
        self.bound_lookup.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    /// Gradient of the last backward pass, if any flowed into `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradients of bound parameters after [`Graph::backward`].
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> + '_ {
        self.bound
            .iter()
            .filter_map(|&(id, node)| self.grads[node].as_deref().map(|g| (id, g)))
    }

    fn req(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&i| self.requires[i])
    }

    // ---- pointwise -------------------------------------------------------

    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Option<Var>) -> Result<Var> {
        match (op.is_binary(), b) {
            (true, Some(b)) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                if sa != sb {
                    return Err(Error::ShapeMismatch {
                        op: "elementwise",
                        left: sa.to_vec(),
                        right: sb.to_vec(),
                    });
                }
                let (x, y) = (self.values[a.0].data(), self.values[b.0].data());
                let data: Vec<f64> = match op {
                    ElementwiseOp::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
                    ElementwiseOp::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
                    ElementwiseOp::Mul => x.iter().zip(y).map(|(p, q)| p * q).collect(),
                    _ => unreachable!(),
                };
                let value = Tensor::new(sa.to_vec(), data)?;
                let node = match op {
                    ElementwiseOp::Add => Op::Add(a.0, b.0),
                    ElementwiseOp::Sub => Op::Sub(a.0, b.0),
                    _ => Op::Mul(a.0, b.0),
                };
                let req = self.req(&[a.0, b.0]);
                Ok(self.push(value, req, node))
            }
            (true, None) => Err(Error::InvalidArgument(format!("{op:?} needs two operands"))),
            (false, Some(_)) => Err(Error::InvalidArgument(format!(
                "{op:?} takes a single operand"
            ))),
            (false, None) => {
                let src = &self.values[a.0];
                let data: Vec<f64> = match op {
                    ElementwiseOp::Sigmoid => src.data().iter().map(|&v| sigmoid(v)).collect(),
                    ElementwiseOp::Tanh => src.data().iter().map(|v| v.tanh()).collect(),
                    ElementwiseOp::Scale(k) => src.data().iter().map(|v| v * k).collect(),
                    ElementwiseOp::AddScalar(k) => src.data().iter().map(|v| v + k).collect(),
                    _ => unreachable!(),
                };
                let value = Tensor::new(src.shape().to_vec(), data)?;
                let node = match op {
                    ElementwiseOp::Sigmoid => Op::Sigmoid(a.0),
                    ElementwiseOp::Tanh => Op::Tanh(a.0),
                    ElementwiseOp::Scale(k) => Op::Scale(a.0, k),
                    _ => Op::AddScalar(a.0),
                };
                let req = self.requires[a.0];
                Ok(self.push(value, req, node))
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, a, Some(b))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, Some(b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseOp::Sigmoid, a, None)
            .expect("unary op")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.elementwise(ElementwiseOp::Tanh, a, None)
            .expect("unary op")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.elementwise(ElementwiseOp::Scale(k), a, None)
            .expect("unary op")
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.elementwise(ElementwiseOp::AddScalar(k), a, None)
            .expect("unary op")
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    // ---- linear maps -----------------------------------------------------

    /// `W x + b` for a vector `x` of shape `[in]`, or row-wise `x Wᵀ + b` for
    /// a batch of shape `[rows, in]`. `W` is `[out, in]`, `b` is `[out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (rows, inner, batched) = match xs.as_slice() {
            [n] => (1, *n, false),
            [r, n] => (*r, *n, true),
            _ => {
                return Err(Error::InvalidShape {
                    shape: xs,
                    reason: "affine input must be a vector or a matrix of row vectors".into(),
                })
            }
        };
        if ws.len() != 2 || ws[1] != inner {
            return Err(Error::ShapeMismatch {
                op: "affine",
                left: xs,
                right: ws,
            });
        }
        let out = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(Error::ShapeMismatch {
                    op: "affine bias",
                    left: ws,
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let mut y = vec![0.0; rows * out];
        if let Some(b) = b {
            let bias = self.values[b.0].data();
            for row in y.chunks_exact_mut(out) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            MatRef::new(self.values[x.0].data(), rows, inner),
            MatRef::new(self.values[w.0].data(), out, inner).t(),
            if b.is_some() { 1.0 } else { 0.0 },
            &mut y,
        );
        let shape = if batched { vec![rows, out] } else { vec![out] };
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|v| v.0));
        let req = self.req(&deps);
        Ok(self.push(
            Tensor::new(shape, y)?,
            req,
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.map(|v| v.0),
                rows,
                inner,
                out,
            },
        ))
    }

    /// Same-padded, stride-1 convolution of a `[Cin, H, W]` input with a
    /// `[Cout, Cin, k, k]` kernel (k odd), plus an optional per-channel bias.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(k).to_vec();
        let [cin, h, w] = xs[..] else {
            return Err(Error::InvalidShape {
                shape: xs,
                reason: "conv2d input must be [channels, height, width]".into(),
            });
        };
        let [cout, kcin, kh, kw] = ks[..] else {
            return Err(Error::InvalidShape {
                shape: ks,
                reason: "conv2d kernel must be [out, in, k, k]".into(),
            });
        };
        if kh != kw || kh % 2 == 0 {
            return Err(Error::InvalidShape {
                shape: ks,
                reason: "conv2d kernel must be square with odd size".into(),
            });
        }
        if kcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: xs,
                right: ks,
            });
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    left: ks,
                    right: self.shape(b).to_vec(),
                });
            }
        }
        let geom = ConvGeom {
            cin,
            cout,
            ksize: kh,
            h,
            w,
        };
        let cols = im2col(self.values[x.0].data(), geom);
        let mut y = vec![0.0; cout * h * w];
        if let Some(b) = b {
            let bias = self.values[b.0].data();
            for (plane, &bv) in y.chunks_exact_mut(h * w).zip(bias) {
                plane.fill(bv);
            }
        }
        gemm(
            MatRef::new(self.values[k.0].data(), cout, geom.patch()),
            MatRef::new(&cols, geom.patch(), geom.pixels()),
            if b.is_some() { 1.0 } else { 0.0 },
            &mut y,
        );
        let mut deps = vec![x.0, k.0];
        deps.extend(b.map(|v| v.0));
        let req = self.req(&deps);
        let keep_cols = self.requires[k.0];
        Ok(self.push(
            Tensor::new(vec![cout, h, w], y)?,
            req,
            Op::Conv2d {
                x: x.0,
                k: k.0,
                b: b.map(|v| v.0),
                cols: keep_cols.then_some(cols),
                geom,
            },
        ))
    }

    // ---- resampling ------------------------------------------------------

    /// 2×2 max pooling over the last two axes. Both must be even.
    pub fn pool2(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (planes, h, w) = split_planes(&shape, "pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::InvalidShape {
                shape,
                reason: "pool2 needs even spatial extents".into(),
            });
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.values[x.0].data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for r in 0..oh {
                for c in 0..ow {
                    let mut best = base + 2 * r * w + 2 * c;
                    for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * r + dr) * w + 2 * c + dc;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let mut oshape = shape;
        let n = oshape.len();
        oshape[n - 2] = oh;
        oshape[n - 1] = ow;
        let req = self.requires[x.0];
        Ok(self.push(Tensor::new(oshape, out)?, req, Op::Pool2 { x: x.0, argmax }))
    }

    /// Nearest-neighbour doubling of the last two axes.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (planes, h, w) = split_planes(&shape, "upsample2")?;
        let src = self.values[x.0].data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; planes * oh * ow];
        for p in 0..planes {
            for r in 0..oh {
                for c in 0..ow {
                    out[p * oh * ow + r * ow + c] = src[p * h * w + (r / 2) * w + c / 2];
                }
            }
        }
        let mut oshape = shape;
        let n = oshape.len();
        oshape[n - 2] = oh;
        oshape[n - 1] = ow;
        let req = self.requires[x.0];
        Ok(self.push(
            Tensor::new(oshape, out)?,
            req,
            Op::Upsample2 {
                x: x.0,
                planes,
                h,
                w,
            },
        ))
    }

    // ---- structural ------------------------------------------------------

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        };
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: self.shape(*first).to_vec(),
                    right: s.to_vec(),
                });
            }
            lead += s[0];
            data.extend_from_slice(self.values[p.0].data());
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        let idx: Vec<usize> = parts.iter().map(|v| v.0).collect();
        let req = self.req(&idx);
        Ok(self.push(Tensor::new(shape, data)?, req, Op::Concat(idx)))
    }

    /// Splits along the leading axis into consecutive blocks of the given
    /// sizes, which must sum to the leading extent.
    pub fn split(&mut self, x: Var, sizes: &[usize]) -> Result<Vec<Var>> {
        let shape = self.shape(x).to_vec();
        if sizes.iter().sum::<usize>() != shape[0] || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "split sizes {sizes:?} do not partition leading extent of {shape:?}"
            )));
        }
        let stride: usize = shape[1..].iter().product();
        let req = self.requires[x.0];
        let mut offset = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            let mut sub = shape.clone();
            sub[0] = s;
            let data = self.values[x.0].data()[offset..offset + s * stride].to_vec();
            out.push(self.push(Tensor::new(sub, data)?, req, Op::Slice { x: x.0, offset }));
            offset += s * stride;
        }
        Ok(out)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.values[x.0].clone().reshape(shape)?;
        let req = self.requires[x.0];
        Ok(self.push(value, req, Op::Reshape(x.0)))
    }

    // ---- loss ------------------------------------------------------------

    /// Mean squared error over all elements; a one-element result.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(Error::ShapeMismatch {
                op: "mse_loss",
                left: sp.to_vec(),
                right: st.to_vec(),
            });
        }
        let (p, t) = (self.values[pred.0].data(), self.values[target.0].data());
        let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let req = self.req(&[pred.0, target.0]);
        Ok(self.push(
            Tensor::scalar(sum / p.len() as f64),
            req,
            Op::Mse {
                pred: pred.0,
                target: target.0,
            },
        ))
    }

    // ---- reverse pass ----------------------------------------------------

    /// Reverse sweep from a one-element output. Gradients from any earlier
    /// sweep are discarded first.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.values[output.0].len() != 1 {
            return Err(Error::InvalidShape {
                shape: self.values[output.0].shape().to_vec(),
                reason: "backward needs a one-element output".into(),
            });
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.requires[output.0] {
            return Ok(());
        }
        self.grads[output.0] = Some(vec![1.0]);
        let Graph {
            values,
            grads,
            requires,
            ops,
            ..
        } = self;
        for i in (0..=output.0).rev() {
            if !requires[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut sink = Sink {
                grads: &mut grads[..i],
                requires,
                values,
            };
            propagate(&ops[i], &values[i], &g, &mut sink);
            grads[i] = Some(g);
        }
        Ok(())
    }
}

/// Gradient slots of all nodes strictly before the one being processed.
struct Sink<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    requires: &'a [bool],
    values: &'a [Tensor],
}

impl Sink<'_> {
    fn slot(&mut self, idx: usize) -> Option<&mut Vec<f64>> {
        if !self.requires[idx] {
            return None;
        }
        let len = self.values[idx].len();
        Some(self.grads[idx].get_or_insert_with(|| vec![0.0; len]))
    }

    fn add_scaled(&mut self, idx: usize, g: &[f64], k: f64) {
        if let Some(s) = self.slot(idx) {
            s.iter_mut().zip(g).for_each(|(d, v)| *d += k * v);
        }
    }
}

fn propagate(op: &Op, out: &Tensor, g: &[f64], sink: &mut Sink<'_>) {
    let values = sink.values;
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            sink.add_scaled(a, g, 1.0);
            sink.add_scaled(b, g, 1.0);
        }
        Op::Sub(a, b) => {
            sink.add_scaled(a, g, 1.0);
            sink.add_scaled(b, g, -1.0);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (values[a].data(), values[b].data());
            if let Some(s) = sink.slot(a) {
                for ((d, gi), bi) in s.iter_mut().zip(g).zip(vb) {
                    *d += gi * bi;
                }
            }
            if let Some(s) = sink.slot(b) {
                for ((d, gi), ai) in s.iter_mut().zip(g).zip(va) {
                    *d += gi * ai;
                }
            }
        }
        Op::Sigmoid(a) => {
            if let Some(s) = sink.slot(a) {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * y * (1.0 - y);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(s) = sink.slot(a) {
                for ((d, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *d += gi * (1.0 - y * y);
                }
            }
        }
        Op::Scale(a, k) => sink.add_scaled(a, g, k),
        Op::AddScalar(a) => sink.add_scaled(a, g, 1.0),
        Op::Affine {
            x,
            w,
            b,
            rows,
            inner,
            out: n_out,
        } => {
            let dy = MatRef::new(g, rows, n_out);
            if let Some(s) = sink.slot(x) {
                gemm(dy, MatRef::new(values[w].data(), n_out, inner), 1.0, s);
            }
            if let Some(s) = sink.slot(w) {
                gemm(dy.t(), MatRef::new(values[x].data(), rows, inner), 1.0, s);
            }
            if let Some(b) = b {
                if let Some(s) = sink.slot(b) {
                    for row in g.chunks_exact(n_out) {
                        s.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                }
            }
        }
        Op::Conv2d {
            x,
            k,
            b,
            ref cols,
            geom,
        } => {
            let dy = MatRef::new(g, geom.cout, geom.pixels());
            if let Some(s) = sink.slot(k) {
                let cols = cols
                    .as_ref()
                    .expect("columns kept when kernel needs a gradient");
                gemm(
                    dy,
                    MatRef::new(cols, geom.patch(), geom.pixels()).t(),
                    1.0,
                    s,
                );
            }
            if sink.requires[x] {
                let mut dcols = vec![0.0; geom.patch() * geom.pixels()];
                gemm(
                    MatRef::new(values[k].data(), geom.cout, geom.patch()).t(),
                    dy,
                    0.0,
                    &mut dcols,
                );
                let s = sink.slot(x).expect("requires checked");
                col2im_add(&dcols, geom, s);
            }
            if let Some(b) = b {
                if let Some(s) = sink.slot(b) {
                    for (d, plane) in s.iter_mut().zip(g.chunks_exact(geom.pixels())) {
                        *d += plane.iter().sum::<f64>();
                    }
                }
            }
        }
        Op::Pool2 { x, ref argmax } => {
            if let Some(s) = sink.slot(x) {
                for (&src, gi) in argmax.iter().zip(g) {
                    s[src] += gi;
                }
            }
        }
        Op::Upsample2 { x, planes, h, w } => {
            if let Some(s) = sink.slot(x) {
                let (oh, ow) = (2 * h, 2 * w);
                for p in 0..planes {
                    for r in 0..oh {
                        for c in 0..ow {
                            s[p * h * w + (r / 2) * w + c / 2] += g[p * oh * ow + r * ow + c];
                        }
                    }
                }
            }
        }
        Op::Concat(ref parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = values[p].len();
                sink.add_scaled(p, &g[offset..offset + len], 1.0);
                offset += len;
            }
        }
        Op::Slice { x, offset } => {
            if let Some(s) = sink.slot(x) {
                s[offset..offset + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, v)| *d += v);
            }
        }
        Op::Reshape(x) => sink.add_scaled(x, g, 1.0),
        Op::Mse { pred, target } => {
            let (p, t) = (values[pred].data(), values[target].data());
            let k = 2.0 * g[0] / p.len() as f64;
            if let Some(s) = sink.slot(pred) {
                for ((d, a), b) in s.iter_mut().zip(p).zip(t) {
                    *d += k * (a - b);
                }
            }
            if let Some(s) = sink.slot(target) {
                for ((d, a), b) in s.iter_mut().zip(p).zip(t) {
                    *d -= k * (a - b);
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn split_planes(shape: &[usize], op: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("{op} needs at least two axes"),
        });
    }
    let n = shape.len();
    Ok((shape[..n - 2].iter().product(), shape[n - 2], shape[n - 1]))
}

fn im2col(x: &[f64], geom: ConvGeom) -> Vec<f64> {
    let ConvGeom {
        cin, ksize, h, w, ..
    } = geom;
    let pad = (ksize / 2) as isize;
    let hw = h * w;
    if ksize == 1 {
        return x.to_vec();
    }
    let mut cols = vec![0.0; geom.patch() * hw];
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..ksize {
            for kx in 0..ksize {
                let row = (ci * ksize + ky) * ksize + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let (lo, hi) = valid_range(w, dx);
                    for xo in lo..hi {
                        dst_row[xo] = src_row[(xo as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(cols: &[f64], geom: ConvGeom, dx_out: &mut [f64]) {
    let ConvGeom {
        cin, ksize, h, w, ..
    } = geom;
    let pad = (ksize / 2) as isize;
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut dx_out[ci * hw..(ci + 1) * hw];
        for ky in 0..ksize {
            for kx in 0..ksize {
                let row = (ci * ksize + ky) * ksize + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let (lo, hi) = valid_range(w, dx);
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src_row = &src[y * w..(y + 1) * w];
                    for xo in lo..hi {
                        dst_row[(xo as isize + dx) as usize] += src_row[xo];
                    }
                }
            }
        }
    }
}

/// Output columns `x` for which `x + dx` lies inside `[0, w)`.
#[inline]
fn valid_range(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo.min(hi), hi)
}
