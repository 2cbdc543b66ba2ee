use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{register_layer, CellParams};
use super::step::{
    convlstm_step, convtimeawarelstm_step, convtimelstm_step, lstm_step, timeawarelstm_step,
    timelstm_step, CellState,
};
use super::{CellKind, ModelSpec};
use crate::dataset::SceneSequence;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ndauto::{Graph, ParamId, ParamStore, Tensor, Var};

/// Switches that alter the forward pass for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Replace every U-Net skip tensor by zeros.
    pub ablate_skip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub input_channels: usize,
    pub hidden: usize,
    pub height: usize,
    pub width: usize,
}

/// Learned 1×1 map from upsampled channels to the channel count of the
/// skip tensor it is concatenated with.
#[derive(Debug, Clone, Copy)]
struct UpProjection {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Head {
    weight: ParamId,
    bias: ParamId,
}

/// A stack of recurrent layers with a linear output head, mapping `n` input
/// scenes to a forecast of the next one.
#[derive(Debug, Clone)]
pub struct Forecaster {
    spec: ModelSpec,
    params: ParamStore,
    layers: Vec<CellParams<ParamId>>,
    /// Indexed by layer; `Some` for expanding U-Net layers.
    up: Vec<Option<UpProjection>>,
    head: Head,
}

/// Which spatial level (number of 2× poolings) each layer runs at, and the
/// layer whose output each expanding layer receives as a skip.
fn unet_levels(layers: usize, depth: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    if depth == 0 {
        return (vec![0; layers], vec![None; layers]);
    }
    let mut level = Vec::with_capacity(layers);
    let mut skip = Vec::with_capacity(layers);
    for k in 0..layers {
        if k <= depth {
            level.push(k);
            skip.push(None);
        } else {
            let mirror = layers - 1 - k;
            level.push(mirror);
            skip.push(Some(mirror));
        }
    }
    (level, skip)
}

impl Forecaster {
    /// Randomly initialised model; equal seeds give identical parameters.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let kind = spec.cell_kind;
        let dims = &spec.hidden_dims;
        let depth = spec.unet_depth();
        let (_, skips) = unet_levels(dims.len(), depth);

        let mut layers = Vec::with_capacity(dims.len());
        for (k, &hid) in dims.iter().enumerate() {
            let input_dim = match (k, skips[k]) {
                (0, _) => 1,
                (_, Some(s)) => 2 * dims[s],
                _ => dims[k - 1],
            };
            layers.push(register_layer(
                &mut params,
                &format!("l{k}"),
                kind,
                input_dim,
                hid,
                spec.kernel_size,
                &mut rng,
            ));
        }

        let mut up = vec![None; dims.len()];
        for (k, skip) in skips.iter().enumerate() {
            if let Some(s) = *skip {
                let (cin, cout) = (dims[k - 1], dims[s]);
                let bound = 1.0 / (cin as f64).sqrt();
                let w = uniform(&mut rng, cout * cin, bound);
                up[k] = Some(UpProjection {
                    weight: params
                        .register(format!("up{k}.w"), Tensor::new(vec![cout, cin, 1, 1], w)?),
                    bias: params.register(format!("up{k}.b"), Tensor::zeros(&[cout])?),
                });
            }
        }

        let last = *dims.last().expect("validated non-empty");
        let bound = 1.0 / (last as f64).sqrt();
        let w = uniform(&mut rng, last, bound);
        let head_shape = if kind.is_conv() {
            vec![1, last, 1, 1]
        } else {
            vec![1, last]
        };
        let head = Head {
            weight: params.register("head.w", Tensor::new(head_shape, w)?),
            bias: params.register("head.b", Tensor::zeros(&[1])?),
        };

        Ok(Forecaster {
            spec,
            params,
            layers,
            up,
            head,
        })
    }

    /// Rebuilds a model from a spec and a stored parameter set, checking
    /// that names and shapes match the layout the spec implies.
    pub fn from_parts(spec: ModelSpec, params: ParamStore) -> Result<Self> {
        let mut model = Forecaster::new(spec, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, model {} expects {}",
                params.len(),
                model.spec.cell_kind,
                model.params.len()
            )));
        }
        for id in model.params.ids() {
            let (name, shape) = (model.params.name(id), model.params.value(id).shape());
            if params.name(id) != name || params.value(id).shape() != shape {
                return Err(Error::Data(format!(
                    "checkpoint tensor {} {:?} does not match expected {} {:?}",
                    params.name(id),
                    params.value(id).shape(),
                    name,
                    shape
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Input channels, hidden channels and spatial extent of every layer
    /// for scenes of the given size.
    pub fn layer_layout(&self, height: usize, width: usize) -> Vec<LayerShape> {
        let dims = &self.spec.hidden_dims;
        let (levels, skips) = unet_levels(dims.len(), self.spec.unet_depth());
        (0..dims.len())
            .map(|k| LayerShape {
                input_channels: match (k, skips[k]) {
                    (0, _) => 1,
                    (_, Some(s)) => 2 * dims[s],
                    _ => dims[k - 1],
                },
                hidden: dims[k],
                height: height >> levels[k],
                width: width >> levels[k],
            })
            .collect()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records the forecast of `seq` on `g` using this model's parameters.
    /// The result has shape `[1, H, W]` in scaled units.
    pub fn forward(&self, g: &mut Graph, seq: &SceneSequence, opts: ForwardOptions) -> Result<Var> {
        self.forward_with(&self.params, g, seq, opts)
    }

    /// As [`Forecaster::forward`], with parameters drawn from `store`, which
    /// must share this model's layout.
    pub fn forward_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        seq: &SceneSequence,
        opts: ForwardOptions,
    ) -> Result<Var> {
        let n = self.spec.window_length;
        if seq.len() != n {
            return Err(Error::InvalidArgument(format!(
                "model expects {n} input scenes, sequence has {}",
                seq.len()
            )));
        }
        let (h, w) = seq.dims();
        let kind = self.spec.cell_kind;
        let depth = self.spec.unet_depth();
        let factor = 1usize << depth;
        if h % factor != 0 || w % factor != 0 {
            return Err(Error::InvalidShape {
                shape: vec![h, w],
                reason: format!("u-net of depth {depth} needs extents divisible by {factor}"),
            });
        }
        let (levels, skips) = unet_levels(self.layers.len(), depth);

        let mut xs: Vec<Var> = Vec::with_capacity(n);
        for s in &seq.inputs {
            let t = if kind.is_conv() {
                s.grid.to_tensor()
            } else {
                Tensor::new(vec![h * w, 1], s.grid.data().to_vec())?
            };
            xs.push(g.constant(t));
        }

        let convention = kind.time_convention();
        let gaps: &[f64] = convention.map_or(&[], |c| seq.gaps(c));
        // Elapsed-time maps per level, coarsened by block means.
        let mut maps: Vec<Vec<Grid>> = Vec::new();
        if kind.is_conv() {
            if let Some(c) = convention {
                maps.push(seq.dt_maps(c).to_vec());
                for _ in 0..depth {
                    let prev = maps.last().expect("level 0 present");
                    let next = prev
                        .iter()
                        .map(Grid::downsample_mean)
                        .collect::<Result<Vec<_>>>()?;
                    maps.push(next);
                }
            }
        }

        let mut outputs: Vec<Vec<Var>> = Vec::with_capacity(self.layers.len());
        let mut current = xs;
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                current = if k <= depth {
                    current
                        .iter()
                        .map(|&v| g.pool2(v))
                        .collect::<Result<Vec<_>>>()?
                } else {
                    current
                };
            }
            if let Some(s) = skips[k] {
                let proj = self.up[k].expect("expanding layer has a projection");
                let pw = g.param(store, proj.weight);
                let pb = g.param(store, proj.bias);
                let mut joined = Vec::with_capacity(n);
                for (t, &v) in current.iter().enumerate() {
                    let up = g.upsample2(v)?;
                    let up = g.conv2d(up, pw, Some(pb))?;
                    let skip = if opts.ablate_skip {
                        let shape = g.shape(outputs[s][t]).to_vec();
                        g.constant(Tensor::zeros(&shape)?)
                    } else {
                        outputs[s][t]
                    };
                    joined.push(g.concat(&[up, skip])?);
                }
                current = joined;
            }
            let p = layer.bind(g, store);
            let hid = self.spec.hidden_dims[k];
            let state_shape = if kind.is_conv() {
                let f = 1usize << levels[k];
                vec![hid, h / f, w / f]
            } else {
                vec![h * w, hid]
            };
            let mut state = CellState::zeros(g, &state_shape)?;
            let mut hs = Vec::with_capacity(n);
            for (t, &x) in current.iter().enumerate() {
                state = match kind {
                    CellKind::Lstm => lstm_step(g, &p, x, state)?,
                    CellKind::TimeLstm => {
                        timelstm_step(g, &p, x, gaps[t], self.spec.dt_scale, state)?
                    }
                    CellKind::TimeAwareLstm => timeawarelstm_step(g, &p, x, gaps[t], state)?,
                    CellKind::ConvLstm => convlstm_step(g, &p, x, state)?,
                    CellKind::ConvTimeLstm => {
                        convtimelstm_step(g, &p, x, &maps[levels[k]][t], self.spec.dt_scale, state)?
                    }
                    CellKind::ConvTimeAwareLstm => {
                        convtimeawarelstm_step(g, &p, x, &maps[levels[k]][t], state)?
                    }
                };
                hs.push(state.h);
            }
            outputs.push(hs.clone());
            current = hs;
        }

        let last = *current.last().expect("window length >= 1");
        let hw = g.param(store, self.head.weight);
        let hb = g.param(store, self.head.bias);
        if kind.is_conv() {
            g.conv2d(last, hw, Some(hb))
        } else {
            let y = g.affine(last, hw, Some(hb))?;
            g.reshape(y, vec![1, h, w])
        }
    }

    /// Forecast grid in scaled units.
    pub fn predict(&self, seq: &SceneSequence) -> Result<Grid> {
        let mut g = Graph::new();
        let y = self.forward(&mut g, seq, ForwardOptions::default())?;
        let (h, w) = seq.dims();
        Grid::from_tensor(g.value(y), h, w)
    }

    /// Graph whose output is the MSE between the forecast and the target.
    pub fn loss_graph_with(&self, store: &ParamStore, seq: &SceneSequence) -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let y = self.forward_with(store, &mut g, seq, ForwardOptions::default())?;
        let t = g.constant(seq.target.grid.to_tensor());
        let loss = g.mse_loss(y, t)?;
        Ok((g, loss))
    }

    pub fn loss_graph(&self, seq: &SceneSequence) -> Result<(Graph, Var)> {
        self.loss_graph_with(&self.params, seq)
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}
