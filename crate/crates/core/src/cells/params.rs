use rand::Rng;

use super::CellKind;
use crate::ndauto::{Constraint, Graph, ParamId, ParamStore, Tensor, Var};

/// Weights feeding one gate: an input projection, optional hidden-state and
/// elapsed-time projections, and a bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate<T> {
    pub input: T,
    pub hidden: Option<T>,
    pub time: Option<T>,
    pub bias: T,
}

/// Short-term memory extractor of the Time-Aware cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    pub weight: T,
    pub bias: T,
}

/// All weights of one recurrent layer. Which optional parts are present
/// depends on the cell kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams<T> {
    pub input_gate: Gate<T>,
    pub forget_gate: Option<Gate<T>>,
    pub candidate: Gate<T>,
    pub output_gate: Gate<T>,
    pub time_gate1: Option<Gate<T>>,
    pub time_gate2: Option<Gate<T>>,
    pub decomposition: Option<Decomposition<T>>,
}

impl<T: Copy> Gate<T> {
    pub fn map<U>(&self, mut f: impl FnMut(T) -> U) -> Gate<U> {
        Gate {
            input: f(self.input),
            hidden: self.hidden.map(&mut f),
            time: self.time.map(&mut f),
            bias: f(self.bias),
        }
    }
}

impl<T: Copy> CellParams<T> {
    pub fn map<U>(&self, mut f: impl FnMut(T) -> U) -> CellParams<U> {
        CellParams {
            input_gate: self.input_gate.map(&mut f),
            forget_gate: self.forget_gate.map(|g| g.map(&mut f)),
            candidate: self.candidate.map(&mut f),
            output_gate: self.output_gate.map(&mut f),
            time_gate1: self.time_gate1.map(|g| g.map(&mut f)),
            time_gate2: self.time_gate2.map(|g| g.map(&mut f)),
            decomposition: self.decomposition.map(|d| Decomposition {
                weight: f(d.weight),
                bias: f(d.bias),
            }),
        }
    }
}

impl CellParams<ParamId> {
    /// Binds every weight of the layer on a graph.
    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> CellParams<Var> {
        self.map(|id| g.param(store, id))
    }
}

struct LayerBuilder<'a, R> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
    prefix: &'a str,
    conv: bool,
    kernel: usize,
    input_dim: usize,
    hidden: usize,
}

impl<R: Rng> LayerBuilder<'_, R> {
    fn weight(&mut self, name: &str, fan: usize, c: Constraint) -> ParamId {
        let k = self.kernel;
        let shape = if self.conv {
            vec![self.hidden, fan, k, k]
        } else {
            vec![self.hidden, fan]
        };
        let bound = 1.0 / ((fan * k * k) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v = self.rng.random_range(-bound..=bound);
                if c == Constraint::NonPositive {
                    -v.abs()
                } else {
                    v
                }
            })
            .collect();
        self.store.register_constrained(
            format!("{}.{name}", self.prefix),
            Tensor::new(shape, data).expect("positive extents"),
            c,
        )
    }

    fn bias(&mut self, name: &str, value: f64) -> ParamId {
        self.store.register(
            format!("{}.{name}", self.prefix),
            Tensor::filled(&[self.hidden], value).expect("positive extent"),
        )
    }

    /// Gate fed by the input and the previous hidden state.
    fn recurrent(&mut self, tag: &str, bias: f64) -> Gate<ParamId> {
        Gate {
            input: self.weight(&format!("w_x{tag}"), self.input_dim, Constraint::None),
            hidden: Some(self.weight(&format!("w_h{tag}"), self.hidden, Constraint::None)),
            time: None,
            bias: self.bias(&format!("b_{tag}"), bias),
        }
    }

    /// Gate fed by the input and the elapsed time.
    fn timed(&mut self, tag: &str, time: Constraint) -> Gate<ParamId> {
        Gate {
            input: self.weight(&format!("w_x{tag}"), self.input_dim, Constraint::None),
            hidden: None,
            time: Some(self.weight(&format!("w_t{tag}"), 1, time)),
            bias: self.bias(&format!("b_{tag}"), 0.0),
        }
    }
}

/// Registers a layer's weights with uniform `±1/√fan_in` initialisation,
/// zero biases and a unit forget-gate bias. Registration order fixes the
/// checkpoint layout and the random stream.
pub fn register_layer(
    store: &mut ParamStore,
    prefix: &str,
    kind: CellKind,
    input_dim: usize,
    hidden: usize,
    kernel: usize,
    rng: &mut impl Rng,
) -> CellParams<ParamId> {
    let conv = kind.is_conv();
    let mut b = LayerBuilder {
        store,
        rng,
        prefix,
        conv,
        kernel: if conv { kernel } else { 1 },
        input_dim,
        hidden,
    };
    match kind {
        CellKind::Lstm | CellKind::ConvLstm => CellParams {
            input_gate: b.recurrent("i", 0.0),
            forget_gate: Some(b.recurrent("f", 1.0)),
            candidate: b.recurrent("c", 0.0),
            output_gate: b.recurrent("o", 0.0),
            time_gate1: None,
            time_gate2: None,
            decomposition: None,
        },
        CellKind::TimeAwareLstm | CellKind::ConvTimeAwareLstm => CellParams {
            input_gate: b.recurrent("i", 0.0),
            forget_gate: Some(b.recurrent("f", 1.0)),
            candidate: b.recurrent("c", 0.0),
            output_gate: b.recurrent("o", 0.0),
            time_gate1: None,
            time_gate2: None,
            decomposition: Some(Decomposition {
                weight: b.weight("w_d", hidden, Constraint::None),
                bias: b.bias("b_d", 0.0),
            }),
        },
        CellKind::TimeLstm | CellKind::ConvTimeLstm => {
            let input_gate = b.recurrent("i", 0.0);
            let t1 = b.timed("1", Constraint::NonPositive);
            let t2 = b.timed("2", Constraint::None);
            let candidate = b.recurrent("c", 0.0);
            let mut output_gate = b.recurrent("o", 0.0);
            if kind == CellKind::ConvTimeLstm {
                output_gate.time = Some(b.weight("w_to", 1, Constraint::None));
            }
            CellParams {
                input_gate,
                forget_gate: None,
                candidate,
                output_gate,
                time_gate1: Some(t1),
                time_gate2: Some(t2),
                decomposition: None,
            }
        }
    }
}
