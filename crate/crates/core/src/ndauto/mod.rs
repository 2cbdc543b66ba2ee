//! Dense double-precision tensors with a tape-based reverse-mode
//! differentiation engine, parameter storage, the Adam optimizer and
//! parameter checkpoints.
//!
//! Forward computation is recorded on a [`Graph`] as it executes. Every
//! operation returns a [`Var`] handle; [`Graph::backward`] then walks the
//! recorded nodes once, in reverse execution order, accumulating gradients
//! into every node that feeds a differentiable result.
//!
//! Parameters live outside any graph in a [`ParamStore`]. A graph binds a
//! parameter with [`Graph::param`], and [`ParamStore::accumulate_grads`]
//! pulls the parameter gradients back out once the backward pass is done.

mod adam;
mod checkpoint;
mod gemm;
pub mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, ParamRecord,
};
pub use graph::{ElementwiseOp, Graph, Var};
pub use params::{project_nonpositive, Constraint, ParamId, ParamStore};
pub use tensor::Tensor;
