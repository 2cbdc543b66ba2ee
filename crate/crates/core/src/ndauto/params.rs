use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Feasible-set restriction re-imposed after every optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    None,
    NonPositive,
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    constraint: Constraint,
}

/// Named trainable tensors in registration order, each with an accumulated
/// gradient buffer.
///
/// Every store (including every clone) carries a distinct identity so a
/// graph can refuse to mix parameters from two stores.
#[derive(Debug)]
pub struct ParamStore {
    entries: Vec<Entry>,
    uid: u64,
}

fn next_uid() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore {
            entries: Vec::new(),
            uid: next_uid(),
        }
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            entries: self.entries.clone(),
            uid: next_uid(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.register_constrained(name, value, Constraint::None)
    }

    pub fn register_constrained(
        &mut self,
        name: impl Into<String>,
        mut value: Tensor,
        constraint: Constraint,
    ) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "parameter {name:?} registered twice"
        );
        if constraint == Constraint::NonPositive {
            value = project_nonpositive(&value);
        }
        let grad = vec![0.0; value.len()];
        self.entries.push(Entry {
            name,
            value,
            grad,
            constraint,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grad
    }

    pub fn constraint(&self, id: ParamId) -> Constraint {
        self.entries[id.0].constraint
    }

    /// Replaces a parameter's value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: entry.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        entry.value = value;
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Adds the gradients a graph computed for bound parameters.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for (id, grad) in graph.param_grads() {
            add_into(&mut self.entries[id.0].grad, grad);
        }
    }

    /// Adds an externally collected gradient set (one buffer per parameter,
    /// in registration order).
    pub fn accumulate_flat(&mut self, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), self.entries.len());
        for (e, g) in self.entries.iter_mut().zip(grads) {
            add_into(&mut e.grad, g);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn apply_constraints(&mut self) {
        for e in &mut self.entries {
            if e.constraint == Constraint::NonPositive {
                e.value.data_mut().iter_mut().for_each(|v| *v = v.min(0.0));
            }
        }
    }

    pub(crate) fn entry_parts_mut(&mut self, id: ParamId) -> (&mut Tensor, &[f64]) {
        let e = &mut self.entries[id.0];
        (&mut e.value, &e.grad)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    assert_eq!(dst.len(), src.len());
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Elementwise `min(x, 0)`.
pub fn project_nonpositive(w: &Tensor) -> Tensor {
    let data = w.data().iter().map(|v| v.min(0.0)).collect();
    Tensor::new(w.shape().to_vec(), data).expect("shape unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_clamps_positive_entries() {
        let w = Tensor::vector(vec![-1.0, 0.5, 0.0]).unwrap();
        assert_eq!(project_nonpositive(&w).data(), &[-1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_is_idempotent_on_nonpositive_input() {
        let w = Tensor::vector(vec![-3.0, -0.25, 0.0]).unwrap();
        let once = project_nonpositive(&w);
        assert_eq!(once, w);
        assert_eq!(project_nonpositive(&once), once);
    }

    #[test]
    fn constrained_registration_projects_immediately() {
        let mut store = ParamStore::new();
        let id = store.register_constrained(
            "w_t1",
            Tensor::vector(vec![0.3, -0.2]).unwrap(),
            Constraint::NonPositive,
        );
        assert_eq!(store.value(id).data(), &[0.0, -0.2]);
    }

    #[test]
    fn set_value_rejects_shape_change() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::zeros(&[2, 2]).unwrap());
        assert!(store.set_value(id, Tensor::zeros(&[4]).unwrap()).is_err());
    }
}
