//! Named parameter/gradient storage.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// One named parameter and its gradient accumulator (always the same shape).
#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered map of named parameter tensors with matching gradient tensors.
/// Iteration order is ascending by name, which fixes the reduction order of
/// global quantities like the gradient norm.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::State(format!("duplicate parameter name {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.insert(name.to_string(), ParamEntry { value, grad });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.grad)
    }

    /// Move a gradient tensor out for in-place accumulation; pair with
    /// [`ParamStore::put_grad`].
    pub fn take_grad(&mut self, name: &str) -> Result<Tensor> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name}")))?;
        Ok(std::mem::replace(&mut entry.grad, Tensor::zeros(&[0])))
    }

    pub fn put_grad(&mut self, name: &str, grad: Tensor) {
        if let Some(entry) = self.entries.get_mut(name) {
            debug_assert_eq!(grad.shape(), entry.value.shape());
            entry.grad = grad;
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("unknown parameter {name}")))?;
        if entry.grad.shape() != delta.shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match parameter {name} {:?}",
                delta.shape(),
                entry.grad.shape()
            )));
        }
        entry.grad.add_assign(delta)
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            for v in entry.grad.data_mut() {
                *v = 0.0;
            }
        }
    }

    /// Global L2 norm of all gradients, reduced in ascending name order.
    pub fn grad_norm(&self) -> f64 {
        let mut sq = 0.0;
        for entry in self.entries.values() {
            sq += entry.grad.sq_sum();
        }
        sq.sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for entry in self.entries.values_mut() {
            entry.grad.scale_assign(factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }
}

/// Implemented by every layer that owns trainable tensors.
pub trait HasParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params("p", &mut |_, t| n += t.numel());
        n
    }

    /// Snapshot all parameters (with zeroed gradients).
    fn param_store(&self, prefix: &str) -> ParamStore {
        let mut store = ParamStore::new();
        self.visit_params(prefix, &mut |name, t| {
            store.insert(name, t.clone()).expect("parameter names must be unique");
        });
        store
    }

    /// Overwrite parameters from a store; every visited name must exist
    /// with a matching shape.
    fn load_params(&mut self, store: &ParamStore, prefix: &str) -> Result<()> {
        let mut missing: Vec<String> = Vec::new();
        self.visit_params_mut(prefix, &mut |name, t| match store.value(name) {
            Some(v) if v.shape() == t.shape() => *t = v.clone(),
            _ => missing.push(name.to_string()),
        });
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::State(format!("missing or mismatched parameters: {missing:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_shapes_paired() {
        let mut s = ParamStore::new();
        s.insert("a.weight", Tensor::zeros(&[2, 3])).unwrap();
        assert!(s.insert("a.weight", Tensor::zeros(&[2, 3])).is_err());
        assert_eq!(s.grad("a.weight").unwrap().shape(), &[2, 3]);
        let bad = Tensor::zeros(&[3, 2]);
        assert!(s.accumulate_grad("a.weight", &bad).is_err());
    }

    #[test]
    fn grad_norm_and_scale() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(&[2])).unwrap();
        s.accumulate_grad("w", &Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap()).unwrap();
        assert!((s.grad_norm() - 5.0).abs() < 1e-12);
        s.scale_grads(0.5);
        assert!((s.grad_norm() - 2.5).abs() < 1e-12);
        s.zero_grads();
        assert_eq!(s.grad_norm(), 0.0);
    }
}
