//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use crate::numerics::store::ParamStore;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> AdamHyper {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    moments: BTreeMap<String, (Tensor, Tensor)>,
    pub t: u64,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }
}

/// One Adam update: store values move against store gradients.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, hyper: &AdamHyper) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (name, entry) in store.iter_mut() {
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (Tensor::zeros(entry.value.shape()), Tensor::zeros(entry.value.shape())));
        let g = entry.grad.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        let pd = entry.value.data_mut();
        for i in 0..g.len() {
            md[i] = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * g[i];
            vd[i] = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
}
