//! Central finite-difference gradient oracle.

use crate::error::{Error, Result};
use crate::numerics::store::ParamStore;

/// Central-difference gradient of a deterministic scalar function of the
/// parameters: (f(p+h) - f(p-h)) / 2h per coordinate. Returns a store whose
/// gradient tensors hold the estimates.
pub fn finite_diff_grad(
    mut scalar_fn: impl FnMut(&ParamStore) -> Result<f64>,
    params: &ParamStore,
    h: f64,
) -> Result<ParamStore> {
    if h <= 0.0 {
        return Err(Error::config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut out = params.clone();
    out.zero_grads();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut work = params.clone();
    for name in &names {
        let numel = params.value(name).map(|t| t.numel()).unwrap_or(0);
        let mut grad = out.take_grad(name)?;
        for idx in 0..numel {
            let base = params.value(name).unwrap().data()[idx];
            work.value_mut(name).unwrap().data_mut()[idx] = base + h;
            let f_plus = scalar_fn(&work)?;
            work.value_mut(name).unwrap().data_mut()[idx] = base - h;
            let f_minus = scalar_fn(&work)?;
            work.value_mut(name).unwrap().data_mut()[idx] = base;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::numerics(format!(
                    "objective is non-finite while perturbing {name}[{idx}]"
                )));
            }
            grad.data_mut()[idx] = (f_plus - f_minus) / (2.0 * h);
        }
        out.put_grad(name, grad);
    }
    Ok(out)
}

/// Combined absolute/relative agreement used by every gradient check:
/// |a-b| <= atol + rtol * max(|a|, |b|).
pub fn grads_close(numeric: f64, analytic: f64, rtol: f64, atol: f64) -> bool {
    (numeric - analytic).abs() <= atol + rtol * numeric.abs().max(analytic.abs())
}

/// Assert that analytic gradients in `analytic` match `numeric` for every
/// parameter coordinate; panics with a labelled message otherwise.
pub fn assert_grads_match(numeric: &ParamStore, analytic: &ParamStore, rtol: f64, atol: f64) {
    for (name, entry) in numeric.iter() {
        let ana = analytic.grad(name).unwrap_or_else(|| panic!("missing gradient for {name}"));
        for (i, (&nv, &av)) in entry.grad.data().iter().zip(ana.data()).enumerate() {
            assert!(
                grads_close(nv, av, rtol, atol),
                "gradient mismatch at {name}[{i}]: numeric {nv} vs analytic {av}"
            );
        }
    }
}
