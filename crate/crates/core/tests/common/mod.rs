//! Shared oracles for integration tests. Everything here is independent of
//! the library's own forward/backward code paths: Jacobians come from
//! central differences, determinants from a local LU factorization.

use flowlhd::numerics::store::HasParams;
use flowlhd::{RngStream, Tensor};

/// Central-difference Jacobian of a bijection on one sample (batch size 1).
/// Returns a row-major d x d matrix J[i*d + j] = d f_i / d x_j.
pub fn numeric_jacobian(f: &dyn Fn(&Tensor) -> Tensor, x: &Tensor, h: f64) -> Vec<f64> {
    let d = x.numel();
    let mut jac = vec![0.0; d * d];
    for j in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.data_mut()[j] += h;
        xm.data_mut()[j] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        assert_eq!(fp.numel(), d, "jacobian oracle needs a dimension-preserving map");
        for i in 0..d {
            jac[i * d + j] = (fp.data()[i] - fm.data()[i]) / (2.0 * h);
        }
    }
    jac
}

/// log |det M| via LU factorization with partial pivoting.
pub fn log_abs_det(mat: &[f64], d: usize) -> f64 {
    assert_eq!(mat.len(), d * d);
    let mut a = mat.to_vec();
    let mut log_det = 0.0;
    for col in 0..d {
        let mut pivot = col;
        for row in col + 1..d {
            if a[row * d + col].abs() > a[pivot * d + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * d + col] == 0.0 {
            return f64::NEG_INFINITY;
        }
        if pivot != col {
            for k in 0..d {
                a.swap(col * d + k, pivot * d + k);
            }
        }
        let diag = a[col * d + col];
        log_det += diag.abs().ln();
        for row in col + 1..d {
            let factor = a[row * d + col] / diag;
            for k in col..d {
                a[row * d + k] -= factor * a[col * d + k];
            }
        }
    }
    log_det
}

/// Standard normal CDF via an erfc approximation (abs err < 1.2e-7).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// One-sample Kolmogorov-Smirnov p-value against the standard normal.
pub fn ks_p_value_standard_normal(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = normal_cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    // Kolmogorov asymptotic survival function.
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1.0f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Randomize every parameter except actnorm init flags; keeps flows
/// well-conditioned but non-trivial.
pub fn randomize_params<M: HasParams>(model: &mut M, rng: &mut RngStream, scale: f64) {
    model.visit_params_mut("", &mut |name, t| {
        if name.ends_with(".init_flag") {
            return;
        }
        for v in t.data_mut() {
            *v += scale * rng.normal();
        }
    });
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
