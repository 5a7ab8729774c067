//! Variational dequantization: discrete pixels x become continuous values
//! (x + u)/256 with u in [0,1) drawn from a learned conditional flow over
//! uniform noise. The per-sample log correction -log q(u|x) - D*log(256)
//! makes the continuous likelihood a lower bound on the discrete one.

use crate::error::{Error, Result};
use crate::flow::coupling::{CouplingCache, CouplingLayer};
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

/// Margin keeping the logit of the raw noise finite.
const NOISE_ALPHA: f64 = 1e-5;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Dequantization stage. With no couplings this is uniform dequantization
/// (q = 1); with couplings the noise is transformed by a conditional flow:
/// logit squash -> couplings (conditioned on the image) -> sigmoid.
#[derive(Clone, Debug)]
pub struct DequantStage {
    pub couplings: Vec<CouplingLayer>,
}

pub struct DequantCache {
    v_pre: Tensor,  // input of the final sigmoid
    u: Tensor,      // sigmoid output
    coupling_caches: Vec<CouplingCache>,
}

impl DequantStage {
    pub fn uniform() -> DequantStage {
        DequantStage { couplings: Vec::new() }
    }

    pub fn variational(couplings: Vec<CouplingLayer>) -> DequantStage {
        DequantStage { couplings }
    }

    pub fn is_variational(&self) -> bool {
        !self.couplings.is_empty()
    }

    fn validate_inputs(x_int: &Tensor, noise: &Tensor) -> Result<()> {
        if x_int.shape() != noise.shape() {
            return Err(Error::shape("noise tensor must match image shape"));
        }
        for &v in x_int.data() {
            if v < 0.0 || v > 255.0 || v.fract() != 0.0 {
                return Err(Error::data(format!("pixel value {v} is not an integer in [0, 255]")));
            }
        }
        for &u in noise.data() {
            if !(0.0..1.0).contains(&u) {
                return Err(Error::numerics(format!("dequantization noise {u} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Returns the continuous tensor in [0, 1) and the per-sample log
    /// correction (already including -D log 256).
    pub fn forward(
        &self,
        x_int: &Tensor,
        noise: &Tensor,
        want_cache: bool,
    ) -> Result<(Tensor, Vec<f64>, Option<DequantCache>)> {
        Self::validate_inputs(x_int, noise)?;
        let (n, _c, _h, _w) = x_int.dims4()?;
        let d = x_int.sample_len() as f64;
        let ln256 = 256.0f64.ln();

        if !self.is_variational() {
            let mut y = Tensor::zeros(x_int.shape());
            for (yv, (&xv, &uv)) in
                y.data_mut().iter_mut().zip(x_int.data().iter().zip(noise.data()))
            {
                *yv = xv / 256.0 + uv / 256.0;
            }
            let corr = vec![-d * ln256; n];
            return Ok((y, corr, None));
        }

        let cond = x_int.map(|v| v / 255.0 * 2.0 - 1.0);
        let mut ldj = vec![0.0; n];

        // Affine margin then logit: maps [0,1) noise into R.
        let mut v = Tensor::zeros(noise.shape());
        for s in 0..n {
            let ns = noise.sample(s);
            let vs = v.sample_mut(s);
            let mut acc = d * (1.0 - NOISE_ALPHA).ln();
            for (vv, &eps) in vs.iter_mut().zip(ns) {
                let a = eps * (1.0 - NOISE_ALPHA) + 0.5 * NOISE_ALPHA;
                *vv = a.ln() - (1.0 - a).ln();
                acc += -a.ln() - (1.0 - a).ln();
            }
            ldj[s] += acc;
        }

        let mut coupling_caches = Vec::new();
        for layer in &self.couplings {
            if want_cache {
                let (r, c) = layer.forward_train(&v, Some(&cond))?;
                coupling_caches.push(c);
                v = r.output;
                for (l, dl) in ldj.iter_mut().zip(&r.log_det) {
                    *l += dl;
                }
            } else {
                let r = layer.forward(&v, Some(&cond))?;
                v = r.output;
                for (l, dl) in ldj.iter_mut().zip(&r.log_det) {
                    *l += dl;
                }
            }
        }

        // Final sigmoid back into (0, 1).
        let mut u = Tensor::zeros(v.shape());
        for s in 0..n {
            let vs = v.sample(s);
            let us = u.sample_mut(s);
            let mut acc = 0.0;
            for (uu, &vv) in us.iter_mut().zip(vs) {
                *uu = crate::numerics::blocks::sigmoid(vv);
                acc += -softplus(vv) - softplus(-vv);
            }
            ldj[s] += acc;
        }
        for &uv in u.data() {
            if !(0.0..1.0).contains(&uv) {
                return Err(Error::numerics(format!(
                    "dequantization noise {uv} left [0, 1) after the conditional flow"
                )));
            }
        }

        let mut y = Tensor::zeros(x_int.shape());
        for (yv, (&xv, &uv)) in y.data_mut().iter_mut().zip(x_int.data().iter().zip(u.data())) {
            *yv = xv / 256.0 + uv / 256.0;
        }
        y.check_finite("dequantized tensor")?;
        let corr: Vec<f64> = ldj.iter().map(|l| l - d * ln256).collect();
        let cache = want_cache.then(|| DequantCache { v_pre: v, u, coupling_caches });
        Ok((y, corr, cache))
    }

    /// Backward pass: `grad_y` on the continuous output, `grad_corr` on the
    /// per-sample correction. Gradients stop at the raw noise.
    pub fn backward(
        &self,
        cache: &DequantCache,
        grad_y: &Tensor,
        grad_corr: &[f64],
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<()> {
        if !self.is_variational() {
            return Ok(());
        }
        let n = cache.u.shape()[0];
        // y = x/256 + u/256 and the sigmoid log-det term both touch v_pre:
        // g_v = g_u * sig*(1-sig) + w * (1 - 2*sig)
        let mut g_v = Tensor::zeros(cache.v_pre.shape());
        for s in 0..n {
            let gy = grad_y.sample(s);
            let sig = cache.u.sample(s);
            let gv = g_v.sample_mut(s);
            let w = grad_corr[s];
            for j in 0..gv.len() {
                let g_u = gy[j] / 256.0;
                gv[j] = g_u * sig[j] * (1.0 - sig[j]) + w * (1.0 - 2.0 * sig[j]);
            }
        }
        let mut g = g_v;
        for (i, (layer, lc)) in
            self.couplings.iter().zip(&cache.coupling_caches).enumerate().rev()
        {
            g = layer.backward(lc, &g, grad_corr, store, &format!("{prefix}.c{i}"))?;
        }
        // Remaining gradient flows into the raw noise (a constant) and the
        // conditioning image (data); both are discarded.
        Ok(())
    }

    /// Sampling direction: bin the continuous tensor back to pixels.
    pub fn discretize(y: &Tensor) -> Result<Vec<u8>> {
        y.check_finite("tensor to discretize")?;
        Ok(y.data().iter().map(|&v| ((v * 256.0).floor()).clamp(0.0, 255.0) as u8).collect())
    }
}

impl HasParams for DequantStage {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, layer) in self.couplings.iter().enumerate() {
            layer.visit_params(&format!("{prefix}.c{i}"), f);
        }
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, layer) in self.couplings.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("{prefix}.c{i}"), f);
        }
    }
}
