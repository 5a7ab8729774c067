//! Affine coupling on low-dimensional vectors (2D point flows).

use crate::error::Result;
use crate::flow::coupling::SCALE_CLAMP;
use crate::flow::mask::Mask;
use crate::flow::model::TransformResult;
use crate::numerics::blocks::{MlpNet, MlpNetCache};
use crate::numerics::rng::RngStream;
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

/// Same affine transform as [`crate::flow::coupling::CouplingLayer`] but on
/// [N, D] tensors with a coordinate-parity mask and an MLP subnet.
#[derive(Clone, Debug)]
pub struct VecCouplingLayer {
    pub mask: Mask,
    pub subnet: MlpNet,
    pub clamp: f64,
}

pub struct VecCouplingCache {
    x: Tensor,
    s: Tensor,
    net_cache: MlpNetCache,
}

impl VecCouplingLayer {
    pub fn new(dim: usize, hidden: usize, mask: Mask, rng: &mut RngStream) -> VecCouplingLayer {
        VecCouplingLayer {
            mask,
            subnet: MlpNet::new(dim, hidden, 2 * dim, rng),
            clamp: SCALE_CLAMP,
        }
    }

    fn scale_translate(
        &self,
        x: &Tensor,
        cache: Option<&mut Option<MlpNetCache>>,
    ) -> Result<(Tensor, Tensor)> {
        let (n, d) = x.dims2()?;
        let mut masked = x.clone();
        for smp in 0..n {
            let row = masked.sample_mut(smp);
            for j in 0..d {
                row[j] *= self.mask.at_dim(j);
            }
        }
        let raw = match cache {
            Some(slot) => {
                let (y, c) = self.subnet.forward_train(&masked)?;
                *slot = Some(c);
                y
            }
            None => self.subnet.forward(&masked)?,
        };
        raw.check_finite("vec coupling subnet output")?;
        let mut s = Tensor::zeros(&[n, d]);
        let mut t = Tensor::zeros(&[n, d]);
        for smp in 0..n {
            let r = raw.sample(smp);
            s.sample_mut(smp).copy_from_slice(&r[..d]);
            t.sample_mut(smp).copy_from_slice(&r[d..]);
        }
        let cl = self.clamp;
        Ok((s.map(|v| cl * (v / cl).tanh()), t))
    }

    pub fn forward(&self, x: &Tensor) -> Result<TransformResult> {
        let (r, _) = self.forward_impl(x, false)?;
        Ok(r)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(TransformResult, VecCouplingCache)> {
        let (r, c) = self.forward_impl(x, true)?;
        Ok((r, c.expect("cache requested")))
    }

    fn forward_impl(
        &self,
        x: &Tensor,
        want_cache: bool,
    ) -> Result<(TransformResult, Option<VecCouplingCache>)> {
        let (n, d) = x.dims2()?;
        let mut net_cache = None;
        let (s, t) = if want_cache {
            self.scale_translate(x, Some(&mut net_cache))?
        } else {
            self.scale_translate(x, None)?
        };
        let mut y = Tensor::zeros(x.shape());
        let mut log_det = vec![0.0; n];
        for smp in 0..n {
            let xs = x.sample(smp);
            let ss = s.sample(smp);
            let ts = t.sample(smp);
            let ys = y.sample_mut(smp);
            let mut ld = 0.0;
            for j in 0..d {
                if self.mask.at_dim(j) == 1.0 {
                    ys[j] = xs[j];
                } else {
                    ys[j] = xs[j] * ss[j].exp() + ts[j];
                    ld += ss[j];
                }
            }
            log_det[smp] = ld;
        }
        y.check_finite("vec coupling output")?;
        let cache = want_cache.then(|| VecCouplingCache {
            x: x.clone(),
            s,
            net_cache: net_cache.unwrap(),
        });
        Ok((TransformResult { output: y, log_det }, cache))
    }

    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        let (n, d) = y.dims2()?;
        let (s, t) = self.scale_translate(y, None)?;
        let mut x = Tensor::zeros(y.shape());
        for smp in 0..n {
            let ys = y.sample(smp);
            let ss = s.sample(smp);
            let ts = t.sample(smp);
            let xs = x.sample_mut(smp);
            for j in 0..d {
                if self.mask.at_dim(j) == 1.0 {
                    xs[j] = ys[j];
                } else {
                    xs[j] = (ys[j] - ts[j]) * (-ss[j]).exp();
                }
            }
        }
        x.check_finite("vec coupling inverse output")?;
        Ok(x)
    }

    pub fn backward(
        &self,
        cache: &VecCouplingCache,
        grad_y: &Tensor,
        grad_log_det: &[f64],
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let (n, d) = cache.x.dims2()?;
        let mut net_up = Tensor::zeros(&[n, 2 * d]);
        for smp in 0..n {
            let gy = grad_y.sample(smp);
            let xs = cache.x.sample(smp);
            let ss = cache.s.sample(smp);
            let up = net_up.sample_mut(smp);
            for j in 0..d {
                if self.mask.at_dim(j) == 1.0 {
                    continue;
                }
                let g_s = gy[j] * xs[j] * ss[j].exp() + grad_log_det[smp];
                let dsdr = 1.0 - (ss[j] / self.clamp) * (ss[j] / self.clamp);
                up[j] = g_s * dsdr;
                up[d + j] = gy[j];
            }
        }
        let g_net_in =
            self.subnet.backward(&cache.net_cache, &net_up, store, &format!("{prefix}.subnet"))?;
        let mut grad_x = Tensor::zeros(cache.x.shape());
        for smp in 0..n {
            let gy = grad_y.sample(smp);
            let gn = g_net_in.sample(smp);
            let ss = cache.s.sample(smp);
            let gx = grad_x.sample_mut(smp);
            for j in 0..d {
                if self.mask.at_dim(j) == 1.0 {
                    gx[j] = gy[j] + gn[j];
                } else {
                    gx[j] = gy[j] * ss[j].exp();
                }
            }
        }
        Ok(grad_x)
    }
}

impl HasParams for VecCouplingLayer {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.subnet.visit_params(&format!("{prefix}.subnet"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.subnet.visit_params_mut(&format!("{prefix}.subnet"), f);
    }
}
