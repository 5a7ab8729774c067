//! Affine coupling layer on NCHW tensors with a gated conv subnet.

use crate::error::{Error, Result};
use crate::flow::mask::Mask;
use crate::flow::model::TransformResult;
use crate::numerics::blocks::{GatedConvNet, GatedConvNetCache};
use crate::numerics::rng::RngStream;
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

/// Soft clamp on the raw scale so exp(s) cannot overflow early in training.
pub const SCALE_CLAMP: f64 = 2.0;

/// y = mask*x + (1-mask)*(x*exp(s) + t) with (s, t) = subnet(mask*x [, cond]);
/// log_det = sum of s over unmasked elements per sample.
#[derive(Clone, Debug)]
pub struct CouplingLayer {
    pub mask: Mask,
    pub subnet: GatedConvNet,
    pub clamp: f64,
    /// Conditional couplings (dequantization) receive extra channels
    /// appended to the masked input.
    pub conditional: bool,
}

pub struct CouplingCache {
    x: Tensor,
    s: Tensor, // post-clamp scale, all positions
    net_cache: GatedConvNetCache,
}

pub(crate) fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, c1, h, w) = a.dims4()?;
    let (n2, c2, h2, w2) = b.dims4()?;
    if n != n2 || h != h2 || w != w2 {
        return Err(Error::shape("channel concat requires matching N, H, W"));
    }
    let mut out = Tensor::zeros(&[n, c1 + c2, h, w]);
    for s in 0..n {
        let dst = out.sample_mut(s);
        dst[..c1 * h * w].copy_from_slice(a.sample(s));
        dst[c1 * h * w..].copy_from_slice(b.sample(s));
    }
    Ok(out)
}

impl CouplingLayer {
    pub fn new(channels: usize, hidden: usize, mask: Mask, rng: &mut RngStream) -> CouplingLayer {
        CouplingLayer {
            mask,
            subnet: GatedConvNet::new(channels, hidden, 2 * channels, rng),
            clamp: SCALE_CLAMP,
            conditional: false,
        }
    }

    /// Dequantization coupling: subnet sees masked input plus `cond_channels`
    /// of conditioning data.
    pub fn new_conditional(
        channels: usize,
        cond_channels: usize,
        hidden: usize,
        mask: Mask,
        rng: &mut RngStream,
    ) -> CouplingLayer {
        CouplingLayer {
            mask,
            subnet: GatedConvNet::new(channels + cond_channels, hidden, 2 * channels, rng),
            clamp: SCALE_CLAMP,
            conditional: true,
        }
    }

    fn masked_input(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let mut mx = x.clone();
        for s in 0..n {
            let row = mx.sample_mut(s);
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        row[(ci * h + hi) * w + wi] *= self.mask.at_chw(ci, hi, wi);
                    }
                }
            }
        }
        Ok(mx)
    }

    /// Subnet output split into (post-clamp scale, translation).
    fn scale_translate(
        &self,
        x: &Tensor,
        cond: Option<&Tensor>,
        cache: Option<&mut Option<GatedConvNetCache>>,
    ) -> Result<(Tensor, Tensor)> {
        let (n, c, h, w) = x.dims4()?;
        let masked = self.masked_input(x)?;
        let net_in = match cond {
            Some(img) if self.conditional => concat_channels(&masked, img)?,
            None if !self.conditional => masked,
            _ => {
                return Err(Error::config(
                    "conditional coupling requires conditioning input (and vice versa)",
                ))
            }
        };
        let raw = match cache {
            Some(slot) => {
                let (y, c) = self.subnet.forward_train(&net_in)?;
                *slot = Some(c);
                y
            }
            None => self.subnet.forward(&net_in)?,
        };
        raw.check_finite("coupling subnet output")?;
        let plane = h * w;
        let mut s = Tensor::zeros(&[n, c, h, w]);
        let mut t = Tensor::zeros(&[n, c, h, w]);
        for smp in 0..n {
            let r = raw.sample(smp);
            let sd = s.sample_mut(smp);
            sd.copy_from_slice(&r[..c * plane]);
            let td = t.sample_mut(smp);
            td.copy_from_slice(&r[c * plane..]);
        }
        let cl = self.clamp;
        let s = s.map(|v| cl * (v / cl).tanh());
        Ok((s, t))
    }

    pub fn forward(&self, x: &Tensor, cond: Option<&Tensor>) -> Result<TransformResult> {
        let (res, _) = self.forward_impl(x, cond, false)?;
        Ok(res)
    }

    pub fn forward_train(
        &self,
        x: &Tensor,
        cond: Option<&Tensor>,
    ) -> Result<(TransformResult, CouplingCache)> {
        let (res, cache) = self.forward_impl(x, cond, true)?;
        Ok((res, cache.expect("cache requested")))
    }

    fn forward_impl(
        &self,
        x: &Tensor,
        cond: Option<&Tensor>,
        want_cache: bool,
    ) -> Result<(TransformResult, Option<CouplingCache>)> {
        let (n, c, h, w) = x.dims4()?;
        let mut net_cache = None;
        let (s, t) = if want_cache {
            self.scale_translate(x, cond, Some(&mut net_cache))?
        } else {
            self.scale_translate(x, cond, None)?
        };
        let mut y = Tensor::zeros(x.shape());
        let mut log_det = vec![0.0; n];
        for smp in 0..n {
            let xs = x.sample(smp);
            let ss = s.sample(smp);
            let ts = t.sample(smp);
            let ys = y.sample_mut(smp);
            let mut ld = 0.0;
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        let j = (ci * h + hi) * w + wi;
                        if self.mask.at_chw(ci, hi, wi) == 1.0 {
                            ys[j] = xs[j];
                        } else {
                            ys[j] = xs[j] * ss[j].exp() + ts[j];
                            ld += ss[j];
                        }
                    }
                }
            }
            log_det[smp] = ld;
        }
        y.check_finite("coupling output")?;
        let cache = if want_cache {
            Some(CouplingCache { x: x.clone(), s, net_cache: net_cache.unwrap() })
        } else {
            None
        };
        Ok((TransformResult { output: y, log_det }, cache))
    }

    pub fn inverse(&self, y: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
        let (n, c, h, w) = y.dims4()?;
        let (s, t) = self.scale_translate(y, cond, None)?;
        let mut x = Tensor::zeros(y.shape());
        for smp in 0..n {
            let ys = y.sample(smp);
            let ss = s.sample(smp);
            let ts = t.sample(smp);
            let xs = x.sample_mut(smp);
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        let j = (ci * h + hi) * w + wi;
                        if self.mask.at_chw(ci, hi, wi) == 1.0 {
                            xs[j] = ys[j];
                        } else {
                            xs[j] = (ys[j] - ts[j]) * (-ss[j]).exp();
                        }
                    }
                }
            }
        }
        x.check_finite("coupling inverse output")?;
        Ok(x)
    }

    /// `grad_y` is the upstream gradient on the output; `grad_log_det` the
    /// per-sample gradient on this layer's log-det contribution.
    pub fn backward(
        &self,
        cache: &CouplingCache,
        grad_y: &Tensor,
        grad_log_det: &[f64],
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let (n, c, h, w) = cache.x.dims4()?;
        let plane = h * w;
        // Gradients on subnet outputs (raw scale, translation).
        let mut net_up = Tensor::zeros(&[n, 2 * c, h, w]);
        for smp in 0..n {
            let gy = grad_y.sample(smp);
            let xs = cache.x.sample(smp);
            let ss = cache.s.sample(smp);
            let up = net_up.sample_mut(smp);
            let w_ld = grad_log_det[smp];
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        let j = (ci * h + hi) * w + wi;
                        if self.mask.at_chw(ci, hi, wi) == 1.0 {
                            continue;
                        }
                        let g_s = gy[j] * xs[j] * ss[j].exp() + w_ld;
                        // d(clamp*tanh(r/clamp))/dr = 1 - (s/clamp)^2
                        let dsdr = 1.0 - (ss[j] / self.clamp) * (ss[j] / self.clamp);
                        up[j] = g_s * dsdr;
                        up[c * plane + j] = gy[j];
                    }
                }
            }
        }
        let g_net_in = self.subnet.backward(&cache.net_cache, &net_up, store, &format!("{prefix}.subnet"))?;
        let mut grad_x = Tensor::zeros(cache.x.shape());
        for smp in 0..n {
            let gy = grad_y.sample(smp);
            let gn = g_net_in.sample(smp);
            let ss = cache.s.sample(smp);
            let gx = grad_x.sample_mut(smp);
            for ci in 0..c {
                for hi in 0..h {
                    for wi in 0..w {
                        let j = (ci * h + hi) * w + wi;
                        if self.mask.at_chw(ci, hi, wi) == 1.0 {
                            // pass-through plus subnet-input path (first c
                            // channels of the subnet input are mask*x)
                            gx[j] = gy[j] + gn[j];
                        } else {
                            gx[j] = gy[j] * ss[j].exp();
                        }
                    }
                }
            }
        }
        Ok(grad_x)
    }
}

impl HasParams for CouplingLayer {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.subnet.visit_params(&format!("{prefix}.subnet"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.subnet.visit_params_mut(&format!("{prefix}.subnet"), f);
    }
}
