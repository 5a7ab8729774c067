//! Subnet building blocks: concat-ELU, gated residual conv blocks, channel
//! layer norm, and the gated conv / MLP subnets used by coupling layers.
//!
//! Each block pairs a forward pass (optionally caching intermediates) with a
//! hand-derived backward pass that accumulates parameter gradients into a
//! [`ParamStore`] and returns the input gradient.

use crate::error::Result;
use crate::numerics::conv::ConvLayer;
use crate::numerics::linear::Linear;
use crate::numerics::rng::RngStream;
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

#[inline]
pub fn elu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// concat(elu(x), elu(-x)) along the channel axis (axis 1).
pub fn concat_elu(x: &Tensor) -> Tensor {
    let n = x.shape()[0];
    let per = x.sample_len();
    let mut shape = x.shape().to_vec();
    shape[1] *= 2;
    let mut out = Tensor::zeros(&shape);
    for s in 0..n {
        let src = x.sample(s);
        let dst = out.sample_mut(s);
        for (i, &v) in src.iter().enumerate() {
            dst[i] = elu(v);
            dst[per + i] = elu(-v);
        }
    }
    out
}

pub fn concat_elu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let n = x.shape()[0];
    let per = x.sample_len();
    let mut grad_in = Tensor::zeros(x.shape());
    for s in 0..n {
        let src = x.sample(s);
        let g = grad_out.sample(s);
        let gi = grad_in.sample_mut(s);
        for i in 0..per {
            gi[i] = g[i] * elu_prime(src[i]) - g[per + i] * elu_prime(-src[i]);
        }
    }
    grad_in
}

/// Run a conv backward step against gradient slots in the store.
pub fn conv_bwd(
    layer: &ConvLayer,
    input: &Tensor,
    grad_out: &Tensor,
    store: &mut ParamStore,
    prefix: &str,
) -> Result<Tensor> {
    let w_name = format!("{prefix}.weight");
    let b_name = format!("{prefix}.bias");
    let mut gw = store.take_grad(&w_name)?;
    let mut gb = store.take_grad(&b_name)?;
    let grad_in = layer.backward(input, grad_out, &mut gw, &mut gb);
    store.put_grad(&w_name, gw);
    store.put_grad(&b_name, gb);
    grad_in
}

pub fn linear_bwd(
    layer: &Linear,
    input: &Tensor,
    grad_out: &Tensor,
    store: &mut ParamStore,
    prefix: &str,
) -> Result<Tensor> {
    let w_name = format!("{prefix}.weight");
    let b_name = format!("{prefix}.bias");
    let mut gw = store.take_grad(&w_name)?;
    let mut gb = store.take_grad(&b_name)?;
    let grad_in = layer.backward(input, grad_out, &mut gw, &mut gb);
    store.put_grad(&w_name, gw);
    store.put_grad(&b_name, gb);
    grad_in
}

fn visit_conv(layer: &ConvLayer, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.weight"), &layer.weight);
    f(&format!("{prefix}.bias"), &layer.bias);
}

fn visit_conv_mut(layer: &mut ConvLayer, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.weight"), &mut layer.weight);
    f(&format!("{prefix}.bias"), &mut layer.bias);
}

fn visit_linear(layer: &Linear, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
    f(&format!("{prefix}.weight"), &layer.weight);
    f(&format!("{prefix}.bias"), &layer.bias);
}

fn visit_linear_mut(layer: &mut Linear, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
    f(&format!("{prefix}.weight"), &mut layer.weight);
    f(&format!("{prefix}.bias"), &mut layer.bias);
}

// ---------------------------------------------------------------------------
// Gated residual conv block: y = x + val * sigmoid(gate)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct GatedConvBlock {
    pub conv1: ConvLayer, // 3x3, 2C -> C
    pub conv2: ConvLayer, // 1x1, 2C -> 2C
}

pub struct GatedConvBlockCache {
    x: Tensor,
    hmid: Tensor,
    val: Tensor,
    sig: Tensor,
}

impl GatedConvBlock {
    pub fn new(channels: usize, rng: &mut RngStream) -> GatedConvBlock {
        GatedConvBlock {
            conv1: ConvLayer::new(channels, 2 * channels, 3, rng),
            conv2: ConvLayer::new(2 * channels, 2 * channels, 1, rng),
        }
    }

    pub fn forward(&self, x: &Tensor, cache: Option<&mut Option<GatedConvBlockCache>>) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let a = concat_elu(x);
        let hmid = self.conv1.forward(&a)?;
        let b = concat_elu(&hmid);
        let o = self.conv2.forward(&b)?;
        let plane = h * w;
        let mut val = Tensor::zeros(&[n, c, h, w]);
        let mut sig = Tensor::zeros(&[n, c, h, w]);
        let mut y = Tensor::zeros(&[n, c, h, w]);
        for s in 0..n {
            let o_s = o.sample(s);
            let x_s = x.sample(s);
            let val_s = val.sample_mut(s);
            for i in 0..c * plane {
                val_s[i] = o_s[i];
            }
            let sig_s = sig.sample_mut(s);
            for i in 0..c * plane {
                sig_s[i] = sigmoid(o_s[c * plane + i]);
            }
            let y_s = y.sample_mut(s);
            for i in 0..c * plane {
                y_s[i] = x_s[i] + val_s[i] * sig_s[i];
            }
        }
        if let Some(slot) = cache {
            *slot = Some(GatedConvBlockCache { x: x.clone(), hmid, val, sig });
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        cache: &GatedConvBlockCache,
        grad_y: &Tensor,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let (n, c, h, w) = cache.x.dims4()?;
        let plane = h * w;
        // grad wrt conv2 output: [grad_val, grad_gate]
        let mut g_o = Tensor::zeros(&[n, 2 * c, h, w]);
        for s in 0..n {
            let gy = grad_y.sample(s);
            let val = cache.val.sample(s);
            let sig = cache.sig.sample(s);
            let go = g_o.sample_mut(s);
            for i in 0..c * plane {
                go[i] = gy[i] * sig[i];
                go[c * plane + i] = gy[i] * val[i] * sig[i] * (1.0 - sig[i]);
            }
        }
        let b = concat_elu(&cache.hmid);
        let g_b = conv_bwd(&self.conv2, &b, &g_o, store, &format!("{prefix}.conv2"))?;
        let g_hmid = concat_elu_backward(&cache.hmid, &g_b);
        let a = concat_elu(&cache.x);
        let g_a = conv_bwd(&self.conv1, &a, &g_hmid, store, &format!("{prefix}.conv1"))?;
        let mut g_x = concat_elu_backward(&cache.x, &g_a);
        g_x.add_assign(grad_y)?; // residual path
        Ok(g_x)
    }
}

impl HasParams for GatedConvBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_conv(&self.conv1, &format!("{prefix}.conv1"), f);
        visit_conv(&self.conv2, &format!("{prefix}.conv2"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_conv_mut(&mut self.conv1, &format!("{prefix}.conv1"), f);
        visit_conv_mut(&mut self.conv2, &format!("{prefix}.conv2"), f);
    }
}

// ---------------------------------------------------------------------------
// Layer norm over the channel axis at every spatial position
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ChannelLayerNorm {
    pub gamma: Tensor, // C
    pub beta: Tensor,  // C
    pub eps: f64,
}

pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>, // per (sample, position)
}

impl ChannelLayerNorm {
    pub fn new(channels: usize) -> ChannelLayerNorm {
        ChannelLayerNorm {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor, cache: Option<&mut Option<LayerNormCache>>) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![0.0; n * plane];
        let cf = c as f64;
        for s in 0..n {
            let x_s = x.sample(s);
            let y_s = y.sample_mut(s);
            let xh_s = xhat.sample_mut(s);
            for pos in 0..plane {
                let mut mean = 0.0;
                for ch in 0..c {
                    mean += x_s[ch * plane + pos];
                }
                mean /= cf;
                let mut var = 0.0;
                for ch in 0..c {
                    let d = x_s[ch * plane + pos] - mean;
                    var += d * d;
                }
                var /= cf;
                let inv = 1.0 / (var + self.eps).sqrt();
                inv_std[s * plane + pos] = inv;
                for ch in 0..c {
                    let xh = (x_s[ch * plane + pos] - mean) * inv;
                    xh_s[ch * plane + pos] = xh;
                    y_s[ch * plane + pos] = self.gamma.data()[ch] * xh + self.beta.data()[ch];
                }
            }
        }
        if let Some(slot) = cache {
            *slot = Some(LayerNormCache { xhat, inv_std });
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        grad_y: &Tensor,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let (n, c, h, w) = cache.xhat.dims4()?;
        let plane = h * w;
        let cf = c as f64;
        let mut grad_in = Tensor::zeros(cache.xhat.shape());
        let mut g_gamma = store.take_grad(&format!("{prefix}.gamma"))?;
        let mut g_beta = store.take_grad(&format!("{prefix}.beta"))?;
        for s in 0..n {
            let gy = grad_y.sample(s);
            let xh = cache.xhat.sample(s);
            let gi = grad_in.sample_mut(s);
            for pos in 0..plane {
                let inv = cache.inv_std[s * plane + pos];
                let mut sum_g = 0.0;
                let mut sum_gx = 0.0;
                for ch in 0..c {
                    let ghat = gy[ch * plane + pos] * self.gamma.data()[ch];
                    sum_g += ghat;
                    sum_gx += ghat * xh[ch * plane + pos];
                }
                for ch in 0..c {
                    let ghat = gy[ch * plane + pos] * self.gamma.data()[ch];
                    gi[ch * plane + pos] =
                        inv * (ghat - sum_g / cf - xh[ch * plane + pos] * sum_gx / cf);
                }
            }
            for ch in 0..c {
                let mut gg = 0.0;
                let mut gb = 0.0;
                for pos in 0..plane {
                    gg += gy[ch * plane + pos] * xh[ch * plane + pos];
                    gb += gy[ch * plane + pos];
                }
                g_gamma.data_mut()[ch] += gg;
                g_beta.data_mut()[ch] += gb;
            }
        }
        store.put_grad(&format!("{prefix}.gamma"), g_gamma);
        store.put_grad(&format!("{prefix}.beta"), g_beta);
        Ok(grad_in)
    }
}

impl HasParams for ChannelLayerNorm {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.gamma"), &self.gamma);
        f(&format!("{prefix}.beta"), &self.beta);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.gamma"), &mut self.gamma);
        f(&format!("{prefix}.beta"), &mut self.beta);
    }
}

// ---------------------------------------------------------------------------
// Gated conv net: conv_in -> 3 x (gated block + channel norm) -> concat-ELU
// -> conv_out (zero-initialized so the owning coupling starts as identity)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct GatedConvNet {
    pub conv_in: ConvLayer,
    pub blocks: Vec<(GatedConvBlock, ChannelLayerNorm)>,
    pub conv_out: ConvLayer,
}

pub struct GatedConvNetCache {
    x: Tensor,
    block_caches: Vec<(GatedConvBlockCache, LayerNormCache)>,
    trunk_out: Tensor,
}

pub const GATED_NET_BLOCKS: usize = 3;

impl GatedConvNet {
    pub fn new(c_in: usize, hidden: usize, c_out: usize, rng: &mut RngStream) -> GatedConvNet {
        let conv_in = ConvLayer::new(hidden, c_in, 3, rng);
        let blocks = (0..GATED_NET_BLOCKS)
            .map(|_| (GatedConvBlock::new(hidden, rng), ChannelLayerNorm::new(hidden)))
            .collect();
        let conv_out = ConvLayer::new_zeroed(c_out, 2 * hidden, 3);
        GatedConvNet { conv_in, blocks, conv_out }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, None)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, GatedConvNetCache)> {
        let mut cache = None;
        let y = self.forward_impl(x, Some(&mut cache))?;
        Ok((y, cache.expect("cache filled")))
    }

    fn forward_impl(&self, x: &Tensor, cache: Option<&mut Option<GatedConvNetCache>>) -> Result<Tensor> {
        let want_cache = cache.is_some();
        let mut t = self.conv_in.forward(x)?;
        let mut block_caches = Vec::new();
        for (block, norm) in &self.blocks {
            if want_cache {
                let mut bc = None;
                let mut nc = None;
                t = block.forward(&t, Some(&mut bc))?;
                t = norm.forward(&t, Some(&mut nc))?;
                block_caches.push((bc.unwrap(), nc.unwrap()));
            } else {
                t = block.forward(&t, None)?;
                t = norm.forward(&t, None)?;
            }
        }
        let u = concat_elu(&t);
        let y = self.conv_out.forward(&u)?;
        if let Some(slot) = cache {
            *slot = Some(GatedConvNetCache { x: x.clone(), block_caches, trunk_out: t });
        }
        Ok(y)
    }

    pub fn backward(
        &self,
        cache: &GatedConvNetCache,
        grad_y: &Tensor,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let u = concat_elu(&cache.trunk_out);
        let g_u = conv_bwd(&self.conv_out, &u, grad_y, store, &format!("{prefix}.conv_out"))?;
        let mut g = concat_elu_backward(&cache.trunk_out, &g_u);
        for (i, ((block, norm), (bc, nc))) in
            self.blocks.iter().zip(&cache.block_caches).enumerate().rev()
        {
            g = norm.backward(nc, &g, store, &format!("{prefix}.norm{i}"))?;
            g = block.backward(bc, &g, store, &format!("{prefix}.block{i}"))?;
        }
        conv_bwd(&self.conv_in, &cache.x, &g, store, &format!("{prefix}.conv_in"))
    }
}

impl HasParams for GatedConvNet {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_conv(&self.conv_in, &format!("{prefix}.conv_in"), f);
        for (i, (block, norm)) in self.blocks.iter().enumerate() {
            block.visit_params(&format!("{prefix}.block{i}"), f);
            norm.visit_params(&format!("{prefix}.norm{i}"), f);
        }
        visit_conv(&self.conv_out, &format!("{prefix}.conv_out"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_conv_mut(&mut self.conv_in, &format!("{prefix}.conv_in"), f);
        for (i, (block, norm)) in self.blocks.iter_mut().enumerate() {
            block.visit_params_mut(&format!("{prefix}.block{i}"), f);
            norm.visit_params_mut(&format!("{prefix}.norm{i}"), f);
        }
        visit_conv_mut(&mut self.conv_out, &format!("{prefix}.conv_out"), f);
    }
}

// ---------------------------------------------------------------------------
// MLP subnet for 2D couplings: linear -> ELU -> linear -> ELU -> linear
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MlpNet {
    pub lin1: Linear,
    pub lin2: Linear,
    pub lin3: Linear,
}

pub struct MlpNetCache {
    x: Tensor,
    a1: Tensor,
    a2: Tensor,
}

impl MlpNet {
    pub fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut RngStream) -> MlpNet {
        MlpNet {
            lin1: Linear::new(d_in, hidden, rng),
            lin2: Linear::new(hidden, hidden, rng),
            lin3: Linear::new_zeroed(hidden, d_out),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let a1 = self.lin1.forward(x)?;
        let z1 = a1.map(elu);
        let a2 = self.lin2.forward(&z1)?;
        let z2 = a2.map(elu);
        self.lin3.forward(&z2)
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, MlpNetCache)> {
        let a1 = self.lin1.forward(x)?;
        let z1 = a1.map(elu);
        let a2 = self.lin2.forward(&z1)?;
        let z2 = a2.map(elu);
        let y = self.lin3.forward(&z2)?;
        Ok((y, MlpNetCache { x: x.clone(), a1, a2 }))
    }

    pub fn backward(
        &self,
        cache: &MlpNetCache,
        grad_y: &Tensor,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let z2 = cache.a2.map(elu);
        let g_z2 = linear_bwd(&self.lin3, &z2, grad_y, store, &format!("{prefix}.lin3"))?;
        let mut g_a2 = g_z2;
        for (g, a) in g_a2.data_mut().iter_mut().zip(cache.a2.data()) {
            *g *= elu_prime(*a);
        }
        let z1 = cache.a1.map(elu);
        let g_z1 = linear_bwd(&self.lin2, &z1, &g_a2, store, &format!("{prefix}.lin2"))?;
        let mut g_a1 = g_z1;
        for (g, a) in g_a1.data_mut().iter_mut().zip(cache.a1.data()) {
            *g *= elu_prime(*a);
        }
        linear_bwd(&self.lin1, &cache.x, &g_a1, store, &format!("{prefix}.lin1"))
    }
}

impl HasParams for MlpNet {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_linear(&self.lin1, &format!("{prefix}.lin1"), f);
        visit_linear(&self.lin2, &format!("{prefix}.lin2"), f);
        visit_linear(&self.lin3, &format!("{prefix}.lin3"), f);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_linear_mut(&mut self.lin1, &format!("{prefix}.lin1"), f);
        visit_linear_mut(&mut self.lin2, &format!("{prefix}.lin2"), f);
        visit_linear_mut(&mut self.lin3, &format!("{prefix}.lin3"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_elu_layout() {
        let x = Tensor::from_vec(&[1, 2, 1, 1], vec![1.0, -1.0]).unwrap();
        let y = concat_elu(&x);
        assert_eq!(y.shape(), &[1, 4, 1, 1]);
        assert_eq!(y.data()[0], 1.0);
        assert!((y.data()[1] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((y.data()[2] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(y.data()[3], 1.0);
    }

    fn weighted_sum(y: &Tensor, w: &Tensor) -> f64 {
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    /// Finite-difference spot check for any parameterized block.
    fn fd_check<B: HasParams + Clone>(
        block: &B,
        x: &Tensor,
        up: &Tensor,
        fwd: impl Fn(&B, &Tensor) -> Tensor,
        bwd: impl Fn(&B, &Tensor, &Tensor, &mut ParamStore) -> Tensor,
    ) {
        let mut store = block.param_store("p");
        let gx = bwd(block, x, up, &mut store);
        let h = 1e-5;
        // every 7th parameter coordinate
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        for name in &names {
            let numel = store.value(name).unwrap().numel();
            for idx in (0..numel).step_by(7.max(numel / 5)) {
                let mut bp = block.clone();
                let mut bm = block.clone();
                let mut sp = store.clone();
                sp.value_mut(name).unwrap().data_mut()[idx] += h;
                bp.load_params(&sp, "p").unwrap();
                let mut sm = store.clone();
                sm.value_mut(name).unwrap().data_mut()[idx] -= h;
                bm.load_params(&sm, "p").unwrap();
                let fd = (weighted_sum(&fwd(&bp, x), up) - weighted_sum(&fwd(&bm, x), up)) / (2.0 * h);
                let ana = store.grad(name).unwrap().data()[idx];
                assert!(
                    (fd - ana).abs() <= 1e-6 + 1e-4 * fd.abs().max(ana.abs()),
                    "{name}[{idx}]: fd {fd} vs {ana}"
                );
            }
        }
        // input gradient
        for idx in (0..x.numel()).step_by(3) {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[idx] += h;
            xm.data_mut()[idx] -= h;
            let fd = (weighted_sum(&fwd(block, &xp), up) - weighted_sum(&fwd(block, &xm), up)) / (2.0 * h);
            let ana = gx.data()[idx];
            assert!(
                (fd - ana).abs() <= 1e-6 + 1e-4 * fd.abs().max(ana.abs()),
                "input[{idx}]: fd {fd} vs {ana}"
            );
        }
    }

    #[test]
    fn gated_block_gradients() {
        let mut rng = RngStream::from_seed(31);
        let block = GatedConvBlock::new(2, &mut rng);
        let mut x = Tensor::zeros(&[2, 2, 3, 3]);
        rng.fill_normal(x.data_mut());
        let mut up = Tensor::zeros(&[2, 2, 3, 3]);
        rng.fill_normal(up.data_mut());
        fd_check(
            &block,
            &x,
            &up,
            |b, x| b.forward(x, None).unwrap(),
            |b, x, up, store| {
                let mut c = None;
                b.forward(x, Some(&mut c)).unwrap();
                b.backward(&c.unwrap(), up, store, "p").unwrap()
            },
        );
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = RngStream::from_seed(32);
        let mut norm = ChannelLayerNorm::new(3);
        for v in norm.gamma.data_mut() {
            *v = 1.0 + 0.3 * rng.normal();
        }
        let mut x = Tensor::zeros(&[2, 3, 2, 2]);
        rng.fill_normal(x.data_mut());
        let mut up = Tensor::zeros(&[2, 3, 2, 2]);
        rng.fill_normal(up.data_mut());
        fd_check(
            &norm,
            &x,
            &up,
            |b, x| b.forward(x, None).unwrap(),
            |b, x, up, store| {
                let mut c = None;
                b.forward(x, Some(&mut c)).unwrap();
                b.backward(&c.unwrap(), up, store, "p").unwrap()
            },
        );
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut rng = RngStream::from_seed(33);
        let norm = ChannelLayerNorm::new(8);
        let mut x = Tensor::zeros(&[1, 8, 2, 2]);
        rng.fill_normal(x.data_mut());
        x.scale_assign(4.0);
        let y = norm.forward(&x, None).unwrap();
        // default gamma=1, beta=0: per-position channel mean ~0, var ~1
        for pos in 0..4 {
            let vals: Vec<f64> = (0..8).map(|c| y.data()[c * 4 + pos]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 8.0;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn mlp_gradients() {
        let mut rng = RngStream::from_seed(34);
        let mut net = MlpNet::new(2, 8, 4, &mut rng);
        // randomize the zero-initialized output layer so its grads are nontrivial
        for v in net.lin3.weight.data_mut() {
            *v = 0.2 * rng.normal();
        }
        let mut x = Tensor::zeros(&[3, 2]);
        rng.fill_normal(x.data_mut());
        let mut up = Tensor::zeros(&[3, 4]);
        rng.fill_normal(up.data_mut());
        fd_check(
            &net,
            &x,
            &up,
            |b, x| b.forward(x).unwrap(),
            |b, x, up, store| {
                let (_, c) = b.forward_train(x).unwrap();
                b.backward(&c, up, store, "p").unwrap()
            },
        );
    }

    #[test]
    fn gated_net_zero_output_at_init() {
        let mut rng = RngStream::from_seed(35);
        let net = GatedConvNet::new(2, 4, 4, &mut rng);
        let mut x = Tensor::zeros(&[1, 2, 4, 4]);
        rng.fill_normal(x.data_mut());
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
