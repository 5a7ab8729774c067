//! 2D convolution (stride 1, zero padding) with hand-derived gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::matmul::{matmul_acc, matmul_acc_par};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// Cross-correlation of an NCHW input with an OIKK kernel, zero padding,
/// stride 1. Linear in both arguments (no bias).
pub fn conv2d(input: &Tensor, kernel: &Tensor, padding: usize) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let (o, i, kh, kw) = kernel.dims4()?;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(format!("kernel spatial size must be odd square, got {kh}x{kw}")));
    }
    if i != c {
        return Err(Error::shape(format!("kernel expects {i} input channels, input has {c}")));
    }
    let k = kh;
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape(format!("input {h}x{w} too small for kernel {k} pad {padding}")));
    }
    let oh = h + 2 * padding - k + 1;
    let ow = w + 2 * padding - k + 1;

    let mut out = Tensor::zeros(&[n, o, oh, ow]);
    let in_len = c * h * w;
    let out_len = o * oh * ow;
    let ckk = c * k * k;
    out.data_mut().par_chunks_mut(out_len).enumerate().for_each(|(s, out_s)| {
        let in_s = &input.data()[s * in_len..(s + 1) * in_len];
        let col = im2col(in_s, c, h, w, k, padding);
        matmul_acc(kernel.data(), &col, o, ckk, oh * ow, out_s);
    });
    Ok(out)
}

/// col[(c*k+kh)*k+kw][oh*ow_dim+ow] = x[c][oh+kh-p][ow+kw-p], zero outside.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, p: usize) -> Vec<f64> {
    let oh = h + 2 * p - k + 1;
    let ow = w + 2 * p - k + 1;
    let mut col = vec![0.0; c * k * k * oh * ow];
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut col[((ci * k + kh) * k + kw) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy + kh) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[(ci * h + iy as usize) * w..][..w];
                    for ox in 0..ow {
                        let ix = (ox + kw) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            row[oy * ow + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Transposed layout built in parallel over output positions:
/// colT[oh*ow+ox][(c*k+kh)*k+kw]; contiguous patch rows make the
/// weight-gradient step a plain matmul.
fn im2col_t_into(x: &[f64], c: usize, h: usize, w: usize, k: usize, p: usize, col: &mut [f64]) {
    let oh = h + 2 * p - k + 1;
    let ow = w + 2 * p - k + 1;
    let ckk = c * k * k;
    debug_assert_eq!(col.len(), oh * ow * ckk);
    col.par_chunks_mut(ckk).enumerate().for_each(|(pos, row)| {
        let oy = pos / ow;
        let ox = pos % ow;
        row.fill(0.0);
        for ci in 0..c {
            for kh in 0..k {
                let iy = (oy + kh) as isize - p as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let src = &x[(ci * h + iy as usize) * w..][..w];
                for kw in 0..k {
                    let ix = (ox + kw) as isize - p as isize;
                    if ix >= 0 && ix < w as isize {
                        row[(ci * k + kh) * k + kw] = src[ix as usize];
                    }
                }
            }
        }
    });
}

fn col2im_acc(col: &[f64], c: usize, h: usize, w: usize, k: usize, p: usize, out: &mut [f64]) {
    let oh = h + 2 * p - k + 1;
    let ow = w + 2 * p - k + 1;
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = &col[((ci * k + kh) * k + kw) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy + kh) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut out[(ci * h + iy as usize) * w..][..w];
                    for ox in 0..ow {
                        let ix = (ox + kw) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution layer with bias. `forward` keeps no state; callers cache the
/// input for `backward`.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub weight: Tensor, // O x I x K x K
    pub bias: Tensor,   // O
    pub padding: usize,
}

impl ConvLayer {
    /// He-style normal init, bias zero.
    pub fn new(out_ch: usize, in_ch: usize, k: usize, rng: &mut RngStream) -> ConvLayer {
        let std = (2.0 / (in_ch * k * k) as f64).sqrt();
        let mut weight = Tensor::zeros(&[out_ch, in_ch, k, k]);
        for v in weight.data_mut() {
            *v = rng.normal() * std;
        }
        ConvLayer { weight, bias: Tensor::zeros(&[out_ch]), padding: (k - 1) / 2 }
    }

    /// Zero-init variant; a coupling subnet ending in one of these starts
    /// as the identity transform.
    pub fn new_zeroed(out_ch: usize, in_ch: usize, k: usize) -> ConvLayer {
        ConvLayer {
            weight: Tensor::zeros(&[out_ch, in_ch, k, k]),
            bias: Tensor::zeros(&[out_ch]),
            padding: (k - 1) / 2,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut out = conv2d(input, &self.weight, self.padding)?;
        let (n, o, oh, ow) = out.dims4()?;
        let plane = oh * ow;
        for s in 0..n {
            let out_s = &mut out.data_mut()[s * o * plane..(s + 1) * o * plane];
            for oc in 0..o {
                let b = self.bias.data()[oc];
                for v in &mut out_s[oc * plane..(oc + 1) * plane] {
                    *v += b;
                }
            }
        }
        Ok(out)
    }

    /// Returns grad wrt input and accumulates (grad_weight, grad_bias).
    /// Weight/bias gradients sum over samples in ascending order.
    pub fn backward(
        &self,
        input: &Tensor,
        grad_out: &Tensor,
        grad_weight: &mut Tensor,
        grad_bias: &mut Tensor,
    ) -> Result<Tensor> {
        let (n, c, h, w) = input.dims4()?;
        let (o, _i, k, _) = self.weight.dims4()?;
        let (gn, go, oh, ow) = grad_out.dims4()?;
        if gn != n || go != o {
            return Err(Error::shape("grad_out does not match conv output"));
        }
        let p = self.padding;
        let ckk = c * k * k;
        let plane = oh * ow;

        // Weight/bias gradients: samples outer (ascending order fixes the
        // reduction); within a sample the update is the matmul
        // gW[o, ckk] += g[o, plane] * colT[plane, ckk], parallel over rows.
        let mut col_t = vec![0.0; plane * ckk];
        for s in 0..n {
            let in_s = input.sample(s);
            let g_s = &grad_out.data()[s * o * plane..(s + 1) * o * plane];
            im2col_t_into(in_s, c, h, w, k, p, &mut col_t);
            matmul_acc_par(g_s, &col_t, o, plane, ckk, grad_weight.data_mut());
            let gb = grad_bias.data_mut();
            for oc in 0..o {
                gb[oc] += g_s[oc * plane..(oc + 1) * plane].iter().sum::<f64>();
            }
        }

        // Input gradient: independent per sample.
        let mut w_t = vec![0.0; ckk * o]; // [ckk][o]
        for oc in 0..o {
            for j in 0..ckk {
                w_t[j * o + oc] = self.weight.data()[oc * ckk + j];
            }
        }
        let mut grad_in = Tensor::zeros(&[n, c, h, w]);
        let in_len = c * h * w;
        grad_in.data_mut().par_chunks_mut(in_len).enumerate().for_each(|(s, gi_s)| {
            let g_s = &grad_out.data()[s * o * plane..(s + 1) * o * plane];
            let mut col_grad = vec![0.0; ckk * plane];
            matmul_acc(&w_t, g_s, ckk, o, plane, &mut col_grad);
            col2im_acc(&col_grad, c, h, w, k, p, gi_s);
        });
        Ok(grad_in)
    }
}
