//! Volume-preserving reshape trading 2x2 spatial blocks for 4x channels.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Each 2x2 block of input channel c becomes output channels
/// (4c, 4c+1, 4c+2, 4c+3) in order top-left, top-right, bottom-left,
/// bottom-right. Pure permutation: log_det = 0.
pub fn squeeze(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("squeeze requires even H, W; got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, 4 * c, oh, ow]);
    for s in 0..n {
        let xs = x.sample(s);
        let os = out.sample_mut(s);
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            os[(((ci * 4) + dy * 2 + dx) * oh + oy) * ow + ox] =
                                xs[(ci * h + 2 * oy + dy) * w + 2 * ox + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`squeeze`].
pub fn unsqueeze(y: &Tensor) -> Result<Tensor> {
    let (n, c4, oh, ow) = y.dims4()?;
    if c4 % 4 != 0 {
        return Err(Error::shape(format!("unsqueeze requires channels divisible by 4, got {c4}")));
    }
    let c = c4 / 4;
    let (h, w) = (oh * 2, ow * 2);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for s in 0..n {
        let ys = y.sample(s);
        let os = out.sample_mut(s);
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            os[(ci * h + 2 * oy + dy) * w + 2 * ox + dx] =
                                ys[(((ci * 4) + dy * 2 + dx) * oh + oy) * ow + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
