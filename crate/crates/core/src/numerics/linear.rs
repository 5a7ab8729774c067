//! Fully-connected layer for the 2D flow subnets.

use crate::error::{Error, Result};
use crate::numerics::matmul::{axpy, dot, matmul_acc};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// y = x W + b with weight stored input-major ([in, out]) so the forward
/// pass is a row-major matmul.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor, // I x O
    pub bias: Tensor,   // O
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut RngStream) -> Linear {
        let std = (2.0 / in_dim as f64).sqrt();
        let mut weight = Tensor::zeros(&[in_dim, out_dim]);
        for v in weight.data_mut() {
            *v = rng.normal() * std;
        }
        Linear { weight, bias: Tensor::zeros(&[out_dim]) }
    }

    pub fn new_zeroed(in_dim: usize, out_dim: usize) -> Linear {
        Linear { weight: Tensor::zeros(&[in_dim, out_dim]), bias: Tensor::zeros(&[out_dim]) }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, i) = x.dims2()?;
        let (wi, o) = self.weight.dims2()?;
        if i != wi {
            return Err(Error::shape(format!("linear expects {wi} inputs, got {i}")));
        }
        let mut out = Tensor::zeros(&[n, o]);
        matmul_acc(x.data(), self.weight.data(), n, i, o, out.data_mut());
        for s in 0..n {
            axpy(1.0, self.bias.data(), out.sample_mut(s));
        }
        Ok(out)
    }

    /// Input gradient plus accumulated weight/bias gradients (samples in
    /// ascending order).
    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        grad_weight: &mut Tensor,
        grad_bias: &mut Tensor,
    ) -> Result<Tensor> {
        let (n, i) = x.dims2()?;
        let (_, o) = self.weight.dims2()?;
        let gw = grad_weight.data_mut();
        let gb = grad_bias.data_mut();
        for s in 0..n {
            let g_row = grad_out.sample(s);
            let x_row = x.sample(s);
            for (ii, &xv) in x_row.iter().enumerate() {
                axpy(xv, g_row, &mut gw[ii * o..(ii + 1) * o]);
            }
            axpy(1.0, g_row, gb);
        }
        let mut grad_in = Tensor::zeros(&[n, i]);
        for s in 0..n {
            let g_row = grad_out.sample(s);
            let gi_row = grad_in.sample_mut(s);
            for ii in 0..i {
                gi_row[ii] = dot(g_row, &self.weight.data()[ii * o..(ii + 1) * o]);
            }
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_by_hand() {
        // W = [[1, 2], [3, 4]], b = [10, 20], x = [1, 1] -> [14, 26]
        let layer = Linear {
            weight: Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap(),
            bias: Tensor::from_vec(&[2], vec![10., 20.]).unwrap(),
        };
        let x = Tensor::from_vec(&[1, 2], vec![1., 1.]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[14., 26.]);
    }

    #[test]
    fn input_grad_is_w_transpose_times_g() {
        // Spec example: y = Wx, upstream g -> input grad W^T g.
        let layer = Linear {
            weight: Tensor::from_vec(&[2, 3], vec![1., -2., 0.5, 3., 1., -1.]).unwrap(),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::from_vec(&[1, 2], vec![0.3, -0.7]).unwrap();
        let g = Tensor::from_vec(&[1, 3], vec![1., 2., 3.]).unwrap();
        let mut gw = Tensor::zeros(&[2, 3]);
        let mut gb = Tensor::zeros(&[3]);
        let gx = layer.backward(&x, &g, &mut gw, &mut gb).unwrap();
        // row i of W dotted with g
        assert!((gx.data()[0] - (1.0 * 1. + -2.0 * 2. + 0.5 * 3.)).abs() < 1e-14);
        assert!((gx.data()[1] - (3.0 * 1. + 1.0 * 2. + -1.0 * 3.)).abs() < 1e-14);
        // grad_w[i][o] = x_i * g_o, grad_b = g
        assert!((gw.data()[0 * 3 + 1] - 0.3 * 2.0).abs() < 1e-14);
        assert!((gw.data()[1 * 3 + 2] - -0.7 * 3.0).abs() < 1e-14);
        assert_eq!(gb.data(), g.data());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngStream::from_seed(21);
        let layer = Linear::new(3, 4, &mut rng);
        let mut x = Tensor::zeros(&[2, 3]);
        rng.fill_normal(x.data_mut());
        let mut up = Tensor::zeros(&[2, 4]);
        rng.fill_normal(up.data_mut());
        let objective = |l: &Linear, x: &Tensor| -> f64 {
            l.forward(x).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        let mut gw = Tensor::zeros(&[3, 4]);
        let mut gb = Tensor::zeros(&[4]);
        let gx = layer.backward(&x, &up, &mut gw, &mut gb).unwrap();
        let h = 1e-6;
        for idx in 0..12 {
            let mut lp = layer.clone();
            let mut lm = layer.clone();
            lp.weight.data_mut()[idx] += h;
            lm.weight.data_mut()[idx] -= h;
            let fd = (objective(&lp, &x) - objective(&lm, &x)) / (2.0 * h);
            assert!((fd - gw.data()[idx]).abs() < 1e-6);
        }
        for idx in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.data_mut()[idx] += h;
            xm.data_mut()[idx] -= h;
            let fd = (objective(&layer, &xp) - objective(&layer, &xm)) / (2.0 * h);
            assert!((fd - gx.data()[idx]).abs() < 1e-6);
        }
    }
}
