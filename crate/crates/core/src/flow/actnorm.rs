//! Per-dimension affine flow layer with data-dependent initialization,
//! used to stabilize 2D flow training.

use crate::error::Result;
use crate::flow::model::TransformResult;
use crate::numerics::store::{HasParams, ParamStore};
use crate::numerics::tensor::Tensor;

/// y = exp(log_s) * x + b per dimension; log_det = sum(log_s) per sample.
/// `init_flag` is carried as a parameter tensor so it survives checkpoints;
/// it never receives gradient.
#[derive(Clone, Debug)]
pub struct ActNorm {
    pub log_s: Tensor, // D
    pub b: Tensor,     // D
    pub init_flag: Tensor,
}

pub struct ActNormCache {
    x: Tensor,
}

impl ActNorm {
    pub fn new(dim: usize) -> ActNorm {
        ActNorm {
            log_s: Tensor::zeros(&[dim]),
            b: Tensor::zeros(&[dim]),
            init_flag: Tensor::zeros(&[1]),
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.init_flag.data()[0] > 0.5
    }

    pub fn mark_initialized(&mut self) {
        self.init_flag.data_mut()[0] = 1.0;
    }

    /// Set scale/shift so this batch maps to zero mean, unit variance.
    pub fn init_from_batch(&mut self, x: &Tensor) -> Result<()> {
        let (n, d) = x.dims2()?;
        let nf = n as f64;
        for j in 0..d {
            let mut mean = 0.0;
            for s in 0..n {
                mean += x.sample(s)[j];
            }
            mean /= nf;
            let mut var = 0.0;
            for s in 0..n {
                let dv = x.sample(s)[j] - mean;
                var += dv * dv;
            }
            var /= nf;
            let std = (var + 1e-12).sqrt();
            self.log_s.data_mut()[j] = -std.ln();
            self.b.data_mut()[j] = -mean / std;
        }
        self.mark_initialized();
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<TransformResult> {
        let (n, d) = x.dims2()?;
        let ld: f64 = self.log_s.data().iter().sum();
        let mut y = Tensor::zeros(x.shape());
        for s in 0..n {
            let xs = x.sample(s);
            let ys = y.sample_mut(s);
            for j in 0..d {
                ys[j] = self.log_s.data()[j].exp() * xs[j] + self.b.data()[j];
            }
        }
        y.check_finite("actnorm output")?;
        Ok(TransformResult { output: y, log_det: vec![ld; n] })
    }

    pub fn forward_train(&self, x: &Tensor) -> Result<(TransformResult, ActNormCache)> {
        let r = self.forward(x)?;
        Ok((r, ActNormCache { x: x.clone() }))
    }

    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        let (n, d) = y.dims2()?;
        let mut x = Tensor::zeros(y.shape());
        for s in 0..n {
            let ys = y.sample(s);
            let xs = x.sample_mut(s);
            for j in 0..d {
                xs[j] = (ys[j] - self.b.data()[j]) * (-self.log_s.data()[j]).exp();
            }
        }
        Ok(x)
    }

    pub fn backward(
        &self,
        cache: &ActNormCache,
        grad_y: &Tensor,
        grad_log_det: &[f64],
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Tensor> {
        let (n, d) = cache.x.dims2()?;
        let mut g_log_s = store.take_grad(&format!("{prefix}.log_s"))?;
        let mut g_b = store.take_grad(&format!("{prefix}.b"))?;
        let mut grad_x = Tensor::zeros(cache.x.shape());
        for s in 0..n {
            let gy = grad_y.sample(s);
            let xs = cache.x.sample(s);
            let gx = grad_x.sample_mut(s);
            for j in 0..d {
                let es = self.log_s.data()[j].exp();
                gx[j] = gy[j] * es;
                g_log_s.data_mut()[j] += gy[j] * xs[j] * es + grad_log_det[s];
                g_b.data_mut()[j] += gy[j];
            }
        }
        store.put_grad(&format!("{prefix}.log_s"), g_log_s);
        store.put_grad(&format!("{prefix}.b"), g_b);
        // init_flag gradient stays zero.
        Ok(grad_x)
    }
}

impl HasParams for ActNorm {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.log_s"), &self.log_s);
        f(&format!("{prefix}.b"), &self.b);
        f(&format!("{prefix}.init_flag"), &self.init_flag);
    }
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.log_s"), &mut self.log_s);
        f(&format!("{prefix}.b"), &mut self.b);
        f(&format!("{prefix}.init_flag"), &mut self.init_flag);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    #[test]
    fn init_standardizes_batch() {
        let mut rng = RngStream::from_seed(70);
        let mut x = Tensor::zeros(&[500, 2]);
        rng.fill_normal(x.data_mut());
        // shift/scale the raw normals
        for s in 0..500 {
            let row = x.sample_mut(s);
            row[0] = row[0] * 3.0 + 5.0;
            row[1] = row[1] * 0.5 - 2.0;
        }
        let mut an = ActNorm::new(2);
        assert!(!an.is_initialized());
        an.init_from_batch(&x).unwrap();
        assert!(an.is_initialized());
        let y = an.forward(&x).unwrap().output;
        for j in 0..2 {
            let mean: f64 = (0..500).map(|s| y.sample(s)[j]).sum::<f64>() / 500.0;
            let var: f64 = (0..500).map(|s| y.sample(s)[j].powi(2)).sum::<f64>() / 500.0 - mean * mean;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inverse_round_trips_and_logdet() {
        let mut rng = RngStream::from_seed(71);
        let mut an = ActNorm::new(3);
        rng.fill_normal(an.log_s.data_mut());
        rng.fill_normal(an.b.data_mut());
        let mut x = Tensor::zeros(&[4, 3]);
        rng.fill_normal(x.data_mut());
        let r = an.forward(&x).unwrap();
        let expected_ld: f64 = an.log_s.data().iter().sum();
        assert!((r.log_det[0] - expected_ld).abs() < 1e-12);
        let back = an.inverse(&r.output).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
