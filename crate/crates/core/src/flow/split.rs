//! Split layer: factors out half the channels mid-flow and scores them
//! under the standard-normal prior immediately.

use crate::error::{Error, Result};
use crate::flow::prior_logp_per_sample;
use crate::numerics::tensor::Tensor;

/// (kept first half, dropped second half, per-sample prior log-density of
/// the dropped half).
pub fn split_forward(x: &Tensor) -> Result<(Tensor, Tensor, Vec<f64>)> {
    let (n, c, h, w) = x.dims4()?;
    if c % 2 != 0 {
        return Err(Error::shape(format!("split requires even channel count, got {c}")));
    }
    let half = c / 2;
    let mut kept = Tensor::zeros(&[n, half, h, w]);
    let mut dropped = Tensor::zeros(&[n, half, h, w]);
    let plane = h * w;
    for s in 0..n {
        let xs = x.sample(s);
        kept.sample_mut(s).copy_from_slice(&xs[..half * plane]);
        dropped.sample_mut(s).copy_from_slice(&xs[half * plane..]);
    }
    let logp = prior_logp_per_sample(&dropped);
    Ok((kept, dropped, logp))
}

/// Inverse: reassemble the full tensor from the kept half and a dropped
/// half (recorded during encoding, or drawn from the prior when sampling).
pub fn split_inverse(kept: &Tensor, dropped: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = kept.dims4()?;
    if dropped.shape() != kept.shape() {
        return Err(Error::shape("split halves must have identical shapes"));
    }
    let mut out = Tensor::zeros(&[n, 2 * c, h, w]);
    let plane = h * w;
    for s in 0..n {
        let os = out.sample_mut(s);
        os[..c * plane].copy_from_slice(kept.sample(s));
        os[c * plane..].copy_from_slice(dropped.sample(s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::LN_2PI;
    use crate::numerics::rng::RngStream;

    #[test]
    fn zero_dropped_half_scores_analytically() {
        // d dims of zeros -> -(d/2) log(2 pi)
        let x = Tensor::zeros(&[2, 4, 2, 2]);
        let (kept, dropped, logp) = split_forward(&x).unwrap();
        assert_eq!(kept.shape(), &[2, 2, 2, 2]);
        assert_eq!(dropped.shape(), &[2, 2, 2, 2]);
        let d = 2.0 * 2.0 * 2.0;
        for lp in logp {
            assert!((lp - (-(d / 2.0) * LN_2PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_with_recorded_half() {
        let mut rng = RngStream::from_seed(90);
        let mut x = Tensor::zeros(&[3, 6, 2, 2]);
        rng.fill_normal(x.data_mut());
        let (kept, dropped, _) = split_forward(&x).unwrap();
        let back = split_inverse(&kept, &dropped).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn contribution_matches_logpdf_sum_oracle() {
        let mut rng = RngStream::from_seed(91);
        let mut x = Tensor::zeros(&[2, 2, 3, 3]);
        rng.fill_normal(x.data_mut());
        let (_, dropped, logp) = split_forward(&x).unwrap();
        for s in 0..2 {
            // independent oracle: sum of univariate normal log-pdfs
            let oracle: f64 = dropped
                .sample(s)
                .iter()
                .map(|&z| -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln())
                .sum();
            assert!((logp[s] - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn odd_channels_rejected() {
        let x = Tensor::zeros(&[1, 3, 2, 2]);
        assert!(matches!(split_forward(&x), Err(Error::Shape(_))));
    }
}
