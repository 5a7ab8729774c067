//! Synthetic 2D distributions for metric demos and training sanity checks.

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

/// i.i.d. standard bivariate normal points, [n, 2].
pub fn gen_reference_gaussian(n: usize, rng: &mut RngStream) -> Tensor {
    let mut t = Tensor::zeros(&[n, 2]);
    rng.fill_normal(t.data_mut());
    t
}

/// Mixture of four Gaussians with means (±s, 0), (0, ±s) and shared
/// component covariance (1 - s²/2)·I, so the overall mean stays 0 and the
/// overall covariance stays the identity for every valid separation.
pub fn gen_mixture4(n: usize, separation: f64, rng: &mut RngStream) -> Result<Tensor> {
    let max = std::f64::consts::SQRT_2;
    if !(0.0..max).contains(&separation) {
        return Err(Error::config(format!(
            "separation must satisfy 0 <= s < sqrt(2) (component covariance positive definite), got {separation}"
        )));
    }
    let sigma = (1.0 - separation * separation / 2.0).sqrt();
    const MEANS: [(f64, f64); 4] = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)];
    let mut t = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        let (mx, my) = MEANS[rng.below(4) as usize];
        let row = t.sample_mut(i);
        row[0] = mx * separation + sigma * rng.normal();
        row[1] = my * separation + sigma * rng.normal();
    }
    Ok(t)
}

/// Two interleaved unit semicircles plus isotropic Gaussian noise; the
/// standard toy density-estimation target.
pub fn gen_two_moons(n: usize, noise_sd: f64, rng: &mut RngStream) -> Tensor {
    let mut t = Tensor::zeros(&[n, 2]);
    for i in 0..n {
        let theta = std::f64::consts::PI * rng.uniform();
        let upper = rng.below(2) == 0;
        let (mut x, mut y) = if upper {
            (theta.cos(), theta.sin())
        } else {
            (1.0 - theta.cos(), 0.5 - theta.sin())
        };
        x += noise_sd * rng.normal();
        y += noise_sd * rng.normal();
        let row = t.sample_mut(i);
        row[0] = x;
        row[1] = y;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(t: &Tensor) -> ([f64; 2], [[f64; 2]; 2]) {
        let n = t.shape()[0] as f64;
        let mut mean = [0.0; 2];
        for i in 0..t.shape()[0] {
            let row = t.sample(i);
            mean[0] += row[0];
            mean[1] += row[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut cov = [[0.0; 2]; 2];
        for i in 0..t.shape()[0] {
            let row = t.sample(i);
            let d = [row[0] - mean[0], row[1] - mean[1]];
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += d[a] * d[b];
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] /= n;
            }
        }
        (mean, cov)
    }

    #[test]
    fn reference_gaussian_moments() {
        let mut rng = RngStream::from_seed(300);
        let t = gen_reference_gaussian(100_000, &mut rng);
        let (mean, cov) = moments(&t);
        assert!(mean[0].abs() < 0.02 && mean[1].abs() < 0.02, "{mean:?}");
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a][b] - expect).abs() < 0.02, "{cov:?}");
            }
        }
    }

    #[test]
    fn reference_gaussian_reproducible() {
        let a = gen_reference_gaussian(100, &mut RngStream::from_seed(1));
        let b = gen_reference_gaussian(100, &mut RngStream::from_seed(1));
        assert_eq!(a, b);
    }

    #[test]
    fn mixture4_keeps_overall_moments_fixed() {
        // the construction's whole point: mean 0, covariance I for any s
        let mut rng = RngStream::from_seed(301);
        for s in [0.0, 0.7, 1.2, 1.35] {
            let t = gen_mixture4(100_000, s, &mut rng).unwrap();
            let (mean, cov) = moments(&t);
            assert!(mean[0].abs() < 0.03 && mean[1].abs() < 0.03, "s={s} mean {mean:?}");
            for a in 0..2 {
                for b in 0..2 {
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((cov[a][b] - expect).abs() < 0.03, "s={s} cov {cov:?}");
                }
            }
        }
    }

    #[test]
    fn mixture4_zero_separation_is_standard_normal_params() {
        // s = 0: all means at the origin, component covariance = I
        let mut rng = RngStream::from_seed(302);
        let t = gen_mixture4(50_000, 0.0, &mut rng).unwrap();
        let (mean, cov) = moments(&t);
        assert!(mean[0].abs() < 0.03 && mean[1].abs() < 0.03);
        assert!((cov[0][0] - 1.0).abs() < 0.03 && (cov[1][1] - 1.0).abs() < 0.03);
    }

    #[test]
    fn mixture4_separation_bounds() {
        let mut rng = RngStream::from_seed(303);
        assert!(gen_mixture4(10, 1.4, &mut rng).is_ok());
        assert!(matches!(gen_mixture4(10, 1.42, &mut rng), Err(Error::Config(_))));
        assert!(matches!(gen_mixture4(10, -0.1, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn two_moons_noiseless_points_lie_on_arcs() {
        let mut rng = RngStream::from_seed(304);
        let t = gen_two_moons(2000, 0.0, &mut rng);
        for i in 0..2000 {
            let [x, y] = [t.sample(i)[0], t.sample(i)[1]];
            // upper moon: x^2 + y^2 = 1, y >= 0
            let on_upper = ((x * x + y * y) - 1.0).abs() < 1e-12 && y >= -1e-12;
            // lower moon: (x-1)^2 + (y-0.5)^2 = 1, y <= 0.5
            let dx = x - 1.0;
            let dy = y - 0.5;
            let on_lower = ((dx * dx + dy * dy) - 1.0).abs() < 1e-12 && y <= 0.5 + 1e-12;
            assert!(on_upper || on_lower, "point ({x}, {y}) off both arcs");
        }
    }

    #[test]
    fn two_moons_bounded_with_small_noise() {
        let mut rng = RngStream::from_seed(305);
        let t = gen_two_moons(100_000, 0.1, &mut rng);
        let mut inside = 0usize;
        for i in 0..100_000 {
            let [x, y] = [t.sample(i)[0], t.sample(i)[1]];
            if (-1.5..=2.5).contains(&x) && (-1.0..=1.5).contains(&y) {
                inside += 1;
            }
        }
        assert!(inside as f64 / 100_000.0 >= 0.999, "inside fraction {inside}");
    }

    #[test]
    fn two_moons_reproducible() {
        let a = gen_two_moons(50, 0.05, &mut RngStream::from_seed(9));
        let b = gen_two_moons(50, 0.05, &mut RngStream::from_seed(9));
        assert_eq!(a, b);
    }
}
