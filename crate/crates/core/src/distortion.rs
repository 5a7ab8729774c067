//! Parameterized image degradations used to manufacture "generated" sets
//! for the monotonicity experiments. All three are deterministic under a
//! seed, keyed per image index, and preserve shape and the u8 range.

use serde::{Deserialize, Serialize};

use crate::data::image_batch::ImageBatch;
use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    GaussianNoise,
    GaussianBlur,
    SaltPepper,
}

impl DistortionKind {
    pub fn parse(name: &str) -> Result<DistortionKind> {
        match name {
            "gaussian_noise" => Ok(DistortionKind::GaussianNoise),
            "gaussian_blur" => Ok(DistortionKind::GaussianBlur),
            "salt_pepper" => Ok(DistortionKind::SaltPepper),
            _ => Err(Error::config(format!(
                "unknown distortion kind {name:?}; valid kinds: gaussian_noise, gaussian_blur, salt_pepper"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistortionKind::GaussianNoise => "gaussian_noise",
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::SaltPepper => "salt_pepper",
        }
    }
}

/// A distortion kind with its scalar parameter and seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub param: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DistortionKind::GaussianNoise | DistortionKind::SaltPepper => {
                if !(0.0..=1.0).contains(&self.param) {
                    return Err(Error::config(format!(
                        "{} parameter must lie in [0, 1], got {}",
                        self.kind.name(),
                        self.param
                    )));
                }
            }
            DistortionKind::GaussianBlur => {
                if self.param < 0.0 || !self.param.is_finite() {
                    return Err(Error::config(format!(
                        "blur radius must be nonnegative, got {}",
                        self.param
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, images: &ImageBatch) -> Result<ImageBatch> {
        self.validate()?;
        let rng = RngStream::from_seed(self.seed);
        match self.kind {
            DistortionKind::GaussianNoise => gaussian_noise(images, self.param, &rng),
            DistortionKind::GaussianBlur => gaussian_blur(images, self.param),
            DistortionKind::SaltPepper => salt_pepper(images, self.param, &rng),
        }
    }
}

/// Standard-normal draws mapped affinely onto [0, 255]: z clipped to ±3
/// sigma, then 255 * (z + 3) / 6. Blend: clip((1-a)*X + a*N), rounded.
pub fn gaussian_noise(images: &ImageBatch, alpha: f64, rng: &RngStream) -> Result<ImageBatch> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut out = images.clone();
    for i in 0..images.n {
        let mut sub = rng.substream(i as u64);
        let dst = out.image_mut(i);
        for p in dst.iter_mut() {
            let z = sub.normal().clamp(-3.0, 3.0);
            let noise = z * (255.0 / 6.0) + 127.5;
            let v = (1.0 - alpha) * (*p as f64) + alpha * noise;
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Separable Gaussian blur with sigma = radius, kernel truncated at
/// ceil(3 sigma) and renormalized, reflect padding, per channel.
/// radius = 0 is the identity.
pub fn gaussian_blur(images: &ImageBatch, radius: f64) -> Result<ImageBatch> {
    if radius < 0.0 || !radius.is_finite() {
        return Err(Error::config(format!("blur radius must be nonnegative, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(images.clone());
    }
    let sigma = radius;
    let half = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * half as usize + 1);
    for k in -half..=half {
        kernel.push((-(k as f64) * (k as f64) / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= sum;
    }

    let (h, w) = (images.h as isize, images.w as isize);
    // scipy-style 'reflect': (d c b a | a b c d | d c b a)
    let reflect = |i: isize, n: isize| -> usize {
        let period = 2 * n;
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - 1 - j;
        }
        j as usize
    };

    let mut out = images.clone();
    let plane = (h * w) as usize;
    let mut row_pass = vec![0.0f64; plane];
    let mut col_pass = vec![0.0f64; plane];
    for i in 0..images.n {
        for c in 0..images.c {
            let src = &images.image(i)[c * plane..(c + 1) * plane];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (ki, kv) in kernel.iter().enumerate() {
                        let xx = reflect(x + ki as isize - half, w);
                        acc += kv * src[(y as usize) * w as usize + xx] as f64;
                    }
                    row_pass[(y as usize) * w as usize + x as usize] = acc;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (ki, kv) in kernel.iter().enumerate() {
                        let yy = reflect(y + ki as isize - half, h);
                        acc += kv * row_pass[yy * w as usize + x as usize];
                    }
                    col_pass[(y as usize) * w as usize + x as usize] = acc;
                }
            }
            let dst = &mut out.image_mut(i)[c * plane..(c + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(col_pass.iter()) {
                *d = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// One uniform draw per spatial location (shared across channels):
/// u < p/2 sets the pixel white (255), u > 1 - p/2 sets it black (0).
pub fn salt_pepper(images: &ImageBatch, p: f64, rng: &RngStream) -> Result<ImageBatch> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("probability must lie in [0, 1], got {p}")));
    }
    let mut out = images.clone();
    let plane = images.h * images.w;
    for i in 0..images.n {
        let mut sub = rng.substream(i as u64);
        let img = out.image_mut(i);
        for pos in 0..plane {
            let u = sub.uniform();
            if u < p / 2.0 {
                for c in 0..images.c {
                    img[c * plane + pos] = 255;
                }
            } else if u > 1.0 - p / 2.0 {
                for c in 0..images.c {
                    img[c * plane + pos] = 0;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_images::gen_texture_images;

    fn mean_abs_change(a: &ImageBatch, b: &ImageBatch) -> f64 {
        a.pixels
            .iter()
            .zip(&b.pixels)
            .map(|(&x, &y)| (x as f64 - y as f64).abs())
            .sum::<f64>()
            / a.pixels.len() as f64
    }

    #[test]
    fn noise_alpha_zero_is_identity() {
        let imgs = gen_texture_images(3, 8, 8, 2.0, &RngStream::from_seed(1));
        let out = gaussian_noise(&imgs, 0.0, &RngStream::from_seed(2)).unwrap();
        assert_eq!(out.pixels, imgs.pixels);
    }

    #[test]
    fn noise_alpha_one_ignores_input() {
        let a = gen_texture_images(2, 8, 8, 2.0, &RngStream::from_seed(3));
        let mut b = a.clone();
        for p in &mut b.pixels {
            *p = p.wrapping_add(40);
        }
        let rng = RngStream::from_seed(4);
        let na = gaussian_noise(&a, 1.0, &rng).unwrap();
        let nb = gaussian_noise(&b, 1.0, &rng).unwrap();
        assert_eq!(na.pixels, nb.pixels, "alpha=1 output must not depend on the input");
    }

    #[test]
    fn noise_rejects_out_of_range_alpha() {
        let imgs = ImageBatch::zeros(1, 1, 2, 2);
        assert!(matches!(
            gaussian_noise(&imgs, 1.5, &RngStream::from_seed(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn blur_zero_identity_and_constant_invariance() {
        let imgs = gen_texture_images(2, 8, 8, 2.0, &RngStream::from_seed(5));
        assert_eq!(gaussian_blur(&imgs, 0.0).unwrap().pixels, imgs.pixels);
        let flat = ImageBatch::from_pixels(1, 3, 6, 6, vec![173; 3 * 36]).unwrap();
        for r in [0.25, 0.5, 1.0, 2.0] {
            assert_eq!(gaussian_blur(&flat, r).unwrap().pixels, flat.pixels, "r={r}");
        }
    }

    #[test]
    fn blur_delta_reproduces_kernel() {
        // single white pixel at the center of a black image
        let mut imgs = ImageBatch::zeros(1, 1, 9, 9);
        imgs.pixels[4 * 9 + 4] = 255;
        let sigma: f64 = 1.0;
        let out = gaussian_blur(&imgs, sigma).unwrap();
        let half = 3isize;
        let mut kernel = Vec::new();
        for k in -half..=half {
            kernel.push((-(k as f64) * (k as f64) / (2.0 * sigma * sigma)).exp());
        }
        let sum: f64 = kernel.iter().sum();
        for y in 0..9isize {
            for x in 0..9isize {
                let ky = y - 4;
                let kx = x - 4;
                let expect = if ky.abs() <= half && kx.abs() <= half {
                    255.0 * (kernel[(ky + half) as usize] / sum) * (kernel[(kx + half) as usize] / sum)
                } else {
                    0.0
                };
                let got = out.pixels[(y * 9 + x) as usize] as f64;
                assert!(
                    (got - expect).abs() <= 0.5 + 1e-9,
                    "at ({y},{x}): got {got}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn salt_pepper_extremes() {
        let imgs = gen_texture_images(1, 100, 100, 2.0, &RngStream::from_seed(6));
        assert_eq!(salt_pepper(&imgs, 0.0, &RngStream::from_seed(7)).unwrap().pixels, imgs.pixels);

        // p = 1: every pixel goes to 0 or 255, salt fraction 0.5 +- 0.02
        let big = gen_texture_images(100, 100, 100, 2.0, &RngStream::from_seed(8));
        let out = salt_pepper(&big, 1.0, &RngStream::from_seed(9)).unwrap();
        let mut salt = 0usize;
        for &p in &out.pixels {
            assert!(p == 0 || p == 255);
            if p == 255 {
                salt += 1;
            }
        }
        let frac = salt as f64 / out.pixels.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "salt fraction {frac}");
    }

    #[test]
    fn salt_pepper_alters_binomial_fraction() {
        // p = 0.01 over 10^6 locations -> altered fraction in [0.008, 0.012]
        let imgs = gen_texture_images(100, 100, 100, 2.0, &RngStream::from_seed(10));
        let out = salt_pepper(&imgs, 0.01, &RngStream::from_seed(11)).unwrap();
        let plane = 100 * 100;
        let mut altered = 0usize;
        for i in 0..100 {
            let a = imgs.image(i);
            let b = out.image(i);
            for pos in 0..plane {
                // a location is altered iff it was forced to 0 or 255 on all channels
                let forced = (0..3).all(|c| b[c * plane + pos] == 255)
                    || (0..3).all(|c| b[c * plane + pos] == 0);
                if forced && (0..3).any(|c| a[c * plane + pos] != b[c * plane + pos]) {
                    altered += 1;
                }
            }
        }
        let frac = altered as f64 / 1_000_000.0;
        assert!((0.008..=0.012).contains(&frac), "altered fraction {frac}");
    }

    #[test]
    fn shared_channel_draws_make_white_or_black_pixels() {
        let imgs = gen_texture_images(4, 16, 16, 2.0, &RngStream::from_seed(12));
        let out = salt_pepper(&imgs, 0.3, &RngStream::from_seed(13)).unwrap();
        let plane = 16 * 16;
        for i in 0..4 {
            let a = imgs.image(i);
            let b = out.image(i);
            for pos in 0..plane {
                let changed = (0..3).any(|c| a[c * plane + pos] != b[c * plane + pos]);
                if changed {
                    let all255 = (0..3).all(|c| b[c * plane + pos] == 255);
                    let all0 = (0..3).all(|c| b[c * plane + pos] == 0);
                    assert!(
                        all255 || all0,
                        "corrupted pixel must be white or black across channels"
                    );
                }
            }
        }
    }

    #[test]
    fn severity_is_monotone_in_parameter() {
        let imgs = gen_texture_images(6, 16, 16, 2.0, &RngStream::from_seed(14));
        let mut last = -1.0;
        for alpha in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let out = gaussian_noise(&imgs, alpha, &RngStream::from_seed(15)).unwrap();
            let change = mean_abs_change(&imgs, &out);
            assert!(change >= last, "alpha {alpha}: {change} < {last}");
            last = change;
        }
        let mut last = -1.0;
        for r in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let out = gaussian_blur(&imgs, r).unwrap();
            let change = mean_abs_change(&imgs, &out);
            assert!(change >= last, "r {r}: {change} < {last}");
            last = change;
        }
        let mut last = -1.0;
        for p in [0.0, 0.01, 0.05, 0.1, 0.3] {
            let out = salt_pepper(&imgs, p, &RngStream::from_seed(16)).unwrap();
            let change = mean_abs_change(&imgs, &out);
            assert!(change >= last, "p {p}: {change} < {last}");
            last = change;
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let imgs = gen_texture_images(3, 8, 8, 2.0, &RngStream::from_seed(17));
        let spec = DistortionSpec { kind: DistortionKind::SaltPepper, param: 0.2, seed: 99 };
        assert_eq!(spec.apply(&imgs).unwrap(), spec.apply(&imgs).unwrap());
        let spec2 = DistortionSpec { seed: 100, ..spec };
        assert_ne!(spec.apply(&imgs).unwrap(), spec2.apply(&imgs).unwrap());
    }
}
