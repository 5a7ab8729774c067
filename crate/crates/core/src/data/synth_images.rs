//! Procedural RGB texture images: smooth color fields, sharp-edged shapes,
//! and fine pixel grain. Deterministic per (seed, image index), so a set
//! can be generated or regenerated in any order.

use crate::data::image_batch::ImageBatch;
use crate::numerics::rng::RngStream;

/// Generate `n` textured images at `h` x `w`. `grain_sd` is the standard
/// deviation (in intensity levels) of the per-pixel noise floor.
pub fn gen_texture_images(n: usize, h: usize, w: usize, grain_sd: f64, rng: &RngStream) -> ImageBatch {
    let mut batch = ImageBatch::zeros(n, 3, h, w);
    for i in 0..n {
        let mut sub = rng.substream(i as u64);
        render_one(batch.image_mut(i), h, w, grain_sd, &mut sub);
    }
    batch
}

fn render_one(out: &mut [u8], h: usize, w: usize, grain_sd: f64, rng: &mut RngStream) {
    let mut field = vec![0.0f64; 3 * h * w];

    // Smooth background: per-channel offset plus two shared sinusoidal waves.
    let base = [
        60.0 + 140.0 * rng.uniform(),
        60.0 + 140.0 * rng.uniform(),
        60.0 + 140.0 * rng.uniform(),
    ];
    let mut waves = Vec::new();
    for _ in 0..2 {
        let fx = (0.03 + 0.12 * rng.uniform()) * std::f64::consts::TAU;
        let fy = (0.03 + 0.12 * rng.uniform()) * std::f64::consts::TAU;
        let phase = std::f64::consts::TAU * rng.uniform();
        let amp = [
            10.0 + 30.0 * rng.uniform(),
            10.0 + 30.0 * rng.uniform(),
            10.0 + 30.0 * rng.uniform(),
        ];
        waves.push((fx, fy, phase, amp));
    }
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let mut v = base[c];
                for (fx, fy, phase, amp) in &waves {
                    v += amp[c] * (fx * x as f64 + fy * y as f64 + phase).sin();
                }
                field[(c * h + y) * w + x] = v;
            }
        }
    }

    // Sharp-edged shapes: solid rectangles and discs.
    let n_shapes = 2 + rng.below(3) as usize;
    for _ in 0..n_shapes {
        let color = [rng.below(256) as f64, rng.below(256) as f64, rng.below(256) as f64];
        if rng.below(2) == 0 {
            let x0 = rng.below(w as u64) as usize;
            let y0 = rng.below(h as u64) as usize;
            let sw = 1 + rng.below((w / 2).max(1) as u64) as usize;
            let sh = 1 + rng.below((h / 2).max(1) as u64) as usize;
            for y in y0..(y0 + sh).min(h) {
                for x in x0..(x0 + sw).min(w) {
                    for c in 0..3 {
                        field[(c * h + y) * w + x] = color[c];
                    }
                }
            }
        } else {
            let cx = rng.below(w as u64) as f64;
            let cy = rng.below(h as u64) as f64;
            let r = 1.0 + rng.uniform() * (w.min(h) as f64 / 3.0);
            for y in 0..h {
                for x in 0..w {
                    let dx = x as f64 - cx;
                    let dy = y as f64 - cy;
                    if dx * dx + dy * dy <= r * r {
                        for c in 0..3 {
                            field[(c * h + y) * w + x] = color[c];
                        }
                    }
                }
            }
        }
    }

    // Grain.
    for v in field.iter_mut() {
        *v += grain_sd * rng.normal();
    }
    for (o, v) in out.iter_mut().zip(&field) {
        *o = v.round().clamp(0.0, 255.0) as u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_order_independent() {
        let rng = RngStream::from_seed(42);
        let a = gen_texture_images(4, 8, 8, 2.0, &rng);
        let b = gen_texture_images(4, 8, 8, 2.0, &rng);
        assert_eq!(a.pixels, b.pixels);
        // image 2 alone equals image 2 of the batch
        let solo = gen_texture_images(3, 8, 8, 2.0, &rng);
        assert_eq!(solo.image(2), a.image(2));
    }

    #[test]
    fn images_have_texture() {
        let rng = RngStream::from_seed(7);
        let batch = gen_texture_images(8, 16, 16, 2.0, &rng);
        for i in 0..8 {
            let img = batch.image(i);
            let mean: f64 = img.iter().map(|&p| p as f64).sum::<f64>() / img.len() as f64;
            let var: f64 =
                img.iter().map(|&p| (p as f64 - mean).powi(2)).sum::<f64>() / img.len() as f64;
            assert!(var > 25.0, "image {i} flat (var {var})");
        }
    }
}
