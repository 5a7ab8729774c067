//! Raw pixel block: the unit of all dataset I/O and distortion.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// N x C x H x W block of 8-bit pixels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBatch {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<u8>,
}

impl ImageBatch {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> ImageBatch {
        ImageBatch { n, c, h, w, pixels: vec![0; n * c * h * w] }
    }

    pub fn from_pixels(n: usize, c: usize, h: usize, w: usize, pixels: Vec<u8>) -> Result<ImageBatch> {
        if pixels.len() != n * c * h * w {
            return Err(Error::shape(format!(
                "pixel buffer length {} does not match {}x{}x{}x{}",
                pixels.len(),
                n,
                c,
                h,
                w
            )));
        }
        Ok(ImageBatch { n, c, h, w, pixels })
    }

    pub fn image_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.image_len();
        &self.pixels[i * len..(i + 1) * len]
    }

    pub fn image_mut(&mut self, i: usize) -> &mut [u8] {
        let len = self.image_len();
        &mut self.pixels[i * len..(i + 1) * len]
    }

    /// Subset by image indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> ImageBatch {
        let len = self.image_len();
        let mut pixels = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        ImageBatch { n: indices.len(), c: self.c, h: self.h, w: self.w, pixels }
    }

    /// Pixel values as f64 (still integer-valued in [0, 255]).
    pub fn to_int_tensor(&self) -> Tensor {
        let data: Vec<f64> = self.pixels.iter().map(|&p| p as f64).collect();
        Tensor::from_vec(&[self.n, self.c, self.h, self.w], data).expect("consistent dims")
    }
}
