//! Binary coupling masks. Masked elements (value 1) pass through a coupling
//! unchanged; unmasked elements are transformed.

/// Partition of tensor elements by spatial or channel parity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    /// mask[h][w] = 1 iff (h + w + parity) even; identical for all channels.
    Checkerboard { parity: u8 },
    /// mask[c] = 1 iff (c + parity) even. On rank-2 inputs the "channel" is
    /// the coordinate index.
    Channel { parity: u8 },
}

impl Mask {
    pub fn checkerboard(parity: usize) -> Mask {
        Mask::Checkerboard { parity: (parity % 2) as u8 }
    }

    pub fn channel(parity: usize) -> Mask {
        Mask::Channel { parity: (parity % 2) as u8 }
    }

    /// Mask value at an NCHW coordinate (batch index irrelevant).
    #[inline]
    pub fn at_chw(&self, c: usize, h: usize, w: usize) -> f64 {
        match *self {
            Mask::Checkerboard { parity } => {
                if (h + w + parity as usize) % 2 == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Mask::Channel { parity } => {
                if (c + parity as usize) % 2 == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Mask value for a flat coordinate of a rank-2 sample.
    #[inline]
    pub fn at_dim(&self, d: usize) -> f64 {
        match *self {
            Mask::Channel { parity } => {
                if (d + parity as usize) % 2 == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            Mask::Checkerboard { .. } => panic!("checkerboard mask is undefined on vectors"),
        }
    }

    /// Materialized per-sample mask for a C x H x W slice.
    pub fn materialize_chw(&self, c: usize, h: usize, w: usize) -> Vec<f64> {
        let mut m = vec![0.0; c * h * w];
        for ci in 0..c {
            for hi in 0..h {
                for wi in 0..w {
                    m[(ci * h + hi) * w + wi] = self.at_chw(ci, hi, wi);
                }
            }
        }
        m
    }

    pub fn parity(&self) -> u8 {
        match *self {
            Mask::Checkerboard { parity } | Mask::Channel { parity } => parity,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mask::Checkerboard { .. } => "checkerboard",
            Mask::Channel { .. } => "channel",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkerboard_parity_formula() {
        let m = Mask::checkerboard(0);
        assert_eq!(m.at_chw(0, 0, 0), 1.0);
        assert_eq!(m.at_chw(0, 0, 1), 0.0);
        assert_eq!(m.at_chw(5, 1, 1), 1.0); // channel-independent
        let m1 = Mask::checkerboard(1);
        assert_eq!(m1.at_chw(0, 0, 0), 0.0);
        assert_eq!(m1.at_chw(0, 0, 1), 1.0);
    }

    #[test]
    fn channel_parity_formula() {
        let m = Mask::channel(0);
        assert_eq!(m.at_chw(0, 3, 7), 1.0);
        assert_eq!(m.at_chw(1, 3, 7), 0.0);
        assert_eq!(m.at_dim(2), 1.0);
        assert_eq!(Mask::channel(1).at_dim(2), 0.0);
    }

    #[test]
    fn masks_are_binary_and_complementary() {
        for parity in 0..2 {
            let m = Mask::checkerboard(parity);
            let vals = m.materialize_chw(2, 4, 4);
            assert!(vals.iter().all(|&v| v == 0.0 || v == 1.0));
            let o = Mask::checkerboard(parity + 1).materialize_chw(2, 4, 4);
            for (a, b) in vals.iter().zip(&o) {
                assert_eq!(a + b, 1.0);
            }
        }
    }
}
