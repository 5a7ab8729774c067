//! Small dense f64 matmul kernels shared by the conv and linear layers.
//!
//! Row-major throughout. The FMA-friendly form is the axpy update
//! `out_row += a * b_row`, which vectorizes without reassociating any
//! reduction; dot-product variants unroll into four independent
//! accumulators (a fixed order, so results stay deterministic).

/// out[m x n] += a[m x k] * b[k x n]
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut row = 0;
    // Four output rows at a time to amortize loads of b.
    while row + 4 <= m {
        let (r0, rest) = out[row * n..].split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, rest) = rest.split_at_mut(n);
        let r3 = &mut rest[..n];
        for kk in 0..k {
            let a0 = a[row * k + kk];
            let a1 = a[(row + 1) * k + kk];
            let a2 = a[(row + 2) * k + kk];
            let a3 = a[(row + 3) * k + kk];
            let brow = &b[kk * n..kk * n + n];
            for j in 0..n {
                let bj = brow[j];
                r0[j] = a0.mul_add(bj, r0[j]);
                r1[j] = a1.mul_add(bj, r1[j]);
                r2[j] = a2.mul_add(bj, r2[j]);
                r3[j] = a3.mul_add(bj, r3[j]);
            }
        }
        row += 4;
    }
    while row < m {
        let r = &mut out[row * n..row * n + n];
        for kk in 0..k {
            let av = a[row * k + kk];
            let brow = &b[kk * n..kk * n + n];
            for j in 0..n {
                r[j] = av.mul_add(brow[j], r[j]);
            }
        }
        row += 1;
    }
}

/// Parallel variant of [`matmul_acc`]: output rows are split into 4-row
/// blocks across threads. Every entry is computed exactly as in the serial
/// version, so results are identical regardless of thread count.
pub fn matmul_acc_par(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    use rayon::prelude::*;
    if m * k * n < 1 << 15 {
        return matmul_acc(a, b, m, k, n, out);
    }
    out.par_chunks_mut(4 * n).enumerate().for_each(|(blk, out_chunk)| {
        let row0 = blk * 4;
        let rows = out_chunk.len() / n;
        matmul_acc(&a[row0 * k..(row0 + rows) * k], b, rows, k, n, out_chunk);
    });
}

/// Dot product with four interleaved accumulators (fixed reduction order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..chunks {
        let j = i * 4;
        s0 = a[j].mul_add(b[j], s0);
        s1 = a[j + 1].mul_add(b[j + 1], s1);
        s2 = a[j + 2].mul_add(b[j + 2], s2);
        s3 = a[j + 3].mul_add(b[j + 3], s3);
    }
    let mut tail = 0.0;
    for j in chunks * 4..n {
        tail = a[j].mul_add(b[j], tail);
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// out_row[n] += s * b_row[n]
#[inline]
pub fn axpy(s: f64, b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(b.len(), out.len());
    for (o, &bv) in out.iter_mut().zip(b) {
        *o = s.mul_add(bv, *o);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::RngStream;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    out[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_matmul() {
        let mut rng = RngStream::from_seed(3);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (4, 9, 16), (13, 8, 5), (6, 6, 6)] {
            let mut a = vec![0.0; m * k];
            let mut b = vec![0.0; k * n];
            rng.fill_normal(&mut a);
            rng.fill_normal(&mut b);
            let mut out = vec![0.0; m * n];
            matmul_acc(&a, &b, m, k, n, &mut out);
            let expect = naive(&a, &b, m, k, n);
            for (x, y) in out.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn dot_matches_sum() {
        let mut rng = RngStream::from_seed(4);
        let mut a = vec![0.0; 103];
        let mut b = vec![0.0; 103];
        rng.fill_normal(&mut a);
        rng.fill_normal(&mut b);
        let expect: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - expect).abs() < 1e-12);
    }
}
