//! Row-major f64 matrix products.
//!
//! Thin wrappers over `matrixmultiply::dgemm`. Parallel variants split the
//! output into fixed-size row chunks, so every output element is produced by
//! exactly one sequential kernel call and results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

/// Rows per parallel chunk. Fixed so that chunking (and therefore bit-level
/// results) is independent of the thread pool.
const PAR_ROWS: usize = 64;

/// c[m,n] = a[m,k] * b[k,n] + beta * c
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c[m,n] = a^T[m,k] * b[k,n] + beta * c, where `a` is stored as [k,m].
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c[m,n] = a[m,k] * b^T[k,n] + beta * c, where `b` is stored as [n,k].
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Parallel `gemm` over fixed-size row chunks; overwrites `c`.
pub fn par_gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m <= PAR_ROWS {
        gemm(m, k, n, a, b, 0.0, c);
        return;
    }
    c.par_chunks_mut(PAR_ROWS * n)
        .zip(a.par_chunks(PAR_ROWS * k))
        .for_each(|(cc, ac)| {
            let rows = cc.len() / n;
            gemm(rows, k, n, ac, b, 0.0, cc);
        });
}

/// Parallel `gemm_tn` (`a` stored [k,m]) over fixed-size row chunks of the
/// output; overwrites `c`.
pub fn par_gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m <= PAR_ROWS {
        gemm_tn(m, k, n, a, b, 0.0, c);
        return;
    }
    c.par_chunks_mut(PAR_ROWS * n)
        .enumerate()
        .for_each(|(chunk, cc)| {
            let row0 = chunk * PAR_ROWS;
            let rows = cc.len() / n;
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    k,
                    n,
                    1.0,
                    a.as_ptr().add(row0),
                    1,
                    m as isize,
                    b.as_ptr(),
                    n as isize,
                    1,
                    0.0,
                    cc.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                for j in 0..n {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (7, 5, 9);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.73).cos()).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, &b, 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // a^T variant: store a as [k,m].
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_tn(m, k, n, &at, &b, 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // b^T variant: store b as [n,k].
        let mut bt = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, 0.0, &mut c);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn par_gemm_matches_serial() {
        let (m, k, n) = (200, 33, 47);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.11).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.29).cos()).collect();
        let mut serial = vec![0.0; m * n];
        gemm(m, k, n, &a, &b, 0.0, &mut serial);
        let mut par = vec![0.0; m * n];
        par_gemm(m, k, n, &a, &b, &mut par);
        for (x, y) in par.iter().zip(&serial) {
            assert!((x - y).abs() < 1e-12);
        }
        // Bit-determinism across repeated parallel runs.
        let mut par2 = vec![0.0; m * n];
        par_gemm(m, k, n, &a, &b, &mut par2);
        assert_eq!(par, par2);
    }
}
