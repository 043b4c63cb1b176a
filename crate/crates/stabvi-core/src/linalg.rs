//! Small dense-matrix helpers (row-major `Vec<f64>` storage).
//!
//! The benchmark systems are one- and two-dimensional, so a handful of naive
//! O(n^3) routines covers everything the crate needs; pulling in a linear
//! algebra crate would be the heavier choice here.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

/// `C = A * B` for row-major `ra x ca` times `ca x cb`.
pub fn matmul(a: &[f64], b: &[f64], ra: usize, ca: usize, cb: usize) -> Vec<f64> {
    let mut out = vec![0.0; ra * cb];
    for i in 0..ra {
        for k in 0..ca {
            let aik = a[i * ca + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..cb {
                out[i * cb + j] += aik * b[k * cb + j];
            }
        }
    }
    out
}

/// Transpose of a row-major `r x c` matrix.
pub fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Quadratic form `x' A x` for a square `n x n` matrix.
pub fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[i * n + j] * x[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// `y = A x` for row-major `r x c`.
pub fn matvec(a: &[f64], x: &[f64], r: usize, c: usize, y: &mut [f64]) {
    for i in 0..r {
        let mut acc = 0.0;
        for j in 0..c {
            acc += a[i * c + j] * x[j];
        }
        y[i] = acc;
    }
}

/// Whether `a` is symmetric within `tol`.
pub fn is_symmetric(a: &[f64], n: usize, tol: f64) -> bool {
    for i in 0..n {
        for j in (i + 1)..n {
            if fmath::abs(a[i * n + j] - a[j * n + i]) > tol {
                return false;
            }
        }
    }
    true
}

/// Cholesky factor of a symmetric matrix; `None` when a pivot drops below
/// `pivot_tol` (matrix not positive definite at that tolerance).
pub fn cholesky(a: &[f64], n: usize, pivot_tol: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= pivot_tol {
                    return None;
                }
                l[i * n + i] = fmath::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}
