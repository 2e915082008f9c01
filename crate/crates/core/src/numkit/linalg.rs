//! Slice-level vector kernels. Every routine assumes equal lengths and
//! panics (via debug assertions) otherwise; callers validate dimensions at
//! the API boundary.

use alloc::vec::Vec;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(norm_sq(a))
}

#[inline]
pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

pub fn dist1(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Row-major matrix-vector product `out = W x + bias` with `W` of shape
/// `rows x x.len()`.
pub fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), bias.len() * cols);
    for ((o, row), b) in out.iter_mut().zip(w.chunks_exact(cols)).zip(bias) {
        *o = dot(row, x) + b;
    }
}

/// `out = W^T v` for a row-major `W` of shape `v.len() x out.len()`.
pub fn affine_transpose(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), v.len() * cols);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (row, vi) in w.chunks_exact(cols).zip(v) {
        axpy(*vi, row, out);
    }
}
