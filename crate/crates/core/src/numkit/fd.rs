use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numkit::linalg::{norm2, sub};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient: entry `i` is
/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h`.
pub fn fd_gradient<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive",
        ));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Relative error `‖a - b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm2(a).max(norm2(b));
    if denom == 0.0 {
        0.0
    } else {
        norm2(&sub(a, b)) / denom
    }
}
