use alloc::vec::Vec;

use super::{sigmoid, LabelEncoding, Loss, Sample};
use crate::error::{check_dim, Error, Result};
use crate::numkit::linalg::{axpy, dot, norm_inf, norm_sq};

/// Sigmoid loss over a linear score,
/// `ℓ(θ; (x, y)) = 1 / (1 + exp(c·y·⟨x, θ⟩)) + (β/2)‖θ‖²`.
///
/// Non-convex but smooth; bounded by one when `β = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSigmoidModel {
    c: f64,
    beta: f64,
    dim: usize,
}

impl LinearSigmoidModel {
    pub fn new(c: f64, beta: f64, dim: usize) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument("score scale c must be positive"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(
                "regularisation weight must be nonnegative",
            ));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive"));
        }
        Ok(Self { c, beta, dim })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn check(&self, theta: &[f64], z: &Sample) -> Result<()> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, z.x.len())?;
        LabelEncoding::PlusMinusOne.check(z.y)
    }

    // s = 1 / (1 + exp(c y <x, θ>))
    fn margin_term(&self, theta: &[f64], z: &Sample) -> f64 {
        sigmoid(-self.c * z.y as f64 * dot(&z.x, theta))
    }

    /// Standard-normal initial parameters.
    pub fn init_params(&self, rng: &mut crate::numkit::RngStream) -> Vec<f64> {
        rng.normal_vec(self.dim)
    }
}

impl Loss for LinearSigmoidModel {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn encoding(&self) -> LabelEncoding {
        LabelEncoding::PlusMinusOne
    }

    fn loss(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        self.check(theta, z)?;
        Ok(self.margin_term(theta, z) + 0.5 * self.beta * norm_sq(theta))
    }

    fn accumulate_grad(
        &self,
        theta: &[f64],
        z: &Sample,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()> {
        self.check(theta, z)?;
        check_dim(self.dim, out.len())?;
        let s = self.margin_term(theta, z);
        let coef = -self.c * z.y as f64 * s * (1.0 - s);
        axpy(weight * coef, &z.x, out);
        axpy(weight * self.beta, theta, out);
        Ok(())
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Result<i32> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, x.len())?;
        // a score of exactly zero goes to the positive class
        Ok(if dot(x, theta) >= 0.0 { 1 } else { -1 })
    }

    // |∂ℓ/∂x_j| = c·s(1-s)·|θ_j| ≤ c|θ_j|/4, so the L∞ norm bounds the
    // L1-Lipschitz constant.
    fn x_lipschitz(&self, theta: &[f64]) -> Option<f64> {
        Some(0.25 * self.c * norm_inf(theta))
    }
}
