use super::{LabelEncoding, Loss, Sample};
use crate::error::{check_dim, Result};
use crate::numkit::linalg::{axpy, dot};

/// `ℓ(θ; (x, y)) = ½‖θ - x‖²`; labels are ignored.
///
/// Strongly convex with unit smoothness, useful as a reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLoss {
    dim: usize,
}

impl QuadraticLoss {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Loss for QuadraticLoss {
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
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, z.x.len())?;
        Ok(0.5
            * theta
                .iter()
                .zip(&z.x)
                .map(|(t, x)| (t - x) * (t - x))
                .sum::<f64>())
    }

    fn accumulate_grad(
        &self,
        theta: &[f64],
        z: &Sample,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, z.x.len())?;
        check_dim(self.dim, out.len())?;
        axpy(weight, theta, out);
        axpy(-weight, &z.x, out);
        Ok(())
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Result<i32> {
        check_dim(self.dim, theta.len())?;
        Ok(if dot(theta, x) >= 0.0 { 1 } else { -1 })
    }
}
