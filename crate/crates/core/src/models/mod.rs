//! Loss families `ℓ(θ; z)` with analytic gradients.
//!
//! Two models ship here: a sigmoid loss over a linear score with labels in
//! `{-1, +1}`, and a regularised binary cross entropy over a fixed
//! three-layer tanh network with labels in `{0, 1}`. [`QuadraticLoss`] is a
//! strongly convex stand-in used to sanity-check the optimizers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

mod linear;
mod mlp;
mod quadratic;

pub use linear::LinearSigmoidModel;
pub use mlp::{MlpBceModel, MlpLayout, DEFAULT_P_MIN};
pub use quadratic::QuadraticLoss;

/// How labels are encoded for a given model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelEncoding {
    /// `y ∈ {-1, +1}`
    PlusMinusOne,
    /// `y ∈ {0, 1}`
    ZeroOne,
}

impl LabelEncoding {
    pub fn name(self) -> &'static str {
        match self {
            LabelEncoding::PlusMinusOne => "plus-minus-one",
            LabelEncoding::ZeroOne => "zero-one",
        }
    }

    pub fn contains(self, y: i32) -> bool {
        match self {
            LabelEncoding::PlusMinusOne => y == -1 || y == 1,
            LabelEncoding::ZeroOne => y == 0 || y == 1,
        }
    }

    pub fn check(self, y: i32) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                label: y,
                encoding: self.name(),
            })
        }
    }

    /// Maps a label of this encoding onto `other`, treating the negative
    /// class of each scheme as equivalent.
    pub fn convert(self, y: i32, other: LabelEncoding) -> i32 {
        let positive = y == 1;
        match (other, positive) {
            (_, true) => 1,
            (LabelEncoding::PlusMinusOne, false) => -1,
            (LabelEncoding::ZeroOne, false) => 0,
        }
    }
}

/// One datum `z = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: i32,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: i32) -> Self {
        Self { x, y }
    }
}

/// A differentiable loss family `θ ↦ ℓ(θ; z)`.
pub trait Loss {
    /// Length of the parameter vector θ.
    fn param_dim(&self) -> usize;

    /// Length of the feature vector x.
    fn feature_dim(&self) -> usize;

    fn encoding(&self) -> LabelEncoding;

    fn loss(&self, theta: &[f64], z: &Sample) -> Result<f64>;

    /// `out += weight * ∇_θ ℓ(θ; z)`.
    fn accumulate_grad(
        &self,
        theta: &[f64],
        z: &Sample,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()>;

    fn grad(&self, theta: &[f64], z: &Sample) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.param_dim()];
        self.accumulate_grad(theta, z, 1.0, &mut g)?;
        Ok(g)
    }

    /// Hard decision for features `x`, expressed in [`Loss::encoding`].
    fn predict(&self, theta: &[f64], x: &[f64]) -> Result<i32>;

    /// A bound on the Lipschitz constant of `x ↦ ℓ(θ; (x, y))` with respect
    /// to the L1 norm on features, when one is available in closed form.
    fn x_lipschitz(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// Fraction of `samples` whose predicted label matches the stored one.
pub fn accuracy<L: Loss + ?Sized>(model: &L, theta: &[f64], samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let enc = model.encoding();
    let mut hits = 0usize;
    for z in samples {
        enc.check(z.y)?;
        if model.predict(theta, &z.x)? == z.y {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}
