use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::{sigmoid, LabelEncoding, Loss, Sample};
use crate::error::{check_dim, Error, Result};
use crate::numkit::linalg::{affine, affine_transpose, axpy, dot, norm_sq};
use crate::numkit::RngStream;

/// Probability floor keeping the cross entropy finite.
pub const DEFAULT_P_MIN: f64 = 1e-12;

/// Parameter layout of `input -> hidden1 (tanh) -> hidden2 (tanh) -> 1
/// (sigmoid)`.
///
/// The flat parameter vector is laid out layer by layer from the input
/// side; each layer stores its row-major weight matrix followed by its
/// bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    input: usize,
    hidden1: usize,
    hidden2: usize,
}

impl MlpLayout {
    pub fn new(input: usize, hidden1: usize, hidden2: usize) -> Result<Self> {
        if input == 0 || hidden1 == 0 || hidden2 == 0 {
            return Err(Error::InvalidArgument("layer widths must be positive"));
        }
        Ok(Self {
            input,
            hidden1,
            hidden2,
        })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden1(&self) -> usize {
        self.hidden1
    }

    pub fn hidden2(&self) -> usize {
        self.hidden2
    }

    pub fn w1(&self) -> Range<usize> {
        0..self.hidden1 * self.input
    }

    pub fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden1
    }

    pub fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden2 * self.hidden1
    }

    pub fn b2(&self) -> Range<usize> {
        let s = self.w2().end;
        s..s + self.hidden2
    }

    pub fn w_out(&self) -> Range<usize> {
        let s = self.b2().end;
        s..s + self.hidden2
    }

    pub fn b_out(&self) -> Range<usize> {
        let s = self.w_out().end;
        s..s + 1
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.b_out().end
    }

    pub fn weight_ranges(&self) -> [Range<usize>; 3] {
        [self.w1(), self.w2(), self.w_out()]
    }

    pub fn bias_ranges(&self) -> [Range<usize>; 3] {
        [self.b1(), self.b2(), self.b_out()]
    }
}

/// Regularised binary cross entropy over the fixed three-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBceModel {
    layout: MlpLayout,
    beta: f64,
    p_min: f64,
}

struct Activations {
    a1: Vec<f64>,
    a2: Vec<f64>,
    logit: f64,
}

impl MlpBceModel {
    pub fn new(layout: MlpLayout, beta: f64) -> Result<Self> {
        Self::with_p_min(layout, beta, DEFAULT_P_MIN)
    }

    pub fn with_p_min(layout: MlpLayout, beta: f64, p_min: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(
                "regularisation weight must be nonnegative",
            ));
        }
        if !(p_min > 0.0 && p_min < 0.5) {
            return Err(Error::InvalidArgument(
                "probability floor must lie in (0, 0.5)",
            ));
        }
        Ok(Self {
            layout,
            beta,
            p_min,
        })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    /// Weights drawn from N(0, 1), biases set to `bias_init`.
    pub fn init_params(&self, rng: &mut RngStream, bias_init: f64) -> Vec<f64> {
        let mut theta = vec![0.0; self.layout.param_count()];
        for r in self.layout.weight_ranges() {
            theta[r].iter_mut().for_each(|w| *w = rng.standard_normal());
        }
        for r in self.layout.bias_ranges() {
            theta[r].iter_mut().for_each(|b| *b = bias_init);
        }
        theta
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        check_dim(self.layout.param_count(), theta.len())?;
        check_dim(self.layout.input, x.len())
    }

    fn activations(&self, theta: &[f64], x: &[f64]) -> Activations {
        let l = &self.layout;
        let mut a1 = vec![0.0; l.hidden1];
        affine(&theta[l.w1()], &theta[l.b1()], x, &mut a1);
        a1.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let mut a2 = vec![0.0; l.hidden2];
        affine(&theta[l.w2()], &theta[l.b2()], &a1, &mut a2);
        a2.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let logit = dot(&theta[l.w_out()], &a2) + theta[l.b_out()][0];
        Activations { a1, a2, logit }
    }

    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.p_min, 1.0 - self.p_min)
    }

    /// Network output `f_θ(x)`, clamped to `[p_min, 1 - p_min]`.
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        self.check(theta, x)?;
        Ok(self.clamp(sigmoid(self.activations(theta, x).logit)))
    }

    // Backpropagates `dlogit` (the derivative of some scalar with respect
    // to the output logit) into parameter and/or input gradients.
    fn backward(
        &self,
        theta: &[f64],
        x: &[f64],
        act: &Activations,
        dlogit: f64,
        mut param_out: Option<(&mut [f64], f64)>,
        x_out: Option<&mut [f64]>,
    ) {
        let l = &self.layout;
        let w_out = &theta[l.w_out()];
        let d2: Vec<f64> = w_out
            .iter()
            .zip(&act.a2)
            .map(|(w, a)| dlogit * w * (1.0 - a * a))
            .collect();
        let mut d1 = vec![0.0; l.hidden1];
        affine_transpose(&theta[l.w2()], &d2, &mut d1);
        d1.iter_mut()
            .zip(&act.a1)
            .for_each(|(d, a)| *d *= 1.0 - a * a);

        if let Some((out, weight)) = param_out.as_mut() {
            let weight = *weight;
            axpy(weight * dlogit, &act.a2, &mut out[l.w_out()]);
            out[l.b_out()][0] += weight * dlogit;
            for (row, di) in out[l.w2()].chunks_exact_mut(l.hidden1).zip(&d2) {
                axpy(weight * di, &act.a1, row);
            }
            axpy(weight, &d2, &mut out[l.b2()]);
            for (row, di) in out[l.w1()].chunks_exact_mut(l.input).zip(&d1) {
                axpy(weight * di, x, row);
            }
            axpy(weight, &d1, &mut out[l.b1()]);
        }
        if let Some(gx) = x_out {
            affine_transpose(&theta[l.w1()], &d1, gx);
        }
    }

    /// Gradient of the network output with respect to the input features.
    pub fn grad_x(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(theta, x)?;
        let act = self.activations(theta, x);
        let p = sigmoid(act.logit);
        let mut gx = vec![0.0; self.layout.input];
        self.backward(theta, x, &act, p * (1.0 - p), None, Some(&mut gx));
        Ok(gx)
    }
}

impl Loss for MlpBceModel {
    fn param_dim(&self) -> usize {
        self.layout.param_count()
    }

    fn feature_dim(&self) -> usize {
        self.layout.input
    }

    fn encoding(&self) -> LabelEncoding {
        LabelEncoding::ZeroOne
    }

    fn loss(&self, theta: &[f64], z: &Sample) -> Result<f64> {
        self.check(theta, &z.x)?;
        LabelEncoding::ZeroOne.check(z.y)?;
        let logit = self.activations(theta, &z.x).logit;
        // p and 1-p evaluated separately to keep precision near saturation
        let p = self.clamp(sigmoid(logit));
        let q = self.clamp(sigmoid(-logit));
        let ce = if z.y == 1 {
            -libm::log(p)
        } else {
            -libm::log(q)
        };
        Ok(ce + 0.5 * self.beta * norm_sq(theta))
    }

    fn accumulate_grad(
        &self,
        theta: &[f64],
        z: &Sample,
        weight: f64,
        out: &mut [f64],
    ) -> Result<()> {
        self.check(theta, &z.x)?;
        LabelEncoding::ZeroOne.check(z.y)?;
        check_dim(self.layout.param_count(), out.len())?;
        let act = self.activations(theta, &z.x);
        // d(cross entropy)/d(logit) = σ(logit) - y; the clamp only guards the log
        let dlogit = sigmoid(act.logit) - z.y as f64;
        self.backward(theta, &z.x, &act, dlogit, Some((out, weight)), None);
        axpy(weight * self.beta, theta, out);
        Ok(())
    }

    fn predict(&self, theta: &[f64], x: &[f64]) -> Result<i32> {
        Ok(if self.forward(theta, x)? >= 0.5 { 1 } else { 0 })
    }
}
