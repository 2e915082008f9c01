//! Numerical checks of the descent and sensitivity machinery on finite
//! supports: a discrete Wasserstein-1 distance, sensitivity reports,
//! gradient-noise and smoothness estimates, and an exact per-step check of
//! the expected descent inequality.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::models::{Loss, Sample};
use crate::numkit::linalg::{axpy, dist1, dist2, norm_sq, sub};
use crate::numkit::RngStream;
use crate::shiftmaps::{mean_grad, mean_loss, support, ShiftMap};

mod assignment;

pub use assignment::min_cost_assignment;

/// Default bound on support size for [`descent_check`].
pub const DESCENT_SUPPORT_CAP: usize = 64;

/// `W1` between two uniform point clouds of equal size under the L1
/// ground metric, via an exact optimal assignment.
pub fn w1_discrete(p: &[Vec<f64>], q: &[Vec<f64>]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let n = p.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let dim = p[0].len();
    for pt in p.iter().chain(q) {
        check_dim(dim, pt.len())?;
    }
    let mut cost = Vec::with_capacity(n * n);
    for a in p {
        for b in q {
            cost.push(dist1(a, b));
        }
    }
    Ok(min_cost_assignment(&cost, n).0 / n as f64)
}

/// Embeds a sample as the point `(x, y)`.
pub fn sample_point(z: &Sample) -> Vec<f64> {
    let mut v = z.x.clone();
    v.push(z.y as f64);
    v
}

/// `W1` between the uniform distributions on two sample lists.
pub fn w1_samples(p: &[Sample], q: &[Sample]) -> Result<f64> {
    let pp: Vec<Vec<f64>> = p.iter().map(sample_point).collect();
    let qq: Vec<Vec<f64>> = q.iter().map(sample_point).collect();
    w1_discrete(&pp, &qq)
}

/// Measured `W1(D(θ), D(θ′))` against the sensitivity bound.
///
/// `bound` uses the L1 distance between parameters, which is the exact
/// constant for location shifts under the L1 ground metric; `bound_l2`
/// uses the Euclidean distance and is reported alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub w1: f64,
    pub bound: f64,
    pub bound_l2: f64,
    pub slack: f64,
}

pub fn sensitivity_check<M: ShiftMap + ?Sized>(
    map: &M,
    theta: &[f64],
    theta_prime: &[f64],
) -> Result<SensitivityReport> {
    let w1 = w1_samples(&support(map, theta)?, &support(map, theta_prime)?)?;
    let eps = map.sensitivity();
    let bound = eps * dist1(theta, theta_prime);
    Ok(SensitivityReport {
        w1,
        bound,
        bound_l2: eps * dist2(theta, theta_prime),
        slack: bound - w1,
    })
}

/// Gradient noise at `θ` under `D(θ)`: the exact population variance
/// `(1/m) Σ ‖∇ℓ(θ; z_i) - ∇J(θ; θ)‖²` and its square root.
///
/// Only the constant part of the noise model is reported; the
/// gradient-proportional part is taken to be zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    pub sigma0: f64,
    pub variance: f64,
}

pub fn estimate_sigma<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    theta: &[f64],
    map: &M,
) -> Result<SigmaEstimate> {
    variance_on(model, theta, &support(map, theta)?)
}

fn variance_on<L: Loss + ?Sized>(
    model: &L,
    theta: &[f64],
    samples: &[Sample],
) -> Result<SigmaEstimate> {
    let mean = mean_grad(model, theta, samples)?;
    let mut acc = 0.0;
    for z in samples {
        acc += norm_sq(&sub(&model.grad(theta, z)?, &mean));
    }
    let variance = acc / samples.len() as f64;
    Ok(SigmaEstimate {
        sigma0: libm::sqrt(variance),
        variance,
    })
}

/// Where [`estimate_smoothness`] probes: `θ` uniform in the ball of the
/// given radius around `center` (origin when empty), `θ′ = θ + v` with `v`
/// uniform in the ball of radius `spread`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessProbe {
    pub center: Vec<f64>,
    pub radius: f64,
    pub spread: f64,
}

impl Default for SmoothnessProbe {
    fn default() -> Self {
        Self {
            center: Vec::new(),
            radius: 20.0,
            spread: 0.5,
        }
    }
}

fn uniform_in_ball(rng: &mut RngStream, dim: usize, radius: f64) -> Vec<f64> {
    let mut v = rng.normal_vec(dim);
    let n = libm::sqrt(norm_sq(&v));
    let r = radius * libm::pow(rng.uniform(), 1.0 / dim as f64);
    if n > 0.0 {
        v.iter_mut().for_each(|e| *e *= r / n);
    }
    v
}

/// Largest observed gradient difference quotient
/// `‖∇ℓ(θ; z) - ∇ℓ(θ′; z)‖ / ‖θ - θ′‖` over random probes, with `z` drawn
/// uniformly from `samples`. Coincident pairs are skipped.
pub fn estimate_smoothness<L: Loss + ?Sized>(
    model: &L,
    samples: &[Sample],
    probe: &SmoothnessProbe,
    trials: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required"));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = model.param_dim();
    if !probe.center.is_empty() {
        check_dim(d, probe.center.len())?;
    }
    let mut best = 0.0f64;
    for _ in 0..trials {
        let mut theta = uniform_in_ball(rng, d, probe.radius);
        if !probe.center.is_empty() {
            axpy(1.0, &probe.center, &mut theta);
        }
        let mut other = uniform_in_ball(rng, d, probe.spread);
        axpy(1.0, &theta, &mut other);
        let z = &samples[rng.index(samples.len())];
        let step = dist2(&theta, &other);
        if step == 0.0 {
            continue;
        }
        let ratio = dist2(&model.grad(&theta, z)?, &model.grad(&other, z)?) / step;
        best = best.max(ratio);
    }
    Ok(best)
}

/// One exact evaluation of the expected descent inequality
/// `(γ/2)‖∇J(θ_t;θ_t)‖² ≤ J(θ_t;θ_t) - E_t J(θ_{t+1};θ_t) + (L/2)σ₀²γ²`
/// for a unit-batch SGD step, together with the expected drift
/// `E_t[J(θ_{t+1};θ_{t+1}) - J(θ_{t+1};θ_t)]` of the time-varying risk.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub gamma: f64,
    pub smoothness: f64,
    pub sigma0_sq: f64,
    pub sps_sq: f64,
    pub risk: f64,
    pub expected_next_risk: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub residual: f64,
    /// `max_i L₀(θ_{t+1}^{(i)}) · ε · E_t‖θ_{t+1} - θ_t‖₁`, when both the
    /// loss and the map supply the needed constants.
    pub residual_bound: Option<f64>,
    pub expected_step_l1: f64,
}

/// Enumerates all `m` possible unit-batch draws at `θ_t` to evaluate the
/// expectations exactly. `smoothness` is the constant `L` used on the
/// right-hand side. Cost is O(m²) loss evaluations.
pub fn descent_check<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    map: &M,
    theta: &[f64],
    gamma: f64,
    smoothness: f64,
    cap: usize,
) -> Result<DescentReport> {
    let m = map.support_size();
    if m > cap {
        return Err(Error::SupportTooLarge { m, cap });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive"));
    }
    let here = support(map, theta)?;
    let risk = mean_loss(model, theta, &here)?;
    let sigma = variance_on(model, theta, &here)?;
    let full = mean_grad(model, theta, &here)?;
    let sps_sq = norm_sq(&full);

    let mut next_risk = 0.0;
    let mut residual = 0.0;
    let mut step_l1 = 0.0;
    let mut lip0 = Some(0.0f64);
    for z in &here {
        let mut next = theta.to_vec();
        axpy(-gamma, &model.grad(theta, z)?, &mut next);
        let frozen = mean_loss(model, &next, &here)?;
        next_risk += frozen;
        residual += mean_loss(model, &next, &support(map, &next)?)? - frozen;
        step_l1 += dist1(&next, theta);
        lip0 = match (lip0, model.x_lipschitz(&next)) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
    }
    let inv_m = 1.0 / m as f64;
    next_risk *= inv_m;
    residual *= inv_m;
    step_l1 *= inv_m;

    let lhs = 0.5 * gamma * sps_sq;
    let rhs = risk - next_risk + 0.5 * smoothness * sigma.variance * gamma * gamma;
    // allow for round-off in the risk difference
    let tol = 16.0 * f64::EPSILON * (risk.abs() + 1.0);
    let residual_bound = match (lip0, map.w1_constant()) {
        (Some(l0), Some(k)) => Some(l0 * k * step_l1),
        _ => None,
    };
    Ok(DescentReport {
        gamma,
        smoothness,
        sigma0_sq: sigma.variance,
        sps_sq,
        risk,
        expected_next_risk: next_risk,
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
        residual,
        residual_bound,
        expected_step_l1: step_l1,
    })
}

/// Runs `steps` unit-batch greedy SGD steps from `theta0` at constant
/// `gamma`, checking the descent inequality before every step.
pub fn descent_trace<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    map: &M,
    theta0: &[f64],
    gamma: f64,
    smoothness: f64,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<DescentReport>> {
    let mut theta = theta0.to_vec();
    let mut out = Vec::with_capacity(steps);
    let m = map.support_size();
    for _ in 0..steps {
        out.push(descent_check(
            model,
            map,
            &theta,
            gamma,
            smoothness,
            DESCENT_SUPPORT_CAP,
        )?);
        let z = map.shifted(rng.index(m), &theta)?;
        axpy(-gamma, &model.grad(&theta, &z)?, &mut theta);
    }
    Ok(out)
}

/// Gap `|J(θ; θ₁) - J(θ; θ₂)|` next to the bound `L₀ · W1(D(θ₁), D(θ₂))`
/// with `L₀` the loss's Lipschitz constant in the features at `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondSlotReport {
    pub gap: f64,
    pub lipschitz: f64,
    pub w1: f64,
    pub bound: f64,
}

pub fn second_slot_check<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    map: &M,
    theta: &[f64],
    theta1: &[f64],
    theta2: &[f64],
) -> Result<SecondSlotReport> {
    let lipschitz = model.x_lipschitz(theta).ok_or(Error::InvalidArgument(
        "loss has no feature Lipschitz constant",
    ))?;
    let s1 = support(map, theta1)?;
    let s2 = support(map, theta2)?;
    let gap = (mean_loss(model, theta, &s1)? - mean_loss(model, theta, &s2)?).abs();
    let w1 = w1_samples(&s1, &s2)?;
    Ok(SecondSlotReport {
        gap,
        lipschitz,
        w1,
        bound: lipschitz * w1,
    })
}
