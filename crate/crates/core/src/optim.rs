//! Greedy (deploy every step) and lazy (deploy every `K` steps) stochastic
//! gradient schemes under a decision-dependent distribution, plus an
//! exact-gradient variant of the greedy scheme.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::models::{accuracy, Loss};
use crate::numkit::linalg::{all_finite, axpy, norm2, norm_sq, scale};
use crate::numkit::RngStream;
use crate::shiftmaps::{draw_minibatch, mean_grad, mean_loss, support, BaseDataset, ShiftMap};

/// Iterates whose Euclidean norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `scale / √T`, independent of `t`.
    InvSqrtT {
        scale: f64,
    },
    /// `scale / (K √T)` for lazy deployment with epoch length `K`.
    LazyInvSqrtT {
        scale: f64,
    },
}

impl StepSchedule {
    /// Step size for iteration `t` of a run with horizon `horizon`.
    pub fn gamma(&self, t: usize, horizon: usize, epoch: Option<usize>) -> Result<f64> {
        if t >= horizon {
            return Err(Error::InvalidArgument(
                "iteration index must be below the horizon",
            ));
        }
        let root = libm::sqrt(horizon as f64);
        let g = match *self {
            StepSchedule::Constant(g) => g,
            StepSchedule::InvSqrtT { scale } => scale / root,
            StepSchedule::LazyInvSqrtT { scale } => {
                let k = epoch.ok_or(Error::InvalidArgument(
                    "lazy step schedule needs an epoch length",
                ))?;
                scale / (k as f64 * root)
            }
        };
        if g > 0.0 && g.is_finite() {
            Ok(g)
        } else {
            Err(Error::InvalidArgument(
                "step size must be positive and finite",
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeploymentPlan {
    Greedy { batch: usize },
    Lazy { epoch: usize, batch: usize },
}

impl DeploymentPlan {
    pub fn batch(&self) -> usize {
        match *self {
            DeploymentPlan::Greedy { batch } | DeploymentPlan::Lazy { batch, .. } => batch,
        }
    }

    fn epoch(&self) -> Option<usize> {
        match *self {
            DeploymentPlan::Greedy { .. } => None,
            DeploymentPlan::Lazy { epoch, .. } => Some(epoch),
        }
    }
}

/// Initial iterate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Entries i.i.d. N(0, 1) from the run's initialisation stream.
    StandardNormal,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Iterations (greedy) or deployments (lazy).
    pub horizon: usize,
    pub plan: DeploymentPlan,
    pub schedule: StepSchedule,
    pub init: InitSpec,
    pub eval_every: usize,
    pub seed: u64,
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least one"));
        }
        if self.eval_every == 0 || self.eval_every > self.horizon {
            return Err(Error::InvalidArgument("eval_every must lie in 1..=horizon"));
        }
        match self.plan {
            DeploymentPlan::Greedy { batch: 0 } => {
                Err(Error::InvalidArgument("batch size must be positive"))
            }
            DeploymentPlan::Lazy { epoch, batch } if epoch == 0 || batch == 0 => Err(
                Error::InvalidArgument("epoch length and batch size must be positive"),
            ),
            _ => Ok(()),
        }
    }
}

/// Stream used to draw `θ₀` for a run seeded with `seed`.
pub fn init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).fork(0)
}

/// Stream used to draw minibatches for a run seeded with `seed`.
pub fn sampling_stream(seed: u64) -> RngStream {
    RngStream::new(seed).fork(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub samples_accessed: u64,
    pub gamma: f64,
    pub sps_sq: f64,
    pub risk: f64,
    /// Accuracy on the support induced by the current iterate.
    pub train_acc: f64,
    /// Accuracy on the unshifted test set.
    pub test_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A non-finite or oversized iterate appeared right after step `t`.
    Diverged {
        t: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: RunConfig,
    pub points: Vec<TrajectoryPoint>,
    pub final_theta: Vec<f64>,
    pub status: RunStatus,
}

impl Trajectory {
    /// Mean of `sps_sq` over points whose `t` lies in the last `frac` of
    /// the horizon.
    pub fn tail_mean_sps(&self, frac: f64) -> f64 {
        let cut = self.config.horizon as f64 * (1.0 - frac);
        let tail: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.t as f64 >= cut)
            .map(|p| p.sps_sq)
            .collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

fn resolve_init<L: Loss + ?Sized>(cfg: &RunConfig, model: &L) -> Result<Vec<f64>> {
    match &cfg.init {
        InitSpec::StandardNormal => Ok(init_stream(cfg.seed).normal_vec(model.param_dim())),
        InitSpec::Given(v) => {
            crate::error::check_dim(model.param_dim(), v.len())?;
            Ok(v.clone())
        }
    }
}

fn measure<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    model: &L,
    map: &M,
    test: &BaseDataset,
    theta: &[f64],
    t: usize,
    samples_accessed: u64,
    gamma: f64,
) -> Result<TrajectoryPoint> {
    let sup = support(map, theta)?;
    let g = mean_grad(model, theta, &sup)?;
    Ok(TrajectoryPoint {
        t,
        samples_accessed,
        gamma,
        sps_sq: norm_sq(&g),
        risk: mean_loss(model, theta, &sup)?,
        train_acc: accuracy(model, theta, &sup)?,
        test_acc: accuracy(model, theta, test.samples())?,
    })
}

fn diverged(theta: &[f64]) -> bool {
    !all_finite(theta) || norm2(theta) > DIVERGENCE_NORM
}

enum Direction {
    Minibatch,
    Exact,
}

fn check_inputs<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
) -> Result<()> {
    cfg.validate()?;
    crate::error::check_dim(model.param_dim(), map.param_dim())?;
    crate::error::check_dim(model.feature_dim(), map.base().dim())?;
    crate::error::check_dim(model.feature_dim(), test.dim())
}

fn run_single_deployment<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
    direction: Direction,
) -> Result<Trajectory> {
    check_inputs(cfg, model, map, test)?;
    let batch = match cfg.plan {
        DeploymentPlan::Greedy { batch } => batch,
        DeploymentPlan::Lazy { .. } => {
            return Err(Error::InvalidArgument("greedy runner needs a greedy plan"))
        }
    };
    let per_step = match direction {
        Direction::Minibatch => batch as u64,
        Direction::Exact => map.support_size() as u64,
    };
    let horizon = cfg.horizon;
    let mut theta = resolve_init(cfg, model)?;
    let mut rng = sampling_stream(cfg.seed);
    let mut points = Vec::new();
    let mut gamma = cfg.schedule.gamma(0, horizon, None)?;
    let mut status = RunStatus::Completed;

    for t in 0..horizon {
        gamma = cfg.schedule.gamma(t, horizon, None)?;
        if t % cfg.eval_every == 0 {
            points.push(measure(
                model,
                map,
                test,
                &theta,
                t,
                t as u64 * per_step,
                gamma,
            )?);
        }
        let g = match direction {
            Direction::Minibatch => mean_grad(
                model,
                &theta,
                &draw_minibatch(map, &theta, batch, &mut rng)?,
            )?,
            Direction::Exact => mean_grad(model, &theta, &support(map, &theta)?)?,
        };
        let prev = theta.clone();
        axpy(-gamma, &g, &mut theta);
        if diverged(&theta) {
            status = RunStatus::Diverged { t };
            theta = prev;
            break;
        }
    }
    if status == RunStatus::Completed {
        points.push(measure(
            model,
            map,
            test,
            &theta,
            horizon,
            horizon as u64 * per_step,
            gamma,
        )?);
    }
    Ok(Trajectory {
        config: cfg.clone(),
        points,
        final_theta: theta,
        status,
    })
}

/// Greedy deployment with minibatch SGD:
/// `θ_{t+1} = θ_t - γ_{t+1} · mean_b ∇ℓ(θ_t; Z)`, `Z ~ D(θ_t)`.
///
/// Metrics are recorded for `θ_t` whenever `t` is a multiple of
/// `eval_every`, and for the final iterate `θ_T`.
pub fn run_greedy<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
) -> Result<Trajectory> {
    run_single_deployment(cfg, model, map, test, Direction::Minibatch)
}

/// Greedy deployment with the exact decoupled gradient `∇J(θ_t; θ_t)` in
/// place of the minibatch estimate. Each step accounts for `m` samples.
pub fn run_exact_gradient<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
) -> Result<Trajectory> {
    run_single_deployment(cfg, model, map, test, Direction::Exact)
}

/// Lazy deployment: `θ_t` is deployed once, then `K` SGD steps are taken
/// on samples from the frozen `D(θ_t)` before the next deployment.
pub fn run_lazy<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
) -> Result<Trajectory> {
    check_inputs(cfg, model, map, test)?;
    let (epoch, batch) = match cfg.plan {
        DeploymentPlan::Lazy { epoch, batch } => (epoch, batch),
        DeploymentPlan::Greedy { .. } => {
            return Err(Error::InvalidArgument("lazy runner needs a lazy plan"))
        }
    };
    let per_deployment = (epoch * batch) as u64;
    let horizon = cfg.horizon;
    let mut theta = resolve_init(cfg, model)?;
    let mut rng = sampling_stream(cfg.seed);
    let mut points = Vec::new();
    let mut gamma = cfg.schedule.gamma(0, horizon, cfg.plan.epoch())?;
    let mut status = RunStatus::Completed;
    let mut g = vec![0.0; model.param_dim()];

    'deploy: for t in 0..horizon {
        gamma = cfg.schedule.gamma(t, horizon, cfg.plan.epoch())?;
        if t % cfg.eval_every == 0 {
            points.push(measure(
                model,
                map,
                test,
                &theta,
                t,
                t as u64 * per_deployment,
                gamma,
            )?);
        }
        let deployed = theta.clone();
        for _ in 0..epoch {
            let batch_samples = draw_minibatch(map, &deployed, batch, &mut rng)?;
            g.iter_mut().for_each(|v| *v = 0.0);
            for z in &batch_samples {
                model.accumulate_grad(&theta, z, 1.0, &mut g)?;
            }
            scale(1.0 / batch as f64, &mut g);
            let prev = theta.clone();
            axpy(-gamma, &g, &mut theta);
            if diverged(&theta) {
                status = RunStatus::Diverged { t };
                theta = prev;
                break 'deploy;
            }
        }
    }
    if status == RunStatus::Completed {
        points.push(measure(
            model,
            map,
            test,
            &theta,
            horizon,
            horizon as u64 * per_deployment,
            gamma,
        )?);
    }
    Ok(Trajectory {
        config: cfg.clone(),
        points,
        final_theta: theta,
        status,
    })
}

/// Dispatches on the plan: greedy plans go to [`run_greedy`], lazy plans to
/// [`run_lazy`].
pub fn run<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    cfg: &RunConfig,
    model: &L,
    map: &M,
    test: &BaseDataset,
) -> Result<Trajectory> {
    match cfg.plan {
        DeploymentPlan::Greedy { .. } => run_greedy(cfg, model, map, test),
        DeploymentPlan::Lazy { .. } => run_lazy(cfg, model, map, test),
    }
}
