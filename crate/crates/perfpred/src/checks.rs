//! Numerical self-checks for a configured experiment: analytic gradients
//! against finite differences, map sensitivity against its W1 bound, and
//! the expected descent inequality along a short SGD path.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use perfpred_core::diagnostics::{
    descent_check, estimate_smoothness, sensitivity_check, DescentReport, SmoothnessProbe,
    DESCENT_SUPPORT_CAP,
};
use perfpred_core::numkit::linalg::axpy;
use perfpred_core::numkit::{fd_gradient, rel_err, DEFAULT_FD_STEP};
use perfpred_core::shiftmaps::support;
use perfpred_core::shiftmaps::LocationShiftMap;
use perfpred_core::{BaseDataset, Loss, RngStream, Sample, ShiftMap};

use crate::config::{ExperimentConfig, MapKind};
use crate::csv_io::fmt_f64;
use crate::experiment::{Experiment, Model};

/// Largest accepted relative error between analytic and finite-difference
/// gradients. The network tolerance is looser: its losses are evaluated
/// through more floating-point operations.
pub fn gradient_tolerance(model: &Model) -> f64 {
    match model {
        Model::Linear(_) => 1e-6,
        Model::Mlp { .. } => 1e-5,
    }
}

/// Exact W1 is cubic in the support size, so the sensitivity check uses a
/// fixed random subset of the training set when it is larger than this.
pub const SENSITIVITY_SUPPORT: usize = 64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckOutcome {
    pub failures: Vec<String>,
    pub files: Vec<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn random_theta(model: &Model, rng: &mut RngStream) -> Vec<f64> {
    match model {
        Model::Linear(_) => rng.normal_vec(model.as_loss().param_dim()),
        Model::Mlp { model, .. } => model.init_params(rng, 0.1),
    }
}

fn gradcheck(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    dir: &Path,
    out: &mut CheckOutcome,
) -> Result<()> {
    let mut rng = RngStream::new(cfg.checks.seed).fork(10);
    let loss = exp.model.as_loss();
    let tol = gradient_tolerance(&exp.model);
    let mut w = writer(&dir.join("gradcheck.csv"))?;
    writeln!(w, "instance,sample,rel_err,tolerance,ok")?;
    for k in 0..cfg.checks.instances {
        let theta = random_theta(&exp.model, &mut rng);
        let i = rng.index(exp.train.len());
        let z = &exp.train.samples()[i];
        let analytic = loss.grad(&theta, z)?;
        let fd = fd_gradient(
            |t| loss.loss(t, z).unwrap_or(f64::NAN),
            &theta,
            DEFAULT_FD_STEP,
        )?;
        let err = rel_err(&analytic, &fd);
        let ok = err <= tol;
        if !ok {
            out.failures
                .push(format!("gradient instance {k}: relative error {err:e}"));
        }
        writeln!(w, "{k},{i},{},{},{ok}", fmt_f64(err), fmt_f64(tol))?;
    }
    w.flush()?;
    out.files.push("gradcheck.csv".into());
    Ok(())
}

fn subset(train: &BaseDataset, rng: &mut RngStream) -> Result<BaseDataset> {
    if train.len() <= SENSITIVITY_SUPPORT {
        return Ok(train.clone());
    }
    let mut idx = rng.choose_distinct(train.len(), SENSITIVITY_SUPPORT);
    idx.sort_unstable();
    let samples: Vec<Sample> = idx.iter().map(|&i| train.samples()[i].clone()).collect();
    Ok(BaseDataset::new(samples, train.encoding())?)
}

fn sensitivity(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    dir: &Path,
    out: &mut CheckOutcome,
) -> Result<()> {
    let mut rng = RngStream::new(cfg.checks.seed).fork(11);
    let base = subset(&exp.train, &mut rng)?;
    let dim = exp.model.as_loss().param_dim();
    let mut w = writer(&dir.join("sensitivity.csv"))?;
    writeln!(w, "eps,pair,w1,bound,bound_l2,slack,ok")?;
    for &eps in &cfg.map.eps {
        let map = LocationShiftMap::new(base.clone(), eps)?;
        for k in 0..cfg.checks.pairs {
            let a = rng.normal_vec(dim);
            let b = rng.normal_vec(dim);
            let r = sensitivity_check(&map, &a, &b)?;
            let ok = r.w1 <= r.bound * (1.0 + 1e-9) + 1e-12;
            if !ok {
                out.failures.push(format!(
                    "sensitivity eps={eps} pair {k}: W1 {} > {}",
                    r.w1, r.bound
                ));
            }
            writeln!(
                w,
                "{eps},{k},{},{},{},{},{ok}",
                fmt_f64(r.w1),
                fmt_f64(r.bound),
                fmt_f64(r.bound_l2),
                fmt_f64(r.slack)
            )?;
        }
    }
    w.flush()?;
    out.files.push("sensitivity.csv".into());
    Ok(())
}

/// Upper limit on smoothness re-estimation rounds in [`calibrated_descent`].
const CALIBRATION_ROUNDS: usize = 8;

/// Unit-batch SGD path of `steps` steps from `theta0` at `γ = factor / L̂`,
/// with the descent inequality checked before every step.
///
/// Under a shift map the samples the loss is evaluated on move with `θ`,
/// so a smoothness estimate taken on the unshifted data can undershoot.
/// `L̂` is therefore estimated on the shifted supports at every point the
/// path visits, and the path is recomputed until `L̂` stops growing.
pub fn calibrated_descent<L: Loss + ?Sized, M: ShiftMap + ?Sized>(
    loss: &L,
    map: &M,
    theta0: &[f64],
    factor: f64,
    steps: usize,
    trials: usize,
    root: &RngStream,
) -> Result<Vec<DescentReport>> {
    let mut pool: Vec<Sample> = support(map, theta0)?;
    let mut smoothness = 0.0f64;
    for round in 0.. {
        let estimate = estimate_smoothness(
            loss,
            &pool,
            &SmoothnessProbe::default(),
            trials,
            &mut root.fork(12),
        )?;
        if estimate <= smoothness || round == CALIBRATION_ROUNDS {
            break;
        }
        smoothness = estimate;
        let gamma = factor / smoothness;
        let mut rng = root.fork(14);
        let mut theta = theta0.to_vec();
        pool.clear();
        for _ in 0..=steps {
            pool.extend(support(map, &theta)?);
            let z = map.shifted(rng.index(map.support_size()), &theta)?;
            axpy(-gamma, &loss.grad(&theta, &z)?, &mut theta);
        }
    }
    let gamma = factor / smoothness;
    let mut rng = root.fork(14);
    let mut theta = theta0.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(descent_check(
            loss,
            map,
            &theta,
            gamma,
            smoothness,
            DESCENT_SUPPORT_CAP,
        )?);
        let z = map.shifted(rng.index(map.support_size()), &theta)?;
        axpy(-gamma, &loss.grad(&theta, &z)?, &mut theta);
    }
    Ok(out)
}

fn descent(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    dir: &Path,
    out: &mut CheckOutcome,
) -> Result<()> {
    let loss = exp.model.as_loss();
    let mut w = writer(&dir.join("descent.csv"))?;
    writeln!(
        w,
        "eps,step,gamma,smoothness,lhs,rhs,residual,residual_bound,holds,note"
    )?;
    let m = exp.train.len();
    if m > DESCENT_SUPPORT_CAP {
        for (eps, _) in &exp.maps {
            writeln!(w, "{eps},,,,,,,,,support_too_large")?;
        }
        w.flush()?;
        out.files.push("descent.csv".into());
        return Ok(());
    }
    let root = RngStream::new(cfg.checks.seed);
    for (eps, map) in &exp.maps {
        let theta0 = random_theta(&exp.model, &mut root.fork(13));
        let trace = calibrated_descent(
            loss,
            map.as_ref(),
            &theta0,
            cfg.checks.gamma_factor,
            cfg.checks.descent_steps,
            cfg.checks.smoothness_trials,
            &root,
        )?;
        for (t, r) in trace.iter().enumerate() {
            let bound_ok = r.residual_bound.is_none_or(|b| r.residual <= b + 1e-12);
            let ok = r.holds && bound_ok;
            if !ok {
                out.failures.push(format!(
                    "descent eps={eps} step {t}: lhs {} rhs {}",
                    r.lhs, r.rhs
                ));
            }
            writeln!(
                w,
                "{eps},{t},{},{},{},{},{},{},{ok},",
                fmt_f64(r.gamma),
                fmt_f64(r.smoothness),
                fmt_f64(r.lhs),
                fmt_f64(r.rhs),
                fmt_f64(r.residual),
                r.residual_bound.map_or(String::new(), fmt_f64),
            )?;
        }
    }
    w.flush()?;
    out.files.push("descent.csv".into());
    Ok(())
}

/// Runs every check that applies to the configuration and writes one CSV
/// per check into `dir`. The sensitivity check needs location maps and is
/// skipped otherwise.
pub fn run_checks(cfg: &ExperimentConfig, dir: &Path) -> Result<CheckOutcome> {
    std::fs::create_dir_all(dir)?;
    let exp = Experiment::from_config(cfg)?;
    let mut out = CheckOutcome::default();
    gradcheck(&exp, cfg, dir, &mut out)?;
    if cfg.map.kind == MapKind::Location {
        sensitivity(&exp, cfg, dir, &mut out)?;
    }
    descent(&exp, cfg, dir, &mut out)?;
    Ok(out)
}
