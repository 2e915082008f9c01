//! Trajectory files, multi-seed sweeps, confidence-interval aggregates and
//! the manifest tying them to a configuration hash.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use perfpred_core::optim::{RunStatus, Trajectory};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::csv_io::fmt_f64;
use crate::experiment::{execute, Experiment};

pub const TRAJECTORY_HEADER: [&str; 10] = [
    "run_id",
    "seed",
    "t",
    "samples",
    "gamma",
    "sps_sq",
    "risk",
    "train_acc",
    "test_acc",
    "status",
];

const METRICS: [&str; 4] = ["sps_sq", "risk", "train_acc", "test_acc"];

/// Normal-approximation 95% interval half-width factor.
const Z95: f64 = 1.96;

pub fn run_id(plan: &str, eps: f64, seed: u64) -> String {
    format!("{plan}_eps{eps}_seed{seed}")
}

/// Writes one row per captured point with status `ok`; a diverged run gets
/// a final row with status `diverged` and `NaN` metrics at the failing step.
pub fn write_trajectory(path: &Path, run_id: &str, traj: &Trajectory) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", TRAJECTORY_HEADER.join(","))?;
    let seed = traj.config.seed;
    for p in &traj.points {
        writeln!(
            out,
            "{run_id},{seed},{},{},{},{},{},{},{},ok",
            p.t,
            p.samples_accessed,
            fmt_f64(p.gamma),
            fmt_f64(p.sps_sq),
            fmt_f64(p.risk),
            fmt_f64(p.train_acc),
            fmt_f64(p.test_acc),
        )?;
    }
    if let RunStatus::Diverged { t } = traj.status {
        let gamma = traj.points.last().map_or(f64::NAN, |p| p.gamma);
        let per_step = match traj.config.plan {
            perfpred_core::optim::DeploymentPlan::Greedy { batch } => batch as u64,
            perfpred_core::optim::DeploymentPlan::Lazy { epoch, batch } => (epoch * batch) as u64,
        };
        writeln!(
            out,
            "{run_id},{seed},{t},{},{},NaN,NaN,NaN,NaN,diverged",
            (t as u64 + 1) * per_step,
            fmt_f64(gamma)
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub run_id: String,
    pub seed: u64,
    pub t: u64,
    pub samples: u64,
    pub gamma: f64,
    pub metrics: [f64; 4],
    pub status: String,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_HEADER {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| anyhow::anyhow!("{} row {}: bad {what}", path.display(), i + 2);
        let num = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(what));
        rows.push(TrajectoryRow {
            run_id: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| bad("seed"))?,
            t: rec[2].parse().map_err(|_| bad("t"))?,
            samples: rec[3].parse().map_err(|_| bad("samples"))?,
            gamma: num(4, "gamma")?,
            metrics: [
                num(5, "sps_sq")?,
                num(6, "risk")?,
                num(7, "train_acc")?,
                num(8, "test_acc")?,
            ],
            status: rec[9].to_string(),
        });
    }
    Ok(rows)
}

/// Mean and normal-approximation 95% interval over seeds; the interval
/// collapses to the mean for a single run.
pub fn mean_ci(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, mean, mean);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = Z95 * (var / n).sqrt();
    (mean, mean - half, mean + half)
}

/// Averages completed runs point by point. All runs must share the capture
/// grid, which holds for runs of one plan.
pub fn write_aggregate(path: &Path, runs: &[Vec<TrajectoryRow>]) -> Result<usize> {
    let done: Vec<&Vec<TrajectoryRow>> = runs
        .iter()
        .filter(|r| r.iter().all(|row| row.status == "ok"))
        .collect();
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = vec!["t".to_string(), "samples".into(), "n".into()];
    for m in METRICS {
        header.extend([
            format!("{m}_mean"),
            format!("{m}_ci95_low"),
            format!("{m}_ci95_high"),
        ]);
    }
    writeln!(out, "{}", header.join(","))?;
    if let Some(first) = done.first() {
        for (k, row) in first.iter().enumerate() {
            if done.iter().any(|r| r.get(k).map(|x| x.t) != Some(row.t)) {
                bail!(
                    "runs aggregated into {} disagree on the capture grid",
                    path.display()
                );
            }
            write!(out, "{},{},{}", row.t, row.samples, done.len())?;
            for m in 0..METRICS.len() {
                let vals: Vec<f64> = done.iter().map(|r| r[k].metrics[m]).collect();
                let (mean, lo, hi) = mean_ci(&vals);
                write!(out, ",{},{},{}", fmt_f64(mean), fmt_f64(lo), fmt_f64(hi))?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(done.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub kind: String,
    pub id: String,
    pub path: String,
    pub config_hash: String,
    pub status: String,
}

pub const MANIFEST: &str = "manifest.csv";
pub const CONFIG_COPY: &str = "config.cfg";

fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(MANIFEST))?;
    w.write_record(["kind", "id", "path", "config_hash", "status"])?;
    for e in entries {
        w.write_record([&e.kind, &e.id, &e.path, &e.config_hash, &e.status])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let mut r =
        csv::Reader::from_path(&path).with_context(|| format!("cannot open {}", path.display()))?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != 5 {
                bail!("{}: malformed manifest row", path.display());
            }
            Ok(ManifestEntry {
                kind: rec[0].into(),
                id: rec[1].into(),
                path: rec[2].into(),
                config_hash: rec[3].into(),
                status: rec[4].into(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub id: String,
    pub plan: String,
    pub eps: f64,
    pub seed: u64,
    pub path: PathBuf,
    pub status: RunStatus,
    /// Last-decile mean of `sps_sq` (NaN for diverged runs).
    pub tail_sps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<PathBuf>,
}

impl SweepSummary {
    pub fn diverged(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.status != RunStatus::Completed)
            .count()
    }
}

fn aggregate_name(plan: &str, eps: f64) -> String {
    format!("{plan}_eps{eps}.csv")
}

/// Every (plan, ε, seed) combination, `jobs` at a time (0: one per core). Each run writes
/// its own file; the manifest and aggregates are written afterwards in a
/// fixed order, so outputs do not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<SweepSummary> {
    let exp = Experiment::from_config(cfg)?;
    fs::create_dir_all(out.join("runs"))?;
    fs::create_dir_all(out.join("aggregate"))?;
    fs::write(out.join(CONFIG_COPY), cfg.canonical_text())?;
    let hash = cfg.hash();

    let mut tasks = Vec::new();
    for plan in &cfg.plans {
        for (mi, (eps, _)) in exp.maps.iter().enumerate() {
            for &seed in &cfg.run.seeds {
                tasks.push((plan, mi, *eps, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let runs: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(plan, mi, eps, seed)| {
                let id = run_id(&plan.name, eps, seed);
                let rel = PathBuf::from("runs").join(format!("{id}.csv"));
                let traj = execute(
                    cfg,
                    plan,
                    &exp.model,
                    exp.maps[mi].1.as_ref(),
                    &exp.test,
                    seed,
                )
                .with_context(|| format!("run {id}"))?;
                write_trajectory(&out.join(&rel), &id, &traj)?;
                let tail_sps = match traj.status {
                    RunStatus::Completed => traj.tail_mean_sps(0.1),
                    RunStatus::Diverged { .. } => f64::NAN,
                };
                Ok(RunRecord {
                    id,
                    plan: plan.name.clone(),
                    eps,
                    seed,
                    path: rel,
                    status: traj.status,
                    tail_sps,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut manifest = vec![ManifestEntry {
        kind: "config".into(),
        id: "config".into(),
        path: CONFIG_COPY.into(),
        config_hash: hash.clone(),
        status: "ok".into(),
    }];
    for r in &runs {
        manifest.push(ManifestEntry {
            kind: "run".into(),
            id: r.id.clone(),
            path: r.path.display().to_string(),
            config_hash: hash.clone(),
            status: match r.status {
                RunStatus::Completed => "ok".into(),
                RunStatus::Diverged { t } => format!("diverged@{t}"),
            },
        });
    }
    let aggregates = write_aggregates(out, cfg, &hash, &mut manifest)?;
    write_manifest(out, &manifest)?;
    Ok(SweepSummary {
        config_hash: hash,
        runs,
        aggregates,
    })
}

fn write_aggregates(
    out: &Path,
    cfg: &ExperimentConfig,
    hash: &str,
    manifest: &mut Vec<ManifestEntry>,
) -> Result<Vec<PathBuf>> {
    let runs: BTreeMap<String, String> = manifest
        .iter()
        .filter(|e| e.kind == "run" && e.config_hash == hash)
        .map(|e| (e.id.clone(), e.path.clone()))
        .collect();
    let mut written = Vec::new();
    for plan in &cfg.plans {
        for &eps in &cfg.map.eps {
            let mut group = Vec::new();
            for &seed in &cfg.run.seeds {
                if let Some(p) = runs.get(&run_id(&plan.name, eps, seed)) {
                    group.push(read_trajectory(&out.join(p))?);
                }
            }
            let rel = PathBuf::from("aggregate").join(aggregate_name(&plan.name, eps));
            let n = write_aggregate(&out.join(&rel), &group)?;
            manifest.push(ManifestEntry {
                kind: "aggregate".into(),
                id: format!("{}_eps{eps}", plan.name),
                path: rel.display().to_string(),
                config_hash: hash.to_string(),
                status: format!("n={n}"),
            });
            written.push(rel);
        }
    }
    Ok(written)
}

/// Rebuilds the aggregates of a finished sweep directory from its run
/// files. The stored configuration must still hash to the manifest's
/// value; only runs carrying that hash are used.
pub fn aggregate_dir(out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(out)?;
    let config = manifest
        .iter()
        .find(|e| e.kind == "config")
        .context("manifest has no config entry")?;
    let cfg = ExperimentConfig::from_path(&out.join(&config.path))?;
    let hash = cfg.hash();
    if hash != config.config_hash {
        bail!(
            "stored configuration hashes to {hash}, manifest records {}",
            config.config_hash
        );
    }
    let mut kept: Vec<ManifestEntry> = manifest
        .into_iter()
        .filter(|e| e.kind != "aggregate")
        .collect();
    let written = write_aggregates(out, &cfg, &hash, &mut kept)?;
    write_manifest(out, &kept)?;
    Ok(written)
}
