use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use perfpred::checks::run_checks;
use perfpred::config::ExperimentConfig;
use perfpred::csv_io::save_csv;
use perfpred::experiment::{execute, load_data, Experiment};
use perfpred::sweep::{aggregate_dir, run_id, run_sweep, write_trajectory};
use perfpred_core::optim::RunStatus;

#[derive(Parser)]
#[command(
    name = "perfpred",
    version,
    about = "Stochastic optimisation under decision-dependent data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured train/test data as CSV.
    GenData(Common),
    /// One run: the first plan, first sensitivity and first seed.
    Run {
        #[command(flatten)]
        common: Common,
        /// Plan name (defaults to the first configured plan).
        #[arg(long)]
        plan: Option<String>,
        /// Sensitivity (defaults to the first configured value).
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Every plan × sensitivity × seed, with aggregates and a manifest.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Concurrent runs; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Gradient, sensitivity and descent checks.
    Check(Common),
    /// Rebuild aggregates of an existing sweep directory.
    Aggregate {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed_override {
        cfg = cfg.with_seed_override(seed);
    }
    let out = match (&common.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set output.dir"),
    };
    Ok((cfg, out))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but a check failed or a run diverged.
fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(common) => {
            let (cfg, out) = load(&common)?;
            create(&out)?;
            let (train, test) = load_data(&cfg)?;
            save_csv(&out.join("train.csv"), &train)?;
            save_csv(&out.join("test.csv"), &test)?;
            println!(
                "wrote {} train and {} test rows to {}",
                train.len(),
                test.len(),
                out.display()
            );
            Ok(true)
        }
        Command::Run { common, plan, eps } => {
            let (cfg, out) = load(&common)?;
            create(&out)?;
            let plan = match plan {
                None => &cfg.plans[0],
                Some(name) => cfg
                    .plans
                    .iter()
                    .find(|p| p.name == name)
                    .with_context(|| format!("no plan named {name:?}"))?,
            };
            let exp = Experiment::from_config(&cfg)?;
            let (eps, map) = match eps {
                None => &exp.maps[0],
                Some(e) => exp
                    .maps
                    .iter()
                    .find(|(x, _)| *x == e)
                    .with_context(|| format!("eps {e} is not in the configured list"))?,
            };
            let seed = cfg.run.seeds[0];
            let traj = execute(&cfg, plan, &exp.model, map.as_ref(), &exp.test, seed)?;
            let id = run_id(&plan.name, *eps, seed);
            let path = out.join(format!("{id}.csv"));
            write_trajectory(&path, &id, &traj)?;
            match traj.status {
                RunStatus::Completed => {
                    println!(
                        "{id}: tail sps {:.6e} -> {}",
                        traj.tail_mean_sps(0.1),
                        path.display()
                    );
                    Ok(true)
                }
                RunStatus::Diverged { t } => {
                    eprintln!("{id}: diverged at step {t}");
                    Ok(false)
                }
            }
        }
        Command::Sweep { common, jobs } => {
            let (cfg, out) = load(&common)?;
            let summary = run_sweep(&cfg, &out, jobs.unwrap_or(0))?;
            for r in &summary.runs {
                match r.status {
                    RunStatus::Completed => println!("{}: tail sps {:.6e}", r.id, r.tail_sps),
                    RunStatus::Diverged { t } => println!("{}: diverged at step {t}", r.id),
                }
            }
            println!("config {} -> {}", summary.config_hash, out.display());
            Ok(summary.diverged() == 0)
        }
        Command::Check(common) => {
            let (cfg, out) = load(&common)?;
            let outcome = run_checks(&cfg, &out)?;
            for f in &outcome.failures {
                eprintln!("FAIL {f}");
            }
            println!(
                "{} ({} violations) -> {}",
                if outcome.passed() {
                    "checks passed"
                } else {
                    "checks failed"
                },
                outcome.failures.len(),
                outcome.files.join(", ")
            );
            Ok(outcome.passed())
        }
        Command::Aggregate { out } => {
            for p in aggregate_dir(&out)? {
                println!("{}", out.join(p).display());
            }
            Ok(true)
        }
    }
}
