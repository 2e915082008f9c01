//! Flat `section.key = value` experiment files.
//!
//! Lines starting with `#` and blank lines are ignored. Every key must be
//! known; plans are declared as `plan.<name>.<field>`. Lists are comma
//! separated, and seed lists also accept a half-open range `a..b`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use perfpred_core::datasets::SyntheticSpec;
use perfpred_core::models::DEFAULT_P_MIN;
use perfpred_core::LabelEncoding;
use sha2::{Digest, Sha256};

use crate::csv_io::CsvSchema;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        train_frac: f64,
        split_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub source: DataSource,
    /// Min-max scaling fitted on the training side (off by default).
    pub normalize: bool,
    /// Multiplies every feature after loading (and after normalisation).
    pub feature_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear {
        c: f64,
        beta: f64,
    },
    Mlp {
        hidden1: usize,
        hidden2: usize,
        beta: f64,
        bias_init: f64,
        p_min: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    Location,
    BestResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub kind: MapKind,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    Constant(f64),
    /// `scale/√T`, or `scale/(K√T)` under lazy plans.
    InvSqrtT(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Greedy {
        batch: usize,
    },
    Lazy {
        epoch: usize,
        batch: usize,
    },
    /// Greedy deployment with the exact decoupled gradient.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSpec {
    pub name: String,
    pub kind: PlanKind,
    /// Per-plan horizon; falls back to `run.T`.
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Normal,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub init: InitKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub instances: usize,
    pub pairs: usize,
    pub descent_steps: usize,
    /// Descent steps use `γ = gamma_factor / L̂`.
    pub gamma_factor: f64,
    pub smoothness_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub model: ModelSpec,
    pub map: MapSpec,
    pub schedule: ScheduleSpec,
    pub plans: Vec<PlanSpec>,
    pub run: RunSpec,
    pub checks: CheckSpec,
    pub output_dir: Option<PathBuf>,
    entries: BTreeMap<String, String>,
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("line {line}: {key}: cannot parse {v:?}")),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| anyhow!("missing required key {key}"))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((v, line)) = self.take(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| anyhow!("line {line}: {key}: cannot parse {s:?}"))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn bool(&mut self, key: &str) -> Result<bool> {
        match self.take(key) {
            None => Ok(false),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => bail!("line {line}: {key}: expected true or false, found {v:?}"),
            },
        }
    }

    fn word<'a>(&mut self, key: &str, default: &str, allowed: &[&'a str]) -> Result<&'a str> {
        let (v, line) = self.take(key).unwrap_or_else(|| (default.to_string(), 0));
        allowed
            .iter()
            .find(|a| **a == v)
            .copied()
            .ok_or_else(|| anyhow!("line {line}: {key}: {v:?} is not one of {allowed:?}"))
    }

    fn reject(&mut self, key: &str, why: &str) -> Result<()> {
        match self.take(key) {
            Some((_, line)) => bail!("line {line}: {key}: {why}"),
            None => Ok(()),
        }
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse()?;
        let b: u64 = b.trim().parse()?;
        if a >= b {
            bail!("empty seed range {text:?}");
        }
        return Ok((a..b).collect());
    }
    text.split(',').map(|s| Ok(s.trim().parse()?)).collect()
}

fn parse_label_map(text: &str) -> Result<Vec<(String, i32)>> {
    text.split(',')
        .map(|pair| {
            let (raw, y) = pair
                .split_once(':')
                .ok_or_else(|| anyhow!("label map entry {pair:?} is not raw:label"))?;
            Ok((raw.trim().to_string(), y.trim().parse()?))
        })
        .collect()
}

fn positive(key: &str, v: usize) -> Result<usize> {
    if v == 0 {
        bail!("{key} must be positive");
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses config text; relative data paths resolve against `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                bail!("line {}: empty key", i + 1);
            }
            if map.insert(k.clone(), (v, i + 1)).is_some() {
                bail!("line {}: duplicate key {k}", i + 1);
            }
        }
        let entries = map
            .iter()
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect();
        let mut e = Entries { map };
        let mut cfg = Self::build(&mut e, base_dir)?;
        if let Some((k, (_, line))) = e.map.iter().next() {
            bail!("line {line}: unknown key {k}");
        }
        cfg.entries = entries;
        // stored copies of the config must point at the same file
        if let DataSource::Csv { path, .. } = &cfg.data.source {
            cfg.entries
                .insert("data.path".into(), path.display().to_string());
        }
        Ok(cfg)
    }

    fn build(e: &mut Entries, base_dir: &Path) -> Result<Self> {
        let model = match e.word("model.kind", "linear", &["linear", "mlp"])? {
            "linear" => {
                for k in [
                    "model.hidden1",
                    "model.hidden2",
                    "model.bias_init",
                    "model.p_min",
                ] {
                    e.reject(k, "only applies to model.kind = mlp")?;
                }
                ModelSpec::Linear {
                    c: e.or("model.c", 0.1)?,
                    beta: e.or("model.beta", 1e-3)?,
                }
            }
            _ => {
                e.reject("model.c", "only applies to model.kind = linear")?;
                ModelSpec::Mlp {
                    hidden1: positive("model.hidden1", e.or("model.hidden1", 50)?)?,
                    hidden2: positive("model.hidden2", e.or("model.hidden2", 10)?)?,
                    beta: e.or("model.beta", 0.0)?,
                    bias_init: e.or("model.bias_init", 0.0)?,
                    p_min: e.or("model.p_min", DEFAULT_P_MIN)?,
                }
            }
        };

        let source = match e.word("data.source", "synthetic", &["synthetic", "csv"])? {
            "synthetic" => {
                for k in [
                    "data.path",
                    "data.feature_count",
                    "data.label_column",
                    "data.label_map",
                    "data.header",
                    "data.train_frac",
                    "data.split_seed",
                ] {
                    e.reject(k, "only applies to data.source = csv")?;
                }
                let d = SyntheticSpec::default();
                let spec = SyntheticSpec {
                    m: positive("data.m", e.or("data.m", d.m)?)?,
                    m_test: positive("data.m_test", e.or("data.m_test", d.m_test)?)?,
                    d: positive("data.d", e.or("data.d", d.d)?)?,
                    flip_frac: e.or("data.flip_frac", d.flip_frac)?,
                    seed: e.or("data.seed", d.seed)?,
                };
                if !(0.0..=1.0).contains(&spec.flip_frac) {
                    bail!("data.flip_frac must lie in [0, 1]");
                }
                DataSource::Synthetic(spec)
            }
            _ => {
                for k in [
                    "data.m",
                    "data.m_test",
                    "data.d",
                    "data.flip_frac",
                    "data.seed",
                ] {
                    e.reject(k, "only applies to data.source = synthetic")?;
                }
                let path: String = e.required("data.path")?;
                let path = base_dir.join(path);
                if !path.is_file() {
                    bail!("data.path: {} does not exist", path.display());
                }
                let path = path.canonicalize()?;
                let feature_count =
                    positive("data.feature_count", e.or("data.feature_count", 57)?)?;
                let mut schema = CsvSchema::trailing_label(feature_count, LabelEncoding::ZeroOne);
                schema.label_column = e.or("data.label_column", feature_count)?;
                schema.has_header = e.bool("data.header")?;
                if let Some((v, line)) = e.take("data.label_map") {
                    schema.label_map = parse_label_map(&v)
                        .with_context(|| format!("line {line}: data.label_map"))?;
                }
                if schema
                    .label_map
                    .iter()
                    .any(|(_, y)| !LabelEncoding::ZeroOne.contains(*y))
                {
                    schema.encoding = LabelEncoding::PlusMinusOne;
                }
                let train_frac = e.or("data.train_frac", 0.8)?;
                if !(train_frac > 0.0 && train_frac < 1.0) {
                    bail!("data.train_frac must lie in (0, 1)");
                }
                DataSource::Csv {
                    path,
                    schema,
                    train_frac,
                    split_seed: e.or("data.split_seed", 0)?,
                }
            }
        };
        let data = DataSpec {
            source,
            normalize: e.bool("data.normalize")?,
            feature_scale: e.or("data.feature_scale", 1.0)?,
        };
        if !(data.feature_scale > 0.0 && data.feature_scale.is_finite()) {
            bail!("data.feature_scale must be positive");
        }

        let kind = match e.word("map.kind", "location", &["location", "best_response"])? {
            "location" => MapKind::Location,
            _ => MapKind::BestResponse,
        };
        if kind == MapKind::BestResponse && !matches!(model, ModelSpec::Mlp { .. }) {
            bail!("map.kind = best_response needs model.kind = mlp");
        }
        if kind == MapKind::Location && matches!(model, ModelSpec::Mlp { .. }) {
            bail!("map.kind = location shifts features by the parameter vector and needs model.kind = linear");
        }
        let eps = e.list("map.eps")?.unwrap_or_else(|| vec![0.0]);
        if eps.iter().any(|v: &f64| !(*v >= 0.0 && v.is_finite())) {
            bail!("map.eps entries must be nonnegative");
        }
        let map = MapSpec { kind, eps };

        let schedule = match e.word("schedule.kind", "inv_sqrt_t", &["inv_sqrt_t", "constant"])? {
            "constant" => {
                e.reject(
                    "schedule.scale",
                    "use schedule.gamma with a constant schedule",
                )?;
                ScheduleSpec::Constant(e.required("schedule.gamma")?)
            }
            _ => {
                e.reject("schedule.gamma", "use schedule.scale with inv_sqrt_t")?;
                ScheduleSpec::InvSqrtT(e.or("schedule.scale", 1.0)?)
            }
        };
        match schedule {
            ScheduleSpec::Constant(g) | ScheduleSpec::InvSqrtT(g)
                if !(g > 0.0 && g.is_finite()) =>
            {
                bail!("step size parameters must be positive")
            }
            _ => {}
        }

        let mut names: Vec<String> = e
            .map
            .keys()
            .filter_map(|k| {
                k.strip_prefix("plan.")?
                    .split_once('.')
                    .map(|(n, _)| n.to_string())
            })
            .collect();
        names.dedup();
        let mut plans = Vec::new();
        for name in names {
            let key = |f: &str| format!("plan.{name}.{f}");
            if !e.map.contains_key(&key("kind")) {
                bail!("missing required key {}", key("kind"));
            }
            let kind = match e.word(&key("kind"), "", &["greedy", "lazy", "exact"])? {
                "greedy" => {
                    e.reject(&key("K"), "epoch length only applies to lazy plans")?;
                    PlanKind::Greedy {
                        batch: positive(&key("b"), e.or(&key("b"), 1)?)?,
                    }
                }
                "lazy" => PlanKind::Lazy {
                    epoch: positive(&key("K"), e.required(&key("K"))?)?,
                    batch: positive(&key("b"), e.or(&key("b"), 1)?)?,
                },
                _ => {
                    e.reject(&key("K"), "epoch length only applies to lazy plans")?;
                    e.reject(&key("b"), "exact plans use the full support")?;
                    PlanKind::Exact
                }
            };
            let horizon = e.parse(&key("T"))?;
            if horizon == Some(0) {
                bail!("{} must be positive", key("T"));
            }
            plans.push(PlanSpec {
                name,
                kind,
                horizon,
            });
        }
        if plans.is_empty() {
            bail!("no plans declared (add e.g. plan.greedy.kind = greedy)");
        }

        let seeds = match e.take("run.seeds") {
            None => vec![0],
            Some((v, line)) => {
                parse_seeds(&v).with_context(|| format!("line {line}: run.seeds"))?
            }
        };
        let horizon = positive("run.T", e.or("run.T", 1000)?)?;
        let run = RunSpec {
            horizon,
            seeds,
            eval_every: positive("run.eval_every", e.or("run.eval_every", 100)?)?,
            init: match e.word("run.init", "normal", &["normal", "zero"])? {
                "zero" => InitKind::Zero,
                _ => InitKind::Normal,
            },
        };
        for p in &plans {
            if run.eval_every > p.horizon.unwrap_or(run.horizon) {
                bail!("run.eval_every exceeds the horizon of plan {}", p.name);
            }
        }

        let checks = CheckSpec {
            instances: positive("checks.instances", e.or("checks.instances", 100)?)?,
            pairs: positive("checks.pairs", e.or("checks.pairs", 50)?)?,
            descent_steps: positive("checks.descent_steps", e.or("checks.descent_steps", 200)?)?,
            gamma_factor: e.or("checks.gamma_factor", 0.1)?,
            smoothness_trials: positive(
                "checks.smoothness_trials",
                e.or("checks.smoothness_trials", 10_000)?,
            )?,
            seed: e.or("checks.seed", 0)?,
        };
        let output_dir = e.take("output.dir").map(|(v, _)| PathBuf::from(v));

        Ok(Self {
            data,
            model,
            map,
            schedule,
            plans,
            run,
            checks,
            output_dir,
            entries: BTreeMap::new(),
        })
    }

    /// Replaces the seed list by a single seed.
    pub fn with_seed_override(mut self, seed: u64) -> Self {
        self.run.seeds = vec![seed];
        self.entries.insert("run.seeds".into(), seed.to_string());
        self
    }

    /// Sorted `key = value` lines of the effective configuration; comments,
    /// ordering and whitespace in the source do not affect it.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    pub fn plan_horizon(&self, plan: &PlanSpec) -> usize {
        plan.horizon.unwrap_or(self.run.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse_str(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse("plan.g.kind = greedy\n").unwrap();
        assert_eq!(cfg.model, ModelSpec::Linear { c: 0.1, beta: 1e-3 });
        assert_eq!(
            cfg.data.source,
            DataSource::Synthetic(SyntheticSpec::default())
        );
        assert_eq!(cfg.plans[0].kind, PlanKind::Greedy { batch: 1 });
        assert_eq!(cfg.run.seeds, vec![0]);
        assert_eq!(cfg.schedule, ScheduleSpec::InvSqrtT(1.0));
    }

    #[test]
    fn epoch_under_greedy_is_rejected() {
        let err = parse("plan.g.kind = greedy\nplan.g.K = 5\n").unwrap_err();
        assert!(err.to_string().contains("plan.g.K"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_its_path() {
        let err = parse("plan.g.kind = greedy\nmodel.gamma = 3\n").unwrap_err();
        assert!(err.to_string().contains("model.gamma"), "{err}");
    }

    #[test]
    fn type_mismatch_names_key() {
        let err = parse("plan.g.kind = greedy\nrun.T = lots\n").unwrap_err();
        assert!(err.to_string().contains("run.T"), "{err}");
    }

    #[test]
    fn plans_need_a_kind() {
        let err = parse("plan.g.b = 2\n").unwrap_err();
        assert!(err.to_string().contains("plan.g.kind"), "{err}");
        assert!(parse("run.T = 10\n").is_err());
    }

    #[test]
    fn lists_ranges_and_hash() {
        let a =
            parse("# c\nplan.l.kind = lazy\nplan.l.K = 5\nmap.eps = 0, 0.5\nrun.seeds = 3..6\n")
                .unwrap();
        assert_eq!(a.map.eps, vec![0.0, 0.5]);
        assert_eq!(a.run.seeds, vec![3, 4, 5]);
        let b = parse("run.seeds = 3..6\nmap.eps = 0, 0.5\n\nplan.l.K = 5\nplan.l.kind = lazy\n")
            .unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().with_seed_override(9).hash());
    }

    #[test]
    fn best_response_needs_network() {
        assert!(parse("plan.g.kind = greedy\nmap.kind = best_response\n").is_err());
        assert!(
            parse("plan.g.kind = greedy\nmap.kind = best_response\nmodel.kind = mlp\n").is_ok()
        );
        assert!(parse("plan.g.kind = greedy\nmodel.kind = mlp\n").is_err());
    }

    #[test]
    fn missing_csv_file_is_rejected() {
        let err = parse("plan.g.kind = greedy\ndata.source = csv\ndata.path = /nonexistent.csv\n")
            .unwrap_err();
        assert!(err.to_string().contains("data.path"), "{err}");
    }
}
