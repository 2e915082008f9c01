//! Turns a parsed configuration into datasets, a model, shift maps and
//! individual runs.

use anyhow::{bail, Result};
use perfpred_core::datasets::{gen_synthetic, split};
use perfpred_core::models::{LinearSigmoidModel, MlpBceModel, MlpLayout};
use perfpred_core::optim::{
    init_stream, run_exact_gradient, run_greedy, run_lazy, DeploymentPlan, InitSpec, RunConfig,
    StepSchedule, Trajectory,
};
use perfpred_core::shiftmaps::{BestResponseShiftMap, LocationShiftMap};
use perfpred_core::{BaseDataset, LabelEncoding, Loss, Sample, ShiftMap};

use crate::config::{
    DataSource, ExperimentConfig, InitKind, MapKind, ModelSpec, PlanKind, PlanSpec, ScheduleSpec,
};
use crate::csv_io::load_csv;

#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearSigmoidModel),
    Mlp { model: MlpBceModel, bias_init: f64 },
}

impl Model {
    pub fn as_loss(&self) -> &(dyn Loss + Send + Sync) {
        match self {
            Model::Linear(m) => m,
            Model::Mlp { model, .. } => model,
        }
    }

    pub fn initial_point(&self, init: InitKind, seed: u64) -> Vec<f64> {
        let dim = self.as_loss().param_dim();
        match (init, self) {
            (InitKind::Zero, _) => vec![0.0; dim],
            (InitKind::Normal, Model::Linear(_)) => init_stream(seed).normal_vec(dim),
            (InitKind::Normal, Model::Mlp { model, bias_init }) => {
                model.init_params(&mut init_stream(seed), *bias_init)
            }
        }
    }
}

/// Data, model and one shift map per configured sensitivity.
pub struct Experiment {
    pub train: BaseDataset,
    pub test: BaseDataset,
    pub model: Model,
    pub maps: Vec<(f64, Box<dyn ShiftMap + Send + Sync>)>,
}

fn scaled(data: BaseDataset, factor: f64) -> Result<BaseDataset> {
    if factor == 1.0 {
        return Ok(data);
    }
    let enc = data.encoding();
    let samples = data
        .into_samples()
        .into_iter()
        .map(|z| Sample::new(z.x.iter().map(|v| v * factor).collect(), z.y))
        .collect();
    Ok(BaseDataset::new(samples, enc)?)
}

/// Loads or generates the train/test pair described by the config, with
/// labels in the encoding the configured model expects.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(BaseDataset, BaseDataset)> {
    let (mut train, mut test) = match &cfg.data.source {
        DataSource::Synthetic(spec) => {
            let d = gen_synthetic(spec)?;
            (d.train, d.test)
        }
        DataSource::Csv {
            path,
            schema,
            train_frac,
            split_seed,
        } => split(&load_csv(path, schema)?, *train_frac, *split_seed)?,
    };
    if cfg.data.normalize {
        let ranges = train.feature_ranges();
        train = train.normalized_with(&ranges)?;
        test = test.normalized_with(&ranges)?;
    }
    let encoding = match cfg.model {
        ModelSpec::Linear { .. } => LabelEncoding::PlusMinusOne,
        ModelSpec::Mlp { .. } => LabelEncoding::ZeroOne,
    };
    Ok((
        scaled(train, cfg.data.feature_scale)?.with_encoding(encoding),
        scaled(test, cfg.data.feature_scale)?.with_encoding(encoding),
    ))
}

pub fn build_model(cfg: &ExperimentConfig, feature_dim: usize) -> Result<Model> {
    Ok(match cfg.model {
        ModelSpec::Linear { c, beta } => {
            Model::Linear(LinearSigmoidModel::new(c, beta, feature_dim)?)
        }
        ModelSpec::Mlp {
            hidden1,
            hidden2,
            beta,
            bias_init,
            p_min,
        } => Model::Mlp {
            model: MlpBceModel::with_p_min(
                MlpLayout::new(feature_dim, hidden1, hidden2)?,
                beta,
                p_min,
            )?,
            bias_init,
        },
    })
}

pub fn build_map(
    kind: MapKind,
    model: &Model,
    base: BaseDataset,
    eps: f64,
) -> Result<Box<dyn ShiftMap + Send + Sync>> {
    Ok(match (kind, model) {
        (MapKind::Location, _) => Box::new(LocationShiftMap::new(base, eps)?),
        (MapKind::BestResponse, Model::Mlp { model, .. }) => {
            Box::new(BestResponseShiftMap::new(base, eps, model.clone())?)
        }
        (MapKind::BestResponse, Model::Linear(_)) => {
            bail!("best-response shifts need the network model")
        }
    })
}

impl Experiment {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (train, test) = load_data(cfg)?;
        let model = build_model(cfg, train.dim())?;
        let maps = cfg
            .map
            .eps
            .iter()
            .map(|&eps| Ok((eps, build_map(cfg.map.kind, &model, train.clone(), eps)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            train,
            test,
            model,
            maps,
        })
    }
}

/// Core run configuration for one plan and seed.
pub fn run_config(cfg: &ExperimentConfig, plan: &PlanSpec, model: &Model, seed: u64) -> RunConfig {
    let deploy = match plan.kind {
        PlanKind::Greedy { batch } => DeploymentPlan::Greedy { batch },
        PlanKind::Exact => DeploymentPlan::Greedy { batch: 1 },
        PlanKind::Lazy { epoch, batch } => DeploymentPlan::Lazy { epoch, batch },
    };
    let schedule = match (cfg.schedule, deploy) {
        (ScheduleSpec::Constant(g), _) => StepSchedule::Constant(g),
        (ScheduleSpec::InvSqrtT(scale), DeploymentPlan::Lazy { .. }) => {
            StepSchedule::LazyInvSqrtT { scale }
        }
        (ScheduleSpec::InvSqrtT(scale), _) => StepSchedule::InvSqrtT { scale },
    };
    RunConfig {
        horizon: cfg.plan_horizon(plan),
        plan: deploy,
        schedule,
        init: InitSpec::Given(model.initial_point(cfg.run.init, seed)),
        eval_every: cfg.run.eval_every,
        seed,
    }
}

pub fn execute(
    cfg: &ExperimentConfig,
    plan: &PlanSpec,
    model: &Model,
    map: &(dyn ShiftMap + Send + Sync),
    test: &BaseDataset,
    seed: u64,
) -> Result<Trajectory> {
    let rc = run_config(cfg, plan, model, seed);
    let loss = model.as_loss();
    Ok(match plan.kind {
        PlanKind::Greedy { .. } => run_greedy(&rc, loss, map, test)?,
        PlanKind::Lazy { .. } => run_lazy(&rc, loss, map, test)?,
        PlanKind::Exact => run_exact_gradient(&rc, loss, map, test)?,
    })
}
