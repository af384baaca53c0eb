//! Estimation pipeline: starting value, optimization, classification.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::anneal::{sa_then_polish_with, AnnealSchedule, StageTrace};
use crate::error::{Error, Result};
use crate::gcov::{GcovObjective, ObjectiveConfig};
use crate::io::{demean, is_demeaned};
use crate::local::{make_start, minimize_local, LocalOptConfig, LocalResult, StartStrategy};
use crate::mc::classify_estimate;
use crate::model::{ModelOrder, VarParams};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    #[default]
    LocalOnly,
    SaThenPolish(AnnealSchedule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta_hat: VarParams,
    pub order: ModelOrder,
    /// Companion eigenvalues `[re, im]`, ascending modulus.
    pub eigenvalues: Vec<[f64; 2]>,
    pub objective_value: f64,
    pub objective_start: f64,
    /// Best annealing value, when annealing produced the start.
    pub sa_objective: Option<f64>,
    pub start_used: StartStrategy,
    pub start_params: VarParams,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

impl EstimationResult {
    pub(crate) fn from_local(
        objective: &GcovObjective,
        start_used: StartStrategy,
        start_params: VarParams,
        objective_start: f64,
        sa_objective: Option<f64>,
        local: &LocalResult,
    ) -> Result<Self> {
        let theta_hat = VarParams::from_vec(objective.n(), objective.p(), &local.x)?;
        let order = classify_estimate(&theta_hat)?;
        let eigenvalues = theta_hat
            .eigenvalues()?
            .iter()
            .map(|z| [z.re, z.im])
            .collect();
        Ok(EstimationResult {
            theta_hat,
            order,
            eigenvalues,
            objective_value: local.f,
            objective_start,
            sa_objective,
            start_used,
            start_params,
            converged: local.converged,
            iterations: local.iterations,
            evaluations: local.evaluations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub p: usize,
    pub start: StartStrategy,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerChoice,
    #[serde(default)]
    pub local: LocalOptConfig,
    /// Seed for random starts.
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(p: usize, start: StartStrategy) -> Self {
        PipelineConfig {
            p,
            start,
            objective: ObjectiveConfig::default(),
            optimizer: OptimizerChoice::LocalOnly,
            local: LocalOptConfig::default(),
            seed: 0,
        }
    }
}

/// Local optimization from an explicit start on a prepared objective.
pub(crate) fn estimate_from(
    objective: &GcovObjective,
    start_used: StartStrategy,
    start: VarParams,
    local_cfg: &LocalOptConfig,
) -> Result<EstimationResult> {
    let f = |x: &[f64]| objective.value(x);
    let x0 = start.to_vec();
    let f0 = f(&x0);
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective.at_stage("start"));
    }
    let local = minimize_local(f, &x0, local_cfg).map_err(|e| e.at_stage("optimize"))?;
    EstimationResult::from_local(objective, start_used, start, f0, None, &local)
}

/// Runs one estimation; returns the annealing trace when annealing ran.
pub(crate) fn estimate_prepared(
    y: &DMatrix<f64>,
    objective: &GcovObjective,
    cfg: &PipelineConfig,
    reference: Option<&VarParams>,
) -> Result<(EstimationResult, Option<Vec<StageTrace>>)> {
    match (&cfg.optimizer, &cfg.start) {
        (OptimizerChoice::SaThenPolish(schedule), _) => {
            let (res, sa) = sa_then_polish_with(objective, schedule, &cfg.local)?;
            Ok((res, Some(sa.trace)))
        }
        (OptimizerChoice::LocalOnly, StartStrategy::Annealed) => Err(Error::Unsupported(
            "annealed start requires the sa_then_polish optimizer".into(),
        )),
        (OptimizerChoice::LocalOnly, start) => {
            let start_params = make_start(y, start, cfg.p, reference, cfg.seed)
                .map_err(|e| e.at_stage("start"))?;
            let res = estimate_from(objective, start.clone(), start_params, &cfg.local)?;
            Ok((res, None))
        }
    }
}

/// Demean (with a warning when needed), build the start, optimize and
/// classify.
pub fn estimate_pipeline(series: &DMatrix<f64>, cfg: &PipelineConfig) -> Result<EstimationResult> {
    estimate_pipeline_traced(series, cfg).map(|(r, _)| r)
}

pub fn estimate_pipeline_traced(
    series: &DMatrix<f64>,
    cfg: &PipelineConfig,
) -> Result<(EstimationResult, Option<Vec<StageTrace>>)> {
    let owned;
    let y = if is_demeaned(series) {
        series
    } else {
        log::warn!("series is not demeaned; subtracting column means");
        owned = demean(series);
        &owned
    };
    let objective = GcovObjective::new(y, cfg.p, &cfg.objective).map_err(|e| e.at_stage("objective"))?;
    estimate_prepared(y, &objective, cfg, None)
}

/// Estimates from several starts on the same data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartComparison {
    pub results: Vec<EstimationResult>,
    /// Every start reached the same estimate.
    pub start_invariant: bool,
}

/// Largest coefficient difference under which two estimates count as the same.
pub const START_INVARIANCE_TOL: f64 = 1e-3;

pub fn start_invariant(results: &[EstimationResult], tol: f64) -> bool {
    results.windows(2).all(|w| {
        w[0].order == w[1].order
            && w[0]
                .theta_hat
                .to_vec()
                .iter()
                .zip(w[1].theta_hat.to_vec())
                .all(|(a, b)| (a - b).abs() <= tol)
    })
}

pub fn compare_starts(series: &DMatrix<f64>, configs: &[PipelineConfig]) -> Result<StartComparison> {
    let results = configs
        .iter()
        .map(|c| estimate_pipeline(series, c))
        .collect::<Result<Vec<_>>>()?;
    let start_invariant = start_invariant(&results, START_INVARIANCE_TOL);
    Ok(StartComparison {
        results,
        start_invariant,
    })
}
