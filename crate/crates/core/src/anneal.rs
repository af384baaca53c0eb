//! Simulated annealing over the coefficient box `[θ_min, θ_max]^dim`.
//!
//! Each proposal redraws every coordinate as `x_j + m_j` with
//! `m_j ~ U[θ_min − x_j, θ_max − x_j]`, so proposals are uniform over the
//! box whatever the current state. Uphill moves pass the Metropolis test
//! `exp(−Δf / T°) > p*`, `p* ~ U(0, 1)`. The temperature starts at `t_max`
//! and is multiplied by `r` after each of the `Q` stages of `M` proposals.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcov::{GcovObjective, ObjectiveConfig};
use crate::local::{minimize_local, LocalOptConfig, StartStrategy};
use crate::model::VarParams;
use crate::par::Execution;
use crate::pipeline::EstimationResult;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub t_max: f64,
    /// Cooling factor applied between stages.
    pub r: f64,
    /// Number of temperature stages.
    pub q: usize,
    /// Proposals per stage.
    pub m: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub seed: u64,
    /// Independent runs; the best one is kept.
    pub restarts: usize,
}

impl Default for AnnealSchedule {
    /// Desk-scale schedule: the cooling rate and box of
    /// [`AnnealSchedule::long`] with fewer, shorter stages.
    fn default() -> Self {
        AnnealSchedule {
            t_max: 1600.0,
            r: 0.85,
            q: 60,
            m: 200,
            theta_min: -3.5,
            theta_max: 3.5,
            seed: 0,
            restarts: 1,
        }
    }
}

impl AnnealSchedule {
    /// `T°_max = 1600`, `r = 0.85`, `Q = 200`, `M = 1000`, box `[−3.5, 3.5]`.
    pub fn long() -> Self {
        AnnealSchedule {
            q: 200,
            m: 1000,
            ..Self::default()
        }
    }

    /// Final temperature `t_max · r^(Q−1)`.
    pub fn t_min(&self) -> f64 {
        self.t_max * self.r.powi(self.q.saturating_sub(1) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_max > 0.0
            && self.t_max.is_finite()
            && self.r > 0.0
            && self.r < 1.0
            && self.q >= 1
            && self.m >= 1
            && self.restarts >= 1
            && self.theta_min.is_finite()
            && self.theta_max.is_finite()
            && self.theta_min <= self.theta_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid annealing schedule {self:?}")))
        }
    }
}

/// Candidate uniform over `[lo, hi]` in every coordinate.
pub fn propose<R: Rng>(current: &[f64], bounds: (f64, f64), rng: &mut R) -> Vec<f64> {
    let (lo, hi) = bounds;
    current
        .iter()
        .map(|&x| {
            let m_lo = lo - x;
            let m_hi = hi - x;
            let m = m_lo + (m_hi - m_lo) * rng.random::<f64>();
            (x + m).clamp(lo, hi)
        })
        .collect()
}

/// Metropolis rule.
pub fn metropolis_accept<R: Rng>(f_new: f64, f_old: f64, temperature: f64, rng: &mut R) -> bool {
    if f_new < f_old {
        return true;
    }
    let p_move = (-(f_new - f_old) / temperature).exp();
    let p_star: f64 = rng.random();
    p_move > p_star
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub temperature: f64,
    /// Accepted proposals / `M`.
    pub accept_rate: f64,
    /// Accepted uphill proposals / uphill proposals.
    pub uphill_accept_rate: f64,
    pub f_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOutcome {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub trace: Vec<StageTrace>,
    /// Proposal evaluations; the starting point is evaluated once more.
    pub evaluations: usize,
    pub rejected_nonfinite: usize,
    /// Restart that produced `x_best`.
    pub restart: usize,
}

/// One annealing chain driven by `rng`. `on_step` sees every visited
/// state and the running best value.
pub fn anneal_with<F, R, S>(f: &F, dim: usize, schedule: &AnnealSchedule, rng: &mut R, mut on_step: S) -> Result<AnnealOutcome>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
    R: Rng,
    S: FnMut(&[f64], f64),
{
    schedule.validate()?;
    if dim == 0 {
        return Err(Error::InvalidParams("annealing dimension must be positive".into()));
    }
    let bounds = (schedule.theta_min, schedule.theta_max);
    let mut x: Vec<f64> = (0..dim)
        .map(|_| {
            let u: f64 = rng.random();
            (bounds.0 + (bounds.1 - bounds.0) * u).clamp(bounds.0, bounds.1)
        })
        .collect();
    let mut fx = f(&x);
    if !fx.is_finite() {
        fx = f64::INFINITY;
    }
    let mut x_best = x.clone();
    let mut f_best = fx;
    let mut temperature = schedule.t_max;
    let mut trace = Vec::with_capacity(schedule.q);
    let mut evaluations = 0;
    let mut rejected_nonfinite = 0;

    for stage in 0..schedule.q {
        let mut accepted = 0usize;
        let mut uphill = 0usize;
        let mut uphill_accepted = 0usize;
        for _ in 0..schedule.m {
            let candidate = propose(&x, bounds, rng);
            let fc = f(&candidate);
            evaluations += 1;
            if !fc.is_finite() {
                rejected_nonfinite += 1;
                on_step(&x, f_best);
                continue;
            }
            let downhill = fc < fx;
            if !downhill {
                uphill += 1;
            }
            if metropolis_accept(fc, fx, temperature, rng) {
                accepted += 1;
                if !downhill {
                    uphill_accepted += 1;
                }
                x = candidate;
                fx = fc;
                if fx < f_best {
                    f_best = fx;
                    x_best.clone_from(&x);
                }
            }
            on_step(&x, f_best);
        }
        trace.push(StageTrace {
            stage,
            temperature,
            accept_rate: accepted as f64 / schedule.m as f64,
            uphill_accept_rate: if uphill > 0 {
                uphill_accepted as f64 / uphill as f64
            } else {
                0.0
            },
            f_best,
        });
        temperature *= schedule.r;
    }
    Ok(AnnealOutcome {
        x_best,
        f_best,
        trace,
        evaluations,
        rejected_nonfinite,
        restart: 0,
    })
}

/// Best of `schedule.restarts` independent chains. Restart `k` draws from
/// ChaCha stream `ANNEAL_STREAM_BASE + k` of `schedule.seed`.
pub fn anneal<F>(f: &F, dim: usize, schedule: &AnnealSchedule) -> Result<AnnealOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    anneal_exec(f, dim, schedule, Execution::Sequential)
}

pub fn anneal_exec<F>(f: &F, dim: usize, schedule: &AnnealSchedule, exec: Execution) -> Result<AnnealOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    schedule.validate()?;
    let runs = exec.map_indexed(schedule.restarts, |k| {
        let mut rng = seeds::rng(schedule.seed, seeds::ANNEAL_STREAM_BASE + k as u64);
        anneal_with(f, dim, schedule, &mut rng, |_, _| {}).map(|mut o| {
            o.restart = k;
            o
        })
    });
    let mut best: Option<AnnealOutcome> = None;
    for run in runs {
        let run = run?;
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|b| run.f_best < b.f_best) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Anneal on the GCov objective, then polish the best point locally.
pub fn sa_then_polish(
    y: &DMatrix<f64>,
    p: usize,
    obj_cfg: &ObjectiveConfig,
    schedule: &AnnealSchedule,
    local_cfg: &LocalOptConfig,
) -> Result<(EstimationResult, AnnealOutcome)> {
    let objective = GcovObjective::new(y, p, obj_cfg)?;
    sa_then_polish_with(&objective, schedule, local_cfg)
}

pub(crate) fn sa_then_polish_with(
    objective: &GcovObjective,
    schedule: &AnnealSchedule,
    local_cfg: &LocalOptConfig,
) -> Result<(EstimationResult, AnnealOutcome)> {
    let f = |x: &[f64]| objective.value(x);
    let sa = anneal(&f, objective.dim(), schedule).map_err(|e| e.at_stage("anneal"))?;
    if !sa.f_best.is_finite() {
        return Err(Error::NonFiniteObjective.at_stage("anneal"));
    }
    let polished = minimize_local(f, &sa.x_best, local_cfg).map_err(|e| e.at_stage("polish"))?;
    let start = VarParams::from_vec(objective.n(), objective.p(), &sa.x_best)?;
    let result = EstimationResult::from_local(
        objective,
        StartStrategy::Annealed,
        start,
        sa.f_best,
        Some(sa.f_best),
        &polished,
    )?;
    Ok((result, sa))
}
