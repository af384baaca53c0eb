//! Simulation of strictly stationary mixed causal/noncausal VAR paths.
//!
//! The mixed simulator splits the state into its stable and explosive
//! invariant subspaces: the stable part runs forward in time from a zero
//! initial state, the explosive part runs backward from a zero terminal
//! state. Both ends are then trimmed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{classify_roots, spectral_decomposition, VarParams, DEFAULT_TOL_UNIT};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDistribution {
    /// Independent Student-t components with `dof` degrees of freedom.
    StudentT { dof: f64 },
    StandardNormal,
}

impl ErrorDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorDistribution::StudentT { dof } if !(dof > 2.0) => Err(Error::InvalidDof(dof)),
            _ => Ok(()),
        }
    }

    /// Per-component variance.
    pub fn variance(&self) -> f64 {
        match *self {
            ErrorDistribution::StudentT { dof } => dof / (dof - 2.0),
            ErrorDistribution::StandardNormal => 1.0,
        }
    }
}

impl Default for ErrorDistribution {
    fn default() -> Self {
        ErrorDistribution::StudentT { dof: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub distribution: ErrorDistribution,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Retained length.
    pub t: usize,
    /// Fraction discarded at each end.
    #[serde(default = "default_trim")]
    pub trim_frac: f64,
    pub params: VarParams,
}

fn default_trim() -> f64 {
    0.10
}

impl SimConfig {
    pub fn new(t: usize, params: VarParams) -> Self {
        SimConfig {
            t,
            trim_frac: default_trim(),
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 10 {
            return Err(Error::LengthMismatch {
                len: self.t,
                needed: "at least 10 retained observations".into(),
            });
        }
        if !(0.0..0.5).contains(&self.trim_frac) {
            return Err(Error::InvalidParams(format!(
                "trim fraction {} outside [0, 0.5)",
                self.trim_frac
            )));
        }
        Ok(())
    }

    /// `(raw length, rows dropped at the front)`.
    pub fn raw_layout(&self) -> (usize, usize) {
        let t = self.t;
        let target = t as f64 / (1.0 - 2.0 * self.trim_frac);
        let mut raw = (target - 1e-9).ceil().max(t as f64) as usize;
        loop {
            let trim = (self.trim_frac * raw as f64).floor() as usize;
            if raw >= t + 2 * trim {
                return (raw, trim);
            }
            raw += 1;
        }
    }
}

/// `count × n` matrix of i.i.d. draws; deterministic in `spec.seed`.
pub fn draw_errors(spec: &ErrorSpec, count: usize) -> Result<DMatrix<f64>> {
    spec.distribution.validate()?;
    if count == 0 || spec.n == 0 {
        return Err(Error::InvalidParams("need at least one draw of positive dimension".into()));
    }
    let mut rng = seeds::rng(spec.seed, seeds::SIMULATION_STREAM);
    // Row-major fill so that a prefix of rows does not depend on `count`.
    let mut values = Vec::with_capacity(count * spec.n);
    match spec.distribution {
        ErrorDistribution::StudentT { dof } => {
            let dist = StudentT::new(dof).map_err(|_| Error::InvalidDof(dof))?;
            values.extend((0..count * spec.n).map(|_| dist.sample(&mut rng)));
        }
        ErrorDistribution::StandardNormal => {
            values.extend((0..count * spec.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        }
    }
    Ok(DMatrix::from_row_slice(count, spec.n, &values))
}

/// A simulated path together with the latent stable/explosive components
/// (expressed in the eigenbasis) over the retained window.
#[derive(Debug, Clone)]
pub struct MixedPath {
    pub y: DMatrix<f64>,
    /// `T × n1` stable component `Y*₁`.
    pub causal: DMatrix<f64>,
    /// `T × n2` explosive component `Y*₂`.
    pub noncausal: DMatrix<f64>,
    /// Retained error rows, `T × n`.
    pub errors: DMatrix<f64>,
}

/// Stationary mixed VAR(p) path of exactly `config.t` rows.
///
/// VAR(p) with `p > 1` is simulated on its companion state and the first
/// `n` state coordinates are returned.
pub fn simulate_mixed(config: &SimConfig, spec: &ErrorSpec) -> Result<DMatrix<f64>> {
    simulate_mixed_path(config, spec).map(|p| p.y)
}

pub fn simulate_mixed_path(config: &SimConfig, spec: &ErrorSpec) -> Result<MixedPath> {
    config.validate()?;
    let params = &config.params;
    let n = params.n();
    if spec.n != n {
        return Err(Error::InvalidParams(format!(
            "error dimension {} does not match VAR dimension {n}",
            spec.n
        )));
    }
    classify_roots(params, DEFAULT_TOL_UNIT)?;
    let companion = params.companion();
    let dec = spectral_decomposition(&companion, DEFAULT_TOL_UNIT)?;
    let d = companion.nrows();
    let n1 = dec.n1;
    let n2 = dec.n2();

    let (raw, trim) = config.raw_layout();
    let errors = draw_errors(spec, raw)?;

    // u*_t = A⁻¹ (u_t, 0, …, 0)
    let a_inv_top = dec.a_inv.columns(0, n).into_owned();
    let ustar = &errors * a_inv_top.transpose(); // raw × d

    let j1 = dec.j1();
    let mut y1 = DMatrix::<f64>::zeros(raw, n1);
    if n1 > 0 {
        let mut state = DVector::<f64>::zeros(n1);
        for t in 0..raw {
            let shock = ustar.view((t, 0), (1, n1)).transpose();
            state = &j1 * &state + shock;
            y1.set_row(t, &state.transpose());
        }
    }

    let mut y2 = DMatrix::<f64>::zeros(raw, n2);
    if n2 > 0 {
        let j2_inv = dec
            .j2()
            .try_inverse()
            .ok_or_else(|| Error::InvalidParams("explosive block is singular".into()))?;
        // Y*₂,t = J₂⁻¹ (Y*₂,t+1 − u*₂,t+1), zero terminal state.
        let mut state = DVector::<f64>::zeros(n2);
        for t in (0..raw - 1).rev() {
            let shock = ustar.view((t + 1, n1), (1, n2)).transpose();
            state = &j2_inv * (&state - shock);
            y2.set_row(t, &state.transpose());
        }
    }

    let a1 = dec.a.view((0, 0), (n, n1));
    let a2 = dec.a.view((0, n1), (n, n2));
    let rows = trim..trim + config.t;
    let y1_kept = y1.rows(rows.start, config.t).into_owned();
    let y2_kept = y2.rows(rows.start, config.t).into_owned();
    let mut y = DMatrix::<f64>::zeros(config.t, n);
    if n1 > 0 {
        y += &y1_kept * a1.transpose();
    }
    if n2 > 0 {
        y += &y2_kept * a2.transpose();
    }
    debug_assert_eq!(d, n1 + n2);
    Ok(MixedPath {
        y,
        causal: y1_kept,
        noncausal: y2_kept,
        errors: errors.rows(rows.start, config.t).into_owned(),
    })
}

/// Forward recursion `Y_t = Σ Θ_i Y_{t−i} + u_t` from a zero state,
/// dropping the first `burn_in` rows.
pub fn simulate_causal(
    params: &VarParams,
    spec: &ErrorSpec,
    t: usize,
    burn_in: usize,
) -> Result<DMatrix<f64>> {
    let order = classify_roots(params, DEFAULT_TOL_UNIT)?;
    if order.n2 > 0 {
        return Err(Error::NotCausal { n2: order.n2 });
    }
    let n = params.n();
    if spec.n != n {
        return Err(Error::InvalidParams(format!(
            "error dimension {} does not match VAR dimension {n}",
            spec.n
        )));
    }
    let total = t + burn_in;
    let errors = draw_errors(spec, total)?;
    let mut y = DMatrix::<f64>::zeros(total, n);
    for s in 0..total {
        let mut row = errors.row(s).transpose();
        for (k, theta) in params.coefficients().iter().enumerate() {
            if s > k {
                row += theta * y.row(s - k - 1).transpose();
            }
        }
        y.set_row(s, &row.transpose());
    }
    Ok(y.rows(burn_in, t).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t4(n: usize, seed: u64) -> ErrorSpec {
        ErrorSpec {
            distribution: ErrorDistribution::StudentT { dof: 4.0 },
            n,
            seed,
        }
    }

    fn sample_variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    }

    #[test]
    fn draws_are_deterministic() {
        let a = draw_errors(&t4(2, 7), 50).unwrap();
        let b = draw_errors(&t4(2, 7), 50).unwrap();
        assert_eq!(a, b);
        let c = draw_errors(&t4(2, 8), 50).unwrap();
        assert_ne!(a, c);
        // prefix stability
        let long = draw_errors(&t4(2, 7), 80).unwrap();
        assert_eq!(long.rows(0, 50), a);
    }

    #[test]
    fn student_t_variance() {
        let e = draw_errors(&t4(2, 11), 100_000).unwrap();
        for c in 0..2 {
            let v = sample_variance(e.column(c).as_slice());
            assert!((1.85..=2.15).contains(&v), "variance {v}");
        }
    }

    #[test]
    fn normal_variance() {
        let spec = ErrorSpec {
            distribution: ErrorDistribution::StandardNormal,
            n: 1,
            seed: 3,
        };
        let e = draw_errors(&spec, 100_000).unwrap();
        let v = sample_variance(e.as_slice());
        assert!((0.97..=1.03).contains(&v), "variance {v}");
    }

    #[test]
    fn rejects_low_dof() {
        let spec = ErrorSpec {
            distribution: ErrorDistribution::StudentT { dof: 2.0 },
            n: 1,
            seed: 0,
        };
        assert!(matches!(draw_errors(&spec, 10), Err(Error::InvalidDof(_))));
    }

    #[test]
    fn raw_layout_rounding() {
        let cfg = SimConfig::new(1000, VarParams::zeros(1, 1));
        assert_eq!(cfg.raw_layout(), (1250, 125));
        let cfg = SimConfig::new(333, VarParams::zeros(1, 1));
        let (raw, trim) = cfg.raw_layout();
        assert_eq!(raw, 417);
        assert_eq!(trim, 41);
        let mut cfg = SimConfig::new(50, VarParams::zeros(1, 1));
        cfg.trim_frac = 0.0;
        assert_eq!(cfg.raw_layout(), (50, 0));
    }

    #[test]
    fn zero_matrix_returns_errors() {
        let cfg = SimConfig::new(200, VarParams::zeros(2, 1));
        let spec = t4(2, 5);
        let y = simulate_mixed(&cfg, &spec).unwrap();
        let (raw, trim) = cfg.raw_layout();
        let e = draw_errors(&spec, raw).unwrap();
        assert_eq!(y, e.rows(trim, 200).into_owned());
    }

    #[test]
    fn rejects_invalid_config() {
        let spec = t4(1, 1);
        let mut cfg = SimConfig::new(5, VarParams::zeros(1, 1));
        assert!(simulate_mixed(&cfg, &spec).is_err());
        cfg.t = 100;
        cfg.trim_frac = 0.5;
        assert!(simulate_mixed(&cfg, &spec).is_err());
    }

    #[test]
    fn causal_rejects_explosive() {
        let p = VarParams::var1_from_rows(1, &[1.5]).unwrap();
        assert!(matches!(
            simulate_causal(&p, &t4(1, 1), 100, 10),
            Err(Error::NotCausal { n2: 1 })
        ));
    }

    #[test]
    fn causal_zero_is_errors() {
        let spec = t4(2, 9);
        let y = simulate_causal(&VarParams::zeros(2, 1), &spec, 30, 5).unwrap();
        let e = draw_errors(&spec, 35).unwrap();
        assert_eq!(y, e.rows(5, 30).into_owned());
    }
}
