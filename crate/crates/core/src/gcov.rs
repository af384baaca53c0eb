//! GCov objectives: residuals of a candidate VAR, element-wise nonlinear
//! transforms, sample autocovariances and the weighted portmanteau traces.
//!
//! For lags `h = 1..H` with `Γ̂(h)` the sample autocovariance of the
//! transformed residuals,
//!
//! * `gcov22 = Σ_h Tr[Γ̂(h) Γ̂(0)⁻¹ Γ̂(h)ᵀ Γ̂(0)⁻¹]`
//! * `gcov17 = Σ_h Tr[Γ̂(h) D⁻¹ Γ̂(h)ᵀ D⁻¹]`, `D = diag Γ̂(0)`.
//!
//! Both are evaluated on variance-standardized columns, so the ridge added
//! to `Γ̂(0)` is relative to each column's own scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VarParams;

/// Floor inside `log(max(u², ε))`.
pub const LOG_SQUARE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Square,
    Cube,
    FourthPower,
    LogSquare,
    Sign,
}

impl TransformKind {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            TransformKind::Identity => u,
            TransformKind::Square => u * u,
            TransformKind::Cube => u * u * u,
            TransformKind::FourthPower => {
                let s = u * u;
                s * s
            }
            TransformKind::LogSquare => (u * u).max(LOG_SQUARE_FLOOR).ln(),
            TransformKind::Sign => {
                if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One element-wise map `a_k` reading residual component `component`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformFn {
    pub component: usize,
    pub kind: TransformKind,
}

/// The transform families `T1`–`T4`, or an explicit list.
///
/// Named sets expand kind-major: every component gets the first kind,
/// then every component gets the second, and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransformSet {
    /// `u, u², u³, u⁴`
    T1,
    /// `u, log u²`
    T2,
    /// `sign u, u²`
    T3,
    /// `sign u, log u²`
    T4,
    #[serde(rename = "custom")]
    Custom(Vec<TransformFn>),
}

impl std::str::FromStr for TransformSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(TransformSet::T1),
            "T2" => Ok(TransformSet::T2),
            "T3" => Ok(TransformSet::T3),
            "T4" => Ok(TransformSet::T4),
            _ => Err(Error::InvalidParams(format!("unknown transform set {s:?}"))),
        }
    }
}

impl TransformSet {
    fn kinds(&self) -> Option<&'static [TransformKind]> {
        use TransformKind::*;
        match self {
            TransformSet::T1 => Some(&[Identity, Square, Cube, FourthPower]),
            TransformSet::T2 => Some(&[Identity, LogSquare]),
            TransformSet::T3 => Some(&[Sign, Square]),
            TransformSet::T4 => Some(&[Sign, LogSquare]),
            TransformSet::Custom(_) => None,
        }
    }

    /// The functions for residual dimension `n`, validated.
    pub fn functions(&self, n: usize) -> Result<Vec<TransformFn>> {
        let fns: Vec<TransformFn> = match (self.kinds(), self) {
            (Some(kinds), _) => kinds
                .iter()
                .flat_map(|&kind| (0..n).map(move |component| TransformFn { component, kind }))
                .collect(),
            (None, TransformSet::Custom(list)) => list.clone(),
            (None, _) => unreachable!(),
        };
        if fns.len() < n {
            return Err(Error::InvalidParams(format!(
                "{} transforms for {n} residual components",
                fns.len()
            )));
        }
        if let Some(f) = fns.iter().find(|f| f.component >= n) {
            return Err(Error::InvalidParams(format!(
                "transform reads component {} of a {n}-dimensional residual",
                f.component
            )));
        }
        if let Some(c) = (0..n).find(|c| fns.iter().all(|f| f.component != *c)) {
            return Err(Error::InvalidParams(format!(
                "residual component {c} is not read by any transform"
            )));
        }
        Ok(fns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Gcov22,
    Gcov17,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Highest lag `H`.
    pub h: usize,
    pub variant: Variant,
    pub transforms: TransformSet,
    /// Ridge on the standardized `Γ̂(0)`, i.e. relative to `Tr Γ̂(0) / K`.
    pub ridge: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            h: 10,
            variant: Variant::Gcov22,
            transforms: TransformSet::T1,
            ridge: 1e-10,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidParams("H must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidParams(format!("invalid ridge {}", self.ridge)));
        }
        Ok(())
    }
}

/// `u_t = Y_t − Σ Θ_i Y_{t−i}` for `t = p+1 … T`.
pub fn residuals(y: &DMatrix<f64>, params: &VarParams) -> Result<DMatrix<f64>> {
    let cols = columns_of(y, params.n())?;
    let u = residual_columns(&cols, params.n(), params.p(), &params.to_vec())?;
    let m = y.nrows() - params.p();
    Ok(DMatrix::from_fn(m, params.n(), |t, c| u[c][t]))
}

/// Column `k` holds `a_k` applied down the sample.
pub fn apply_transforms(u: &DMatrix<f64>, ts: &TransformSet) -> Result<DMatrix<f64>> {
    let fns = ts.functions(u.ncols())?;
    Ok(DMatrix::from_fn(u.nrows(), fns.len(), |t, k| {
        fns[k].kind.apply(u[(t, fns[k].component)])
    }))
}

/// `Γ̂(h) = (1/m) Σ_{t>h} (z_t − z̄)(z_{t−h} − z̄)ᵀ` with the full-sample mean.
pub fn autocov(z: &DMatrix<f64>, h: usize) -> Result<DMatrix<f64>> {
    let m = z.nrows();
    if h >= m {
        return Err(Error::LagTooLarge { lag: h, len: m });
    }
    let centered: Vec<Vec<f64>> = z
        .column_iter()
        .map(|c| {
            let mean = c.sum() / m as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let k = z.ncols();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        lagged_dot(&centered[a], &centered[b], h) / m as f64
    }))
}

/// `Σ_{t=h}^{m−1} x_t · y_{t−h}`
#[inline]
fn lagged_dot(x: &[f64], y: &[f64], h: usize) -> f64 {
    let m = x.len();
    x[h..]
        .iter()
        .zip(&y[..m - h])
        .map(|(a, b)| a * b)
        .sum()
}

fn columns_of(y: &DMatrix<f64>, n: usize) -> Result<Vec<Vec<f64>>> {
    if y.ncols() != n {
        return Err(Error::InvalidParams(format!(
            "data has {} columns, parameters have dimension {n}",
            y.ncols()
        )));
    }
    Ok(y.column_iter().map(|c| c.iter().copied().collect()).collect())
}

fn residual_columns(cols: &[Vec<f64>], n: usize, p: usize, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let len = cols.first().map_or(0, Vec::len);
    if len <= p {
        return Err(Error::LengthMismatch {
            len,
            needed: format!("more than p = {p} rows"),
        });
    }
    let m = len - p;
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let mut r: Vec<f64> = cols[c][p..].to_vec();
        for lag in 1..=p {
            for (j, col) in cols.iter().enumerate() {
                let coef = theta[(lag - 1) * n * n + c * n + j];
                if coef != 0.0 {
                    for (ri, yi) in r.iter_mut().zip(&col[p - lag..p - lag + m]) {
                        *ri -= coef * yi;
                    }
                }
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// GCov objective of already-transformed residuals (`m × K`).
pub fn objective_from_transformed(
    z: &DMatrix<f64>,
    h_max: usize,
    variant: Variant,
    ridge: f64,
) -> Result<f64> {
    let cols: Vec<Vec<f64>> = z.column_iter().map(|c| c.iter().copied().collect()).collect();
    objective_from_columns(cols, h_max, variant, ridge)
}

fn objective_from_columns(
    mut cols: Vec<Vec<f64>>,
    h_max: usize,
    variant: Variant,
    ridge: f64,
) -> Result<f64> {
    let m = cols.first().map_or(0, Vec::len);
    if m <= h_max + 1 {
        return Err(Error::LagTooLarge { lag: h_max, len: m });
    }
    if cols.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    // Center and standardize; columns with no variation carry no
    // autocovariance and are dropped.
    cols.retain_mut(|col| {
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mean = col.iter().sum::<f64>() / m as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * scale) {
            return false;
        }
        col.iter_mut().for_each(|v| *v /= sd);
        true
    });
    let k = cols.len();
    if k == 0 {
        return Ok(0.0);
    }
    let mf = m as f64;
    let total = match variant {
        Variant::Gcov22 => {
            let mut g0 = DMatrix::from_fn(k, k, |a, b| {
                if a <= b {
                    lagged_dot(&cols[a], &cols[b], 0) / mf
                } else {
                    0.0
                }
            });
            g0.fill_lower_triangle_with_upper_triangle();
            for i in 0..k {
                g0[(i, i)] += ridge;
            }
            let chol = g0.cholesky().ok_or(Error::SingularWeight)?;
            let l = chol.l();
            let mut total = 0.0;
            for h in 1..=h_max {
                let g = DMatrix::from_fn(k, k, |a, b| lagged_dot(&cols[a], &cols[b], h) / mf);
                // R = L⁻¹ Γ(h) L⁻ᵀ; Tr[Γ W Γᵀ W] = ‖R‖²_F.
                let x = l.solve_lower_triangular(&g).ok_or(Error::SingularWeight)?;
                let r_t = l
                    .solve_lower_triangular(&x.transpose())
                    .ok_or(Error::SingularWeight)?;
                total += r_t.norm_squared();
            }
            total
        }
        Variant::Gcov17 => {
            let w = 1.0 / (1.0 + ridge);
            let mut total = 0.0;
            for h in 1..=h_max {
                for a in 0..k {
                    for b in 0..k {
                        let g = lagged_dot(&cols[a], &cols[b], h) / mf * w;
                        total += g * g;
                    }
                }
            }
            total
        }
    };
    if !total.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(total)
}

/// GCov objective of `params` on data `y` (rows are time).
pub fn objective(y: &DMatrix<f64>, params: &VarParams, cfg: &ObjectiveConfig) -> Result<f64> {
    GcovObjective::new(y, params.p(), cfg)?.eval(&params.to_vec())
}

/// Objective along one coefficient, all others held at `params`.
/// `entry` is `(lag, row, col)` with a 1-based lag and 0-based indices.
pub fn objective_slice(
    y: &DMatrix<f64>,
    params: &VarParams,
    entry: (usize, usize, usize),
    grid: &[f64],
    cfg: &ObjectiveConfig,
) -> Result<Vec<(f64, f64)>> {
    let (lag, i, j) = entry;
    if lag == 0 || lag > params.p() || i >= params.n() || j >= params.n() {
        return Err(Error::InvalidParams(format!(
            "entry ({lag}, {i}, {j}) outside a VAR({}) of dimension {}",
            params.p(),
            params.n()
        )));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidParams("grid must be finite".into()));
    }
    let f = GcovObjective::new(y, params.p(), cfg)?;
    let idx = params.flat_index(lag, i, j);
    let mut theta = params.to_vec();
    grid.iter()
        .map(|&g| {
            theta[idx] = g;
            f.eval(&theta).map(|v| (g, v))
        })
        .collect()
}

/// Reusable evaluator of the GCov objective over vectorized parameters.
/// Safe to share across threads.
#[derive(Debug, Clone)]
pub struct GcovObjective {
    cols: Vec<Vec<f64>>,
    n: usize,
    p: usize,
    fns: Vec<TransformFn>,
    cfg: ObjectiveConfig,
}

impl GcovObjective {
    pub fn new(y: &DMatrix<f64>, p: usize, cfg: &ObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        let n = y.ncols();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParams("need positive dimension and lag order".into()));
        }
        let fns = cfg.transforms.functions(n)?;
        let len = y.nrows();
        if len <= p + cfg.h + 2 {
            return Err(Error::LengthMismatch {
                len,
                needed: format!("more than p + H + 2 = {} rows", p + cfg.h + 2),
            });
        }
        Ok(GcovObjective {
            cols: columns_of(y, n)?,
            n,
            p,
            fns,
            cfg: cfg.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.n * self.n * self.p
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.cfg
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidParams(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let u = residual_columns(&self.cols, self.n, self.p, theta)?;
        let z: Vec<Vec<f64>> = self
            .fns
            .iter()
            .map(|f| u[f.component].iter().map(|&v| f.kind.apply(v)).collect())
            .collect();
        objective_from_columns(z, self.cfg.h, self.cfg.variant, self.cfg.ridge)
    }

    /// `eval`, with failures mapped to `+∞` for use by the optimizers.
    pub fn value(&self, theta: &[f64]) -> f64 {
        self.eval(theta).unwrap_or(f64::INFINITY)
    }

    pub fn eval_params(&self, params: &VarParams) -> Result<f64> {
        self.eval(&params.to_vec())
    }
}

/// Per-lag summands of gcov22 computed from unstandardized `Γ̂(h)`.
/// Slower reference path; used by diagnostics.
pub fn gcov22_terms(z: &DMatrix<f64>, h_max: usize) -> Result<DVector<f64>> {
    let g0 = autocov(z, 0)?;
    let w = g0.try_inverse().ok_or(Error::SingularWeight)?;
    let mut out = DVector::zeros(h_max);
    for h in 1..=h_max {
        let g = autocov(z, h)?;
        out[h - 1] = (&g * &w * g.transpose() * &w).trace();
    }
    Ok(out)
}
