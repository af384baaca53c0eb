//! Starting values and the local quasi-Newton minimizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    assemble_from_jordan, classify_roots, counterpart, CounterpartMode, ModelOrder, VarParams,
    DEFAULT_TOL_UNIT,
};
use crate::seeds;

/// How the local optimizer is started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartStrategy {
    Ols,
    ReverseOls,
    TrueParams,
    CausalCounterpart,
    NoncausalCounterpart,
    RandomMixed { n1: usize, n2: usize },
    /// Best point of a simulated-annealing search.
    Annealed,
    Explicit(VarParams),
}

impl std::fmt::Display for StartStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartStrategy::Ols => f.write_str("ols"),
            StartStrategy::ReverseOls => f.write_str("reverse_ols"),
            StartStrategy::TrueParams => f.write_str("true_params"),
            StartStrategy::CausalCounterpart => f.write_str("causal_counterpart"),
            StartStrategy::NoncausalCounterpart => f.write_str("noncausal_counterpart"),
            StartStrategy::RandomMixed { n1, n2 } => write!(f, "random_mixed({n1},{n2})"),
            StartStrategy::Annealed => f.write_str("annealed"),
            StartStrategy::Explicit(_) => f.write_str("explicit"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalOptConfig {
    /// Relative central-difference step: `h_i = grad_step·(1 + |x_i|)`.
    pub grad_step: f64,
    pub tol_grad: f64,
    pub tol_step: f64,
    pub max_iter: usize,
    /// Largest coordinate change tried on the first iteration, before any
    /// curvature information exists.
    pub first_step: f64,
}

impl Default for LocalOptConfig {
    fn default() -> Self {
        LocalOptConfig {
            grad_step: 1e-6,
            tol_grad: 1e-8,
            tol_step: 1e-10,
            max_iter: 500,
            first_step: 0.1,
        }
    }
}

impl LocalOptConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_step > 0.0
            && self.tol_grad > 0.0
            && self.tol_step > 0.0
            && self.first_step > 0.0
            && self.max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid local optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Regressor matrix `[Y_{t−1} … Y_{t−p}]` and target `Y_t`, `t = p+1…T`.
fn lagged_design(y: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = y.ncols();
    let m = y.nrows() - p;
    let x = DMatrix::from_fn(m, n * p, |t, c| {
        let lag = c / n + 1;
        y[(t + p - lag, c % n)]
    });
    let target = y.rows(p, m).into_owned();
    (x, target)
}

fn least_squares(x: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = x.transpose() * x;
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = (gram / scale).cholesky().ok_or(Error::SingularDesign)?;
    let rhs = x.transpose() * target / scale;
    let b = chol.solve(&rhs);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign);
    }
    Ok(b)
}

/// Least-squares VAR(p) without intercept.
pub fn ols_var(y: &DMatrix<f64>, p: usize) -> Result<VarParams> {
    let n = y.ncols();
    if p == 0 || y.nrows() <= n * p + 1 {
        return Err(Error::LengthMismatch {
            len: y.nrows(),
            needed: format!("more than n·p + 1 = {} rows", n * p + 1),
        });
    }
    let (x, target) = lagged_design(y, p);
    let b = least_squares(&x, &target)?; // (n·p) × n
    let mats = (0..p)
        .map(|k| b.rows(k * n, n).transpose())
        .collect::<Vec<_>>();
    VarParams::new(mats)
}

/// Regress `Y_t` on `Y_{t+1}` and invert the estimated matrix.
pub fn reverse_ols(y: &DMatrix<f64>) -> Result<VarParams> {
    let n = y.ncols();
    let t = y.nrows();
    if t <= n + 1 {
        return Err(Error::LengthMismatch {
            len: t,
            needed: format!("more than n + 1 = {} rows", n + 1),
        });
    }
    let lead = y.rows(1, t - 1).into_owned();
    let current = y.rows(0, t - 1).into_owned();
    let b = least_squares(&lead, &current)?;
    let forward = b.transpose();
    let inv = forward.try_inverse().ok_or(Error::SingularEstimate)?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularEstimate);
    }
    VarParams::var1(inv)
}

fn gradient<F>(f: &F, x: &[f64], fx: f64, step: f64, evals: &mut usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * (1.0 + x[i].abs());
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        *evals += 2;
        g[i] = match (up.is_finite(), down.is_finite()) {
            (true, true) => (up - down) / (2.0 * h),
            (true, false) => (up - fx) / h,
            (false, true) => (fx - down) / h,
            (false, false) => return Err(Error::NonFiniteObjective),
        };
    }
    Ok(g)
}

/// BFGS with central-difference gradients and backtracking Armijo steps.
/// Non-finite trial points are treated as failed steps and shrunk.
pub fn minimize_local<F>(f: F, x0: &[f64], cfg: &LocalOptConfig) -> Result<LocalResult>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    if dim == 0 {
        return Ok(LocalResult { x, f: fx, converged: true, iterations: 0, evaluations: evals });
    }
    let mut g = DVector::from_vec(gradient(&f, &x, fx, cfg.grad_step, &mut evals)?);
    let mut hinv = DMatrix::<f64>::identity(dim, dim);
    let mut scaled = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        if g.norm() < cfg.tol_grad {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(dim, dim);
            scaled = false;
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut alpha = if scaled {
            1.0
        } else {
            (cfg.first_step / dir.amax()).min(1.0)
        };

        let mut accepted = None;
        loop {
            let step = &dir * alpha;
            if step.amax() < cfg.tol_step {
                break;
            }
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let ft = f(&trial);
            evals += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft, step));
                break;
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new, s)) = accepted else {
            if scaled {
                // Curvature model went stale; retry once from steepest descent.
                hinv = DMatrix::identity(dim, dim);
                scaled = false;
                continue;
            }
            converged = true;
            break;
        };

        let g_new = DVector::from_vec(gradient(&f, &x_new, f_new, cfg.grad_step, &mut evals)?);
        let y = &g_new - &g;
        let sy = s.dot(&y);
        x = x_new;
        fx = f_new;
        g = g_new;
        if s.amax() < cfg.tol_step {
            converged = true;
            break;
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                hinv = DMatrix::identity(dim, dim) * (sy / y.norm_squared());
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            hinv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            hinv += &s * s.transpose() * (rho * rho * yhy + rho);
        }
    }
    if !converged && g.norm() < cfg.tol_grad {
        converged = true;
    }
    Ok(LocalResult { x, f: fx, converged, iterations, evaluations: evals })
}

/// Eigenvalue ranges for random mixed starts.
const RANDOM_STABLE: (f64, f64) = (0.2, 0.9);
const RANDOM_EXPLOSIVE: (f64, f64) = (1.1, 3.0);
const RANDOM_BASIS_MAX_CONDITION: f64 = 10.0;

/// Random VAR(1) with exactly `n1` eigenvalues in the stable range and
/// `n2` in the explosive range, on a random well-conditioned basis.
pub fn random_mixed<R: Rng>(n1: usize, n2: usize, rng: &mut R) -> Result<VarParams> {
    let n = n1 + n2;
    if n == 0 {
        return Err(Error::InvalidParams("random_mixed needs n1 + n2 > 0".into()));
    }
    let target = ModelOrder { n1, n2, p: 1 };
    for _ in 0..10_000 {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let sv = a.clone().svd(false, false).singular_values;
        if !(sv.max() / sv.min() < RANDOM_BASIS_MAX_CONDITION) {
            continue;
        }
        let eig: Vec<f64> = (0..n)
            .map(|k| {
                let (lo, hi) = if k < n1 { RANDOM_STABLE } else { RANDOM_EXPLOSIVE };
                rng.random_range(lo..hi)
            })
            .collect();
        let theta = assemble_from_jordan(&a, &eig)?;
        if classify_roots(&theta, DEFAULT_TOL_UNIT).ok() == Some(target) {
            return Ok(theta);
        }
    }
    Err(Error::InvalidParams("could not draw a random mixed matrix".into()))
}

/// Starting matrix for `strategy`.
///
/// Counterparts are taken of `reference` (the data-generating matrix in
/// simulation studies) when given, otherwise of the OLS estimate.
/// `seed` drives `random_mixed`.
pub fn make_start(
    y: &DMatrix<f64>,
    strategy: &StartStrategy,
    p: usize,
    reference: Option<&VarParams>,
    seed: u64,
) -> Result<VarParams> {
    let need_var1 = |what: &str| -> Result<()> {
        if p == 1 {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} start requires p = 1")))
        }
    };
    let params = match strategy {
        StartStrategy::Ols => ols_var(y, p)?,
        StartStrategy::ReverseOls => {
            need_var1("reverse_ols")?;
            reverse_ols(y)?
        }
        StartStrategy::TrueParams => reference
            .cloned()
            .ok_or_else(|| Error::InvalidParams("true_params start without known parameters".into()))?,
        StartStrategy::CausalCounterpart | StartStrategy::NoncausalCounterpart => {
            need_var1("counterpart")?;
            let base = match reference {
                Some(r) => r.clone(),
                None => ols_var(y, 1)?,
            };
            let mode = if *strategy == StartStrategy::CausalCounterpart {
                CounterpartMode::Causal
            } else {
                CounterpartMode::Noncausal
            };
            counterpart(&base, mode)?
        }
        StartStrategy::RandomMixed { n1, n2 } => {
            need_var1("random_mixed")?;
            if n1 + n2 != y.ncols() {
                return Err(Error::InvalidParams(format!(
                    "random_mixed target ({n1},{n2}) does not match dimension {}",
                    y.ncols()
                )));
            }
            let mut rng = seeds::rng(seed, seeds::START_STREAM);
            random_mixed(*n1, *n2, &mut rng)?
        }
        StartStrategy::Annealed => {
            return Err(Error::Unsupported(
                "annealed starts are produced by the annealing optimizer".into(),
            ))
        }
        StartStrategy::Explicit(m) => m.clone(),
    };
    if params.p() != p || params.n() != y.ncols() {
        return Err(Error::InvalidParams(format!(
            "start is a VAR({}) of dimension {}, expected VAR({p}) of dimension {}",
            params.p(),
            params.n(),
            y.ncols()
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(theta: &DMatrix<f64>, len: usize) -> DMatrix<f64> {
        let n = theta.nrows();
        let mut y = DMatrix::zeros(len, n);
        for c in 0..n {
            y[(0, c)] = 1.0 + c as f64;
        }
        for t in 1..len {
            let next = theta * y.row(t - 1).transpose();
            y.set_row(t, &next.transpose());
        }
        y
    }

    #[test]
    fn quadratic_bowl() {
        let c = [1.5, -2.0, 0.25];
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for x0 in [[0.0, 0.0, 0.0], [10.0, -7.0, 3.0]] {
            let r = minimize_local(f, &x0, &LocalOptConfig::default()).unwrap();
            assert!(r.converged);
            for (a, b) in r.x.iter().zip(&c) {
                assert!((a - b).abs() < 1e-6, "{:?}", r.x);
            }
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize_local(f, &[-1.2, 1.0], &LocalOptConfig::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn never_increases_and_survives_infinite_regions() {
        // +∞ for x > 1; minimum of the finite part is at the wall.
        let f = |x: &[f64]| if x[0] > 1.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) };
        let r = minimize_local(f, &[0.0], &LocalOptConfig::default()).unwrap();
        assert!(r.f <= 4.0);
        assert!(r.x[0] <= 1.0);
        assert!(matches!(
            minimize_local(|_: &[f64]| f64::NAN, &[0.0], &LocalOptConfig::default()),
            Err(Error::NonFiniteObjective)
        ));
    }

    #[test]
    fn ols_recovers_noiseless_var1() {
        let theta = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let y = noiseless(&theta, 40);
        let est = ols_var(&y, 1).unwrap();
        assert!((est.lag(1) - &theta).amax() < 1e-10);
    }

    #[test]
    fn reverse_ols_recovers_noiseless_var1() {
        let theta = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.7]);
        let y = noiseless(&theta, 40);
        let est = reverse_ols(&y).unwrap();
        assert!((est.lag(1) - &theta).amax() < 1e-8, "{}", est.lag(1));
    }

    #[test]
    fn ols_rejects_degenerate_design() {
        let y = DMatrix::from_element(30, 2, 0.0);
        assert!(matches!(ols_var(&y, 1), Err(Error::SingularDesign)));
        let short = DMatrix::from_element(3, 2, 1.0);
        assert!(ols_var(&short, 1).is_err());
    }

    #[test]
    fn starts() {
        let y = DMatrix::from_fn(50, 2, |t, c| ((t * 31 + c * 17) % 13) as f64 - 6.0);
        let eq20 = VarParams::var1_from_rows(2, &[0.50, -0.53, 0.40, 1.50]).unwrap();
        let s = make_start(&y, &StartStrategy::Explicit(eq20.clone()), 1, None, 0).unwrap();
        assert_eq!(s, eq20);

        let eq15 = VarParams::var1_from_rows(2, &[0.5, 0.0, 0.0, 2.0]).unwrap();
        let s = make_start(&y, &StartStrategy::TrueParams, 1, Some(&eq15), 0).unwrap();
        assert_eq!(s, eq15);
        assert!(make_start(&y, &StartStrategy::TrueParams, 1, None, 0).is_err());

        let c = make_start(&y, &StartStrategy::CausalCounterpart, 1, Some(&eq15), 0).unwrap();
        assert!((c.to_vec()[3] - 0.5).abs() < 1e-14);

        assert!(make_start(&y, &StartStrategy::ReverseOls, 2, None, 0).is_err());
        assert!(make_start(&y, &StartStrategy::Annealed, 1, None, 0).is_err());
    }

    #[test]
    fn random_mixed_hits_target() {
        let y = DMatrix::from_fn(50, 2, |t, c| ((t * 31 + c * 17) % 13) as f64);
        for seed in 0..50 {
            for (n1, n2) in [(1, 1), (2, 0), (0, 2)] {
                let s = make_start(&y, &StartStrategy::RandomMixed { n1, n2 }, 1, None, seed).unwrap();
                let o = classify_roots(&s, DEFAULT_TOL_UNIT).unwrap();
                assert_eq!((o.n1, o.n2), (n1, n2));
            }
        }
        let a = make_start(&y, &StartStrategy::RandomMixed { n1: 1, n2: 1 }, 1, None, 3).unwrap();
        let b = make_start(&y, &StartStrategy::RandomMixed { n1: 1, n2: 1 }, 1, None, 3).unwrap();
        assert_eq!(a, b);
    }
}
