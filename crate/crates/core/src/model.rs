//! Algebra of VAR coefficient matrices: companion form, eigenvalue-based
//! causal/noncausal classification, real Jordan-style decomposition and
//! counterpart construction.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default half-width of the exclusion band around the unit circle.
pub const DEFAULT_TOL_UNIT: f64 = 1e-6;

/// Condition numbers above this make a basis unusable.
const MAX_CONDITION: f64 = 1e12;

/// Coefficient matrices `Θ₁ … Θ_p` of an `n`-dimensional VAR(p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVarParams", into = "RawVarParams")]
pub struct VarParams {
    n: usize,
    coefficients: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawVarParams {
    n: usize,
    p: usize,
    coefficients: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawVarParams> for VarParams {
    type Error = Error;

    fn try_from(raw: RawVarParams) -> Result<Self> {
        if raw.coefficients.len() != raw.p {
            return Err(Error::InvalidParams(format!(
                "p = {} but {} coefficient matrices given",
                raw.p,
                raw.coefficients.len()
            )));
        }
        let mut mats = Vec::with_capacity(raw.p);
        for (lag, rows) in raw.coefficients.iter().enumerate() {
            if rows.len() != raw.n || rows.iter().any(|r| r.len() != raw.n) {
                return Err(Error::InvalidParams(format!(
                    "coefficient matrix {} is not {}x{}",
                    lag + 1,
                    raw.n,
                    raw.n
                )));
            }
            mats.push(DMatrix::from_fn(raw.n, raw.n, |i, j| rows[i][j]));
        }
        VarParams::new(mats)
    }
}

impl From<VarParams> for RawVarParams {
    fn from(params: VarParams) -> Self {
        let n = params.n;
        RawVarParams {
            n,
            p: params.p(),
            coefficients: params
                .coefficients
                .iter()
                .map(|m| (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect())
                .collect(),
        }
    }
}

impl VarParams {
    pub fn new(coefficients: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = coefficients
            .first()
            .ok_or_else(|| Error::InvalidParams("lag order must be at least 1".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        for (lag, m) in coefficients.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidParams(format!(
                    "coefficient matrix {} is {}x{}, expected {n}x{n}",
                    lag + 1,
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "coefficient matrix {} has non-finite entries",
                    lag + 1
                )));
            }
        }
        Ok(VarParams { n, coefficients })
    }

    /// VAR(1) from a single square matrix.
    pub fn var1(theta: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![theta])
    }

    /// VAR(1) from row-major entries of an `n×n` matrix.
    pub fn var1_from_rows(n: usize, rows: &[f64]) -> Result<Self> {
        Self::from_vec(n, 1, rows)
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        VarParams {
            n,
            coefficients: vec![DMatrix::zeros(n, n); p],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// Number of free coefficients, `n²·p`.
    pub fn dim(&self) -> usize {
        self.n * self.n * self.p()
    }

    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    /// `Θ_lag` with 1-based lag.
    pub fn lag(&self, lag: usize) -> &DMatrix<f64> {
        &self.coefficients[lag - 1]
    }

    /// Row-major flattening of `Θ₁, …, Θ_p`.
    pub fn to_vec(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.dim());
        for m in &self.coefficients {
            for i in 0..n {
                for j in 0..n {
                    out.push(m[(i, j)]);
                }
            }
        }
        out
    }

    /// Inverse of [`VarParams::to_vec`].
    pub fn from_vec(n: usize, p: usize, values: &[f64]) -> Result<Self> {
        if n == 0 || p == 0 || values.len() != n * n * p {
            return Err(Error::InvalidParams(format!(
                "{} values cannot form {p} matrices of size {n}x{n}",
                values.len()
            )));
        }
        let mats = values
            .chunks(n * n)
            .map(|c| DMatrix::from_row_slice(n, n, c))
            .collect();
        Self::new(mats)
    }

    /// Index into [`VarParams::to_vec`] of entry `(i, j)` (0-based) of `Θ_lag` (1-based).
    pub fn flat_index(&self, lag: usize, i: usize, j: usize) -> usize {
        (lag - 1) * self.n * self.n + i * self.n + j
    }

    pub fn with_entry(&self, lag: usize, i: usize, j: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.coefficients[lag - 1][(i, j)] = value;
        out
    }

    /// `(n·p)×(n·p)` companion matrix; `Θ₁` itself when `p = 1`.
    pub fn companion(&self) -> DMatrix<f64> {
        let n = self.n;
        let p = self.p();
        if p == 1 {
            return self.coefficients[0].clone();
        }
        let d = n * p;
        let mut c = DMatrix::zeros(d, d);
        for (k, m) in self.coefficients.iter().enumerate() {
            c.view_mut((0, k * n), (n, n)).copy_from(m);
        }
        for i in n..d {
            c[(i, i - n)] = 1.0;
        }
        c
    }

    /// Companion eigenvalues in ascending modulus.
    pub fn eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        eigenvalues(&self.companion())
    }
}

/// Causal/noncausal dimensions of a VAR(p): `n1` companion eigenvalues
/// inside the unit circle and `n2` outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelOrder {
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
}

impl ModelOrder {
    pub fn total(&self) -> usize {
        self.n1 + self.n2
    }

    /// All labels for a given `n·p`, from purely causal to purely noncausal.
    pub fn all(n: usize, p: usize) -> Vec<ModelOrder> {
        let d = n * p;
        (0..=d)
            .rev()
            .map(|n1| ModelOrder { n1, n2: d - n1, p })
            .collect()
    }
}

impl fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VAR({},{},{})", self.n1, self.n2, self.p)
    }
}

pub fn companion(params: &VarParams) -> DMatrix<f64> {
    params.companion()
}

fn cmp_eig(a: &Complex<f64>, b: &Complex<f64>) -> Ordering {
    a.norm()
        .total_cmp(&b.norm())
        .then(a.re.total_cmp(&b.re))
        .then(b.im.total_cmp(&a.im))
}

/// Eigenvalues of a real square matrix sorted by ascending modulus
/// (ties: real part, then positive imaginary part first).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::InvalidParams("eigenvalue iteration did not converge".into()))?;
    let mut eig: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(cmp_eig);
    Ok(eig)
}

/// Counts stable and unstable companion eigenvalues, refusing any within
/// `tol_unit` of the unit circle.
pub fn classify_roots(params: &VarParams, tol_unit: f64) -> Result<ModelOrder> {
    let eig = params.eigenvalues()?;
    let mut n1 = 0;
    for z in &eig {
        let modulus = z.norm();
        if (modulus - 1.0).abs() <= tol_unit {
            return Err(Error::UnitRootAmbiguity {
                modulus,
                tol: tol_unit,
            });
        }
        if modulus < 1.0 {
            n1 += 1;
        }
    }
    Ok(ModelOrder {
        n1,
        n2: eig.len() - n1,
        p: params.p(),
    })
}

/// Strict cut at modulus one (`|λ| ≥ 1` counts as noncausal). Total on any
/// finite matrix; used for every estimated matrix.
pub fn classify_strict(params: &VarParams) -> Result<ModelOrder> {
    let eig = params.eigenvalues()?;
    let n1 = eig.iter().filter(|z| z.norm() < 1.0).count();
    Ok(ModelOrder {
        n1,
        n2: eig.len() - n1,
        p: params.p(),
    })
}

/// `Θ = A·J·A⁻¹` with `J` real block-diagonal (1×1 blocks for real
/// eigenvalues, rotation-scaling 2×2 blocks for conjugate pairs), stable
/// block first.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub a: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    pub j: DMatrix<f64>,
    /// Eigenvalues in the order their blocks appear in `J`.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Size of the stable block `J₁`.
    pub n1: usize,
}

impl SpectralDecomposition {
    pub fn n2(&self) -> usize {
        self.j.nrows() - self.n1
    }

    pub fn j1(&self) -> DMatrix<f64> {
        self.j.view((0, 0), (self.n1, self.n1)).into_owned()
    }

    pub fn j2(&self) -> DMatrix<f64> {
        let n1 = self.n1;
        let n2 = self.n2();
        self.j.view((n1, n1), (n2, n2)).into_owned()
    }

    /// `A J A⁻¹`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.a * &self.j * &self.a_inv
    }

    pub fn is_real(&self) -> bool {
        self.eigenvalues.iter().all(|z| z.im == 0.0)
    }
}

fn is_real_eig(z: &Complex<f64>) -> bool {
    z.im.abs() <= 1e-10 * z.norm().max(1.0)
}

fn same_eig(a: &Complex<f64>, b: &Complex<f64>) -> bool {
    (a - b).norm() <= 1e-7 * a.norm().max(1.0)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right singular vectors of the `m` smallest singular values, or `None`
/// when the null space is smaller than `m`.
fn real_null_space(m: &DMatrix<f64>, dim: usize, scale: f64) -> Option<Vec<DVector<f64>>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let tol = 1e-6 * scale.max(1.0);
    idx.iter()
        .take(dim)
        .map(|&k| {
            (svd.singular_values[k] <= tol).then(|| v_t.row(k).transpose().into_owned())
        })
        .collect()
}

fn complex_null_space(
    m: &DMatrix<Complex<f64>>,
    dim: usize,
    scale: f64,
) -> Option<Vec<DVector<Complex<f64>>>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let tol = 1e-6 * scale.max(1.0);
    idx.iter()
        .take(dim)
        .map(|&k| {
            (svd.singular_values[k] <= tol)
                .then(|| v_t.row(k).transpose().map(|c: Complex<f64>| c.conj()))
        })
        .collect()
}

/// Unit norm, largest-magnitude component positive.
fn normalize(mut v: DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs()));
    if pivot.is_some_and(|x| x < 0.0) {
        v = -v;
    }
    v
}

/// Real block decomposition of a diagonalizable matrix with no eigenvalue
/// within `tol_unit` of the unit circle.
pub fn spectral_decomposition(theta: &DMatrix<f64>, tol_unit: f64) -> Result<SpectralDecomposition> {
    let d = theta.nrows();
    if d == 0 || theta.ncols() != d {
        return Err(Error::InvalidParams("matrix must be square and nonempty".into()));
    }
    let eig = eigenvalues(theta)?;
    for z in &eig {
        let modulus = z.norm();
        if (modulus - 1.0).abs() <= tol_unit {
            return Err(Error::UnitRootAmbiguity {
                modulus,
                tol: tol_unit,
            });
        }
    }
    let scale = theta.norm();

    // Scalar matrix: any basis works, keep the identity so that the
    // transformation is exact.
    let first = eig[0];
    if is_real_eig(&first) && eig.iter().all(|z| same_eig(z, &first)) {
        let residual = (theta - DMatrix::identity(d, d) * first.re).norm();
        if residual <= 1e-12 * scale.max(1.0) {
            let n1 = if first.norm() < 1.0 { d } else { 0 };
            return Ok(SpectralDecomposition {
                a: DMatrix::identity(d, d),
                a_inv: DMatrix::identity(d, d),
                j: theta.clone(),
                eigenvalues: vec![Complex::new(first.re, 0.0); d],
                n1,
            });
        }
    }

    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut blocks: Vec<(usize, Complex<f64>)> = Vec::new(); // (block size, eigenvalue)
    let mut ordered = Vec::with_capacity(d);
    let mut i = 0;
    while i < eig.len() {
        let lead = eig[i];
        let mut cluster = vec![lead];
        let mut k = i + 1;
        while k < eig.len() && (same_eig(&eig[k], &lead) || same_eig(&eig[k], &lead.conj())) {
            cluster.push(eig[k]);
            k += 1;
        }
        i = k;
        if is_real_eig(&lead) {
            let m = cluster.len();
            let value = cluster.iter().map(|z| z.re).sum::<f64>() / m as f64;
            let shifted = theta - DMatrix::identity(d, d) * value;
            let basis = real_null_space(&shifted, m, scale).ok_or(Error::Defective)?;
            for v in basis {
                columns.push(normalize(v));
                blocks.push((1, Complex::new(value, 0.0)));
                ordered.push(Complex::new(value, 0.0));
            }
        } else {
            // Conjugate pairs: the cluster holds both halves.
            let m = cluster.len() / 2;
            if m == 0 || cluster.len() % 2 != 0 {
                return Err(Error::Defective);
            }
            let upper: Vec<_> = cluster.iter().filter(|z| z.im > 0.0).collect();
            let value = Complex::new(
                upper.iter().map(|z| z.re).sum::<f64>() / upper.len() as f64,
                upper.iter().map(|z| z.im).sum::<f64>() / upper.len() as f64,
            );
            let shifted = theta.map(|x| Complex::new(x, 0.0))
                - DMatrix::<Complex<f64>>::identity(d, d) * value;
            let basis = complex_null_space(&shifted, m, scale).ok_or(Error::Defective)?;
            for v in basis {
                let re = v.map(|c| c.re);
                let im = v.map(|c| c.im);
                let norm = (re.norm_squared() + im.norm_squared()).sqrt();
                columns.push(re / norm);
                columns.push(im / norm);
                blocks.push((2, value));
                ordered.push(value);
                ordered.push(value.conj());
            }
        }
    }
    if columns.len() != d {
        return Err(Error::Defective);
    }

    let a = DMatrix::from_columns(&columns);
    let condition = condition_number(&a);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Defective);
    }
    let a_inv = a.clone().try_inverse().ok_or(Error::Defective)?;
    let mut j = DMatrix::zeros(d, d);
    let mut pos = 0;
    for &(size, z) in &blocks {
        if size == 1 {
            j[(pos, pos)] = z.re;
        } else {
            j[(pos, pos)] = z.re;
            j[(pos, pos + 1)] = z.im;
            j[(pos + 1, pos)] = -z.im;
            j[(pos + 1, pos + 1)] = z.re;
        }
        pos += size;
    }
    let n1 = ordered.iter().filter(|z| z.norm() < 1.0).count();
    let decomposition = SpectralDecomposition {
        a,
        a_inv,
        j,
        eigenvalues: ordered,
        n1,
    };
    let err = (decomposition.reconstruct() - theta).norm();
    if err > 1e-8 * scale.max(1.0) {
        return Err(Error::Defective);
    }
    Ok(decomposition)
}

/// `Θ = A·diag(eigenvalues)·A⁻¹`.
pub fn assemble_from_jordan(a: &DMatrix<f64>, eigenvalues: &[f64]) -> Result<VarParams> {
    let n = a.nrows();
    if a.ncols() != n || eigenvalues.len() != n {
        return Err(Error::InvalidParams(format!(
            "basis is {}x{} but {} eigenvalues given",
            a.nrows(),
            a.ncols(),
            eigenvalues.len()
        )));
    }
    let condition = condition_number(a);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularBasis { condition });
    }
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularBasis { condition })?;
    let j = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    VarParams::var1(a * j * a_inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterpartMode {
    /// Every eigenvalue outside the unit circle is replaced by its reciprocal.
    Causal,
    /// Every eigenvalue inside the unit circle is replaced by its reciprocal.
    Noncausal,
}

/// Counterpart matrix sharing the eigenvectors of `Θ` with selected
/// eigenvalues inverted.
pub fn counterpart(params: &VarParams, mode: CounterpartMode) -> Result<VarParams> {
    if params.p() != 1 {
        return Err(Error::Unsupported(
            "counterparts are defined for VAR(1) coefficient matrices".into(),
        ));
    }
    let theta = params.lag(1);
    let eig = eigenvalues(theta)?;
    if eig.iter().any(|z| !is_real_eig(z)) {
        return Err(Error::ComplexSpectrum);
    }
    let dec = spectral_decomposition(theta, DEFAULT_TOL_UNIT)?;
    if !dec.is_real() {
        return Err(Error::ComplexSpectrum);
    }
    let flipped: Vec<f64> = dec
        .eigenvalues
        .iter()
        .map(|z| {
            let flip = match mode {
                CounterpartMode::Causal => z.re.abs() > 1.0,
                CounterpartMode::Noncausal => z.re.abs() < 1.0,
            };
            if flip {
                1.0 / z.re
            } else {
                z.re
            }
        })
        .collect();
    if flipped.iter().any(|v| !v.is_finite()) {
        // A zero eigenvalue has no noncausal reciprocal.
        return Err(Error::InvalidParams(
            "zero eigenvalue cannot be inverted".into(),
        ));
    }
    let j = DMatrix::from_diagonal(&DVector::from_vec(flipped));
    VarParams::var1(&dec.a * j * &dec.a_inv)
}
