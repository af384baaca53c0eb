#![allow(dead_code)]

use gcov_core::mc::DgpConfig;
use gcov_core::model::assemble_from_jordan;
use gcov_core::{ErrorDistribution, VarParams};
use nalgebra::DMatrix;

pub fn diag(a: f64, b: f64) -> VarParams {
    VarParams::var1_from_rows(2, &[a, 0.0, 0.0, b]).unwrap()
}

/// Basis shared by the non-diagonal designs.
pub fn case2_basis() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.4, -1.0])
}

pub fn case2(j1: f64, j2: f64) -> VarParams {
    assemble_from_jordan(&case2_basis(), &[j1, j2]).unwrap()
}

pub fn dgp(params: VarParams, t: usize) -> DgpConfig {
    DgpConfig {
        params,
        distribution: ErrorDistribution::StudentT { dof: 4.0 },
        t,
        trim_frac: 0.10,
    }
}

/// Centered lag-`h` autocovariance by explicit loops.
pub fn autocov_oracle(z: &DMatrix<f64>, h: usize) -> DMatrix<f64> {
    let (m, k) = z.shape();
    let mut means = vec![0.0; k];
    for c in 0..k {
        for t in 0..m {
            means[c] += z[(t, c)];
        }
        means[c] /= m as f64;
    }
    let mut g = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for t in h..m {
                s += (z[(t, a)] - means[a]) * (z[(t - h, b)] - means[b]);
            }
            g[(a, b)] = s / m as f64;
        }
    }
    g
}

/// Sum over lags of squared canonical correlations between `z_t` and
/// `z_{t−h}`, from the eigenvalues of `Γ₀^{-1/2} Γₕ Γ₀⁻¹ Γₕᵀ Γ₀^{-1/2}`.
pub fn canonical_correlation_oracle(z: &DMatrix<f64>, h_max: usize) -> f64 {
    let g0 = autocov_oracle(z, 0);
    let eig = g0.clone().symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let g0_inv = g0.try_inverse().unwrap();
    (1..=h_max)
        .map(|h| {
            let gh = autocov_oracle(z, h);
            let s = &inv_sqrt * &gh * &g0_inv * gh.transpose() * &inv_sqrt;
            let s = (&s + s.transpose()) * 0.5;
            s.symmetric_eigen().eigenvalues.sum()
        })
        .sum()
}

/// Interior strict local minima of a sampled curve.
pub fn local_minima(curve: &[(f64, f64)]) -> Vec<f64> {
    curve
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
        .map(|w| w[1].0)
        .collect()
}
