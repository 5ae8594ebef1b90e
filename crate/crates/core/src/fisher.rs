//! Closed-form Fisher information and entropy for Gaussian linear models.
//!
//! With `X ~ N(mu, tau2 I)`, `Y = H X` and `Y* = Y + eps`, `eps ~ N(0, Sigma)`,
//! the information about `tau2` carried by `Y*` depends on `H` and `Sigma`
//! only through the spectrum of the noise-whitened Gram matrix
//! `Psi = Sigma^{-1/2} H H^T Sigma^{-1/2}`.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::linalg::{self, inv_sqrt_sym};

/// Eigenvalues of `Psi` below this fraction of the largest are treated as zero.
pub const PSI_CLAMP: f64 = 1e-12;

/// Block-diagonal Fisher information for `theta = (mu, tau2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    /// p x p information about `mu`.
    pub mean_block: DMatrix<f64>,
    /// Information about `tau2`.
    pub var_block: f64,
}

impl FisherBlocks {
    /// Trace of the full `(p + 1) x (p + 1)` matrix.
    pub fn trace(&self) -> f64 {
        self.mean_block.trace() + self.var_block
    }
}

pub(crate) fn check_tau2(tau2: f64) -> Result<()> {
    if tau2 > 0.0 && tau2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tau2 must be positive and finite, got {tau2}")))
    }
}

fn check_h_sigma(h: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<()> {
    let q = linalg::ensure_square("Sigma", sigma)?;
    if h.nrows() != q {
        return Err(Error::dims("rows of H vs Sigma", q, h.nrows()));
    }
    Ok(())
}

/// Fisher information matrix of `N(mu(theta), Sigma(theta))` given the
/// partial derivatives of mean and covariance with respect to each of the
/// N parameters.
pub fn fisher_gaussian_general(
    mu_partials: &[DVector<f64>],
    sigma_partials: &[DMatrix<f64>],
    sigma: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = linalg::ensure_square("Sigma", sigma)?;
    let n = mu_partials.len();
    if sigma_partials.len() != n {
        return Err(Error::dims("number of covariance partials", n, sigma_partials.len()));
    }
    for m in mu_partials {
        if m.len() != d {
            return Err(Error::dims("mean partial", d, m.len()));
        }
    }
    for s in sigma_partials {
        if s.shape() != (d, d) {
            return Err(Error::dims("covariance partial", d, s.nrows()));
        }
    }
    let chol = linalg::cholesky("Sigma", sigma)?;
    let solved_mu: Vec<DVector<f64>> = mu_partials.iter().map(|m| chol.solve(m)).collect();
    let solved_sigma: Vec<DMatrix<f64>> = sigma_partials.iter().map(|s| chol.solve(s)).collect();

    let mut fim = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mean_term = mu_partials[i].dot(&solved_mu[j]);
            let cov_term = 0.5 * (&solved_sigma[i] * &solved_sigma[j]).trace();
            fim[(i, j)] = mean_term + cov_term;
            fim[(j, i)] = fim[(i, j)];
        }
    }
    Ok(fim)
}

/// Information about `tau2` in the noiseless signal `H X`: `q / (2 tau2^2)`.
pub fn fisher_signal_tau2(q: usize, tau2: f64) -> f64 {
    0.5 * q as f64 / (tau2 * tau2)
}

/// `Psi = Sigma^{-1/2} H H^T Sigma^{-1/2}`.
pub fn psi_matrix(h: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_h_sigma(h, sigma)?;
    let r = inv_sqrt_sym(sigma).map_err(|e| match e {
        Error::NotPositiveDefinite { min_eigenvalue, .. } => Error::NotPositiveDefinite {
            matrix: "Sigma".into(),
            min_eigenvalue,
        },
        Error::NotSymmetric { asymmetry, .. } => Error::NotSymmetric {
            matrix: "Sigma".into(),
            asymmetry,
        },
        other => other,
    })?;
    let rh = &r * h;
    let psi = &rh * rh.transpose();
    Ok((&psi + psi.transpose()) * 0.5)
}

/// Eigenvalues of `Psi`, descending, with values below `PSI_CLAMP * max`
/// set to exactly zero.
pub fn psi_eigenvalues(h: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let psi = psi_matrix(h, sigma)?;
    Ok(clamp_spectrum(linalg::sym_eigenvalues(&psi)))
}

pub(crate) fn clamp_spectrum(mut values: DVector<f64>) -> DVector<f64> {
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let cut = PSI_CLAMP * max;
    for v in values.iter_mut() {
        if *v <= cut {
            *v = 0.0;
        }
    }
    values
}

/// Information about `tau2` in `Y*` from the spectrum of `Psi`:
/// `1/2 sum_i (lambda_i / (1 + tau2 lambda_i))^2`.
pub fn fisher_observed_from_spectrum(psi_eigs: &DVector<f64>, tau2: f64) -> f64 {
    0.5 * psi_eigs
        .iter()
        .map(|&l| {
            let t = l / (1.0 + tau2 * l);
            t * t
        })
        .sum::<f64>()
}

/// Information about `tau2` carried by the noisy observable `Y* = H X + eps`.
pub fn fisher_observed_tau2(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64) -> Result<f64> {
    check_tau2(tau2)?;
    let eigs = psi_eigenvalues(h, sigma)?;
    Ok(fisher_observed_from_spectrum(&eigs, tau2))
}

/// Mean and variance blocks of the Fisher information of the signal `H X`
/// (`for_signal`) or of the observable `H X + eps`.
pub fn fisher_blocks_linear(
    h: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tau2: f64,
    for_signal: bool,
) -> Result<FisherBlocks> {
    check_tau2(tau2)?;
    check_h_sigma(h, sigma)?;
    linalg::ensure_full_row_rank(h)?;
    let q = h.nrows();
    let hht = h * h.transpose();
    let hht_inv = linalg::cholesky("HH^T", &hht)?.inverse();
    if for_signal {
        let mean_block = h.transpose() * &hht_inv * h / tau2;
        return Ok(FisherBlocks {
            mean_block: (&mean_block + mean_block.transpose()) * 0.5,
            var_block: fisher_signal_tau2(q, tau2),
        });
    }
    // (1/tau2) H^T (HH^T)^{-1} (I + Sigma (tau2 HH^T)^{-1})^{-1} H
    let inner = DMatrix::identity(q, q) + sigma * &hht_inv / tau2;
    let inner_inv = inner
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("I + Sigma (tau2 HH^T)^{-1} is singular".into()))?;
    let mean_block = h.transpose() * &hht_inv * inner_inv * h / tau2;
    Ok(FisherBlocks {
        mean_block: (&mean_block + mean_block.transpose()) * 0.5,
        var_block: fisher_observed_tau2(h, sigma, tau2)?,
    })
}

/// Differential entropy of a d-dimensional Gaussian with covariance `gamma`:
/// `1/2 (d ln(2 pi e) + ln det gamma)`.
pub fn entropy_gaussian(gamma: &DMatrix<f64>) -> Result<f64> {
    let d = linalg::ensure_square("Gamma", gamma)?;
    let chol = linalg::cholesky("Gamma", gamma)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (d as f64 * (2.0 * PI * E).ln() + log_det))
}

/// Entropy of a scalar Gaussian with variance `var`.
pub fn entropy_gaussian_scalar(var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NotPositiveDefinite {
            matrix: "variance".into(),
            min_eigenvalue: var,
        });
    }
    Ok(0.5 * ((2.0 * PI * E).ln() + var.ln()))
}
