//! Inverse-Wishart prior on `Gamma` truncated to the Sobol-well-posed region
//! `a^T Gamma a > sigma^2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::linalg;

/// Inverse-Wishart law `IW(lambda, nu)`: `Gamma^{-1} ~ Wishart(lambda^{-1}, nu)`.
#[derive(Debug, Clone)]
pub struct InverseWishart {
    nu: f64,
    /// Lower Cholesky factor of `lambda^{-1}`.
    scale_chol: DMatrix<f64>,
    chi: Vec<ChiSquared<f64>>,
}

impl InverseWishart {
    pub fn new(lambda: &DMatrix<f64>, nu: f64) -> Result<Self> {
        let p = linalg::ensure_square("Lambda", lambda)?;
        let lambda = linalg::symmetrize_checked("Lambda", lambda, linalg::SYMMETRY_TOL)?;
        let chol = linalg::cholesky("Lambda", &lambda)?;
        if !(nu > p as f64 - 1.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom must exceed p - 1 = {}, got {nu}",
                p as f64 - 1.0
            )));
        }
        let inv = chol.inverse();
        let inv = (&inv + inv.transpose()) * 0.5;
        let scale_chol = linalg::cholesky("Lambda^-1", &inv)?.l();
        let chi = (0..p)
            .map(|i| ChiSquared::new(nu - i as f64).expect("nu - i > 0"))
            .collect();
        Ok(Self { nu, scale_chol, chi })
    }

    pub fn dim(&self) -> usize {
        self.scale_chol.nrows()
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// One draw by the Bartlett decomposition of the Wishart, then inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p {
            a[(i, i)] = self.chi[i].sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let la = &self.scale_chol * a;
        // Gamma = (LA (LA)^T)^{-1} = (LA)^{-T} (LA)^{-1}
        let la_inv = la
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Bartlett factor has a positive diagonal");
        let gamma = la_inv.transpose() * la_inv;
        (&gamma + gamma.transpose()) * 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSample {
    pub samples: Vec<DMatrix<f64>>,
    pub draws: usize,
    pub acceptance_rate: f64,
}

/// Rejection sampler for `IW(lambda, nu)` conditioned on `a^T Gamma a > sigma2`.
///
/// Stops after `n` acceptances; fails with [`Error::AcceptanceTooLow`] if
/// `max_draws` proposals are exhausted first.
pub fn constrained_iw_prior_sample(
    lambda: &DMatrix<f64>,
    nu: f64,
    a: &DVector<f64>,
    sigma2: f64,
    n: usize,
    seed: u64,
    max_draws: usize,
) -> Result<PriorSample> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let iw = InverseWishart::new(lambda, nu)?;
    if a.len() != iw.dim() {
        return Err(Error::dims("a vs Lambda", iw.dim(), a.len()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut draws = 0;
    while samples.len() < n && draws < max_draws {
        let gamma = iw.sample(&mut rng);
        draws += 1;
        if (a.transpose() * &gamma * a)[(0, 0)] > sigma2 {
            samples.push(gamma);
        }
    }
    if samples.len() < n {
        return Err(Error::AcceptanceTooLow {
            accepted: samples.len(),
            requested: n,
            draws,
        });
    }
    Ok(PriorSample {
        acceptance_rate: n as f64 / draws as f64,
        samples,
        draws,
    })
}
