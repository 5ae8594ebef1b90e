//! Monte Carlo and finite-difference estimates of the closed-form quantities.
//!
//! Gaussian draws use the ChaCha20 stream generator seeded with
//! `seed_from_u64`, standard normals from `rand_distr`'s ziggurat sampler,
//! and the lower Cholesky factor of the target covariance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher;
use crate::forward::Evaluator;
use crate::model::{linalg, InputModel, NoiseModel};

/// Number of batches used for batch-means standard errors.
const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult<T> {
    pub estimate: T,
    #[serde(with = "crate::precise")]
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// `n` draws from `N(mu, cov)`.
pub fn gaussian_draws(mu: &DVector<f64>, cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let d = linalg::ensure_square("covariance", cov)?;
    if mu.len() != d {
        return Err(Error::dims("mean vs covariance", d, mu.len()));
    }
    let l = linalg::cholesky("covariance", cov)?.l();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            mu + &l * z
        })
        .collect())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Standard error of a statistic computed on contiguous batches.
fn batch_std_error(n: usize, stat: impl Fn(std::ops::Range<usize>) -> f64) -> f64 {
    let size = n / BATCHES;
    if size < 2 {
        return f64::NAN;
    }
    let values: Vec<f64> = (0..BATCHES).map(|b| stat(b * size..(b + 1) * size)).collect();
    let (_, var) = mean_var(&values);
    (var / BATCHES as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub s_x: OracleResult<f64>,
    pub s_eps: OracleResult<f64>,
}

/// First-order Sobol indices of `X` and of the noise on `Y* = g(X) + eps`,
/// scalar output only. With additive independent noise
/// `Var[E(Y*|X)] = Var[g(X)]`.
pub fn mc_sobol_indices(
    g: &dyn Evaluator,
    input: &InputModel,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<SobolIndices> {
    if noise.q() != 1 || g.output_dim() != 1 {
        return Err(Error::dims("output dimension for Sobol indices", 1, g.output_dim().max(noise.q())));
    }
    if g.input_dim() != input.p() {
        return Err(Error::dims("forward input dimension", input.p(), g.input_dim()));
    }
    if n < 2 * BATCHES {
        return Err(Error::InvalidArgument(format!("need at least {} samples", 2 * BATCHES)));
    }
    let xs = gaussian_draws(input.mu(), input.gamma(), n, seed)?;
    let sd = noise.sigma()[(0, 0)].sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let eps: Vec<f64> = (0..n)
        .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let gx: Vec<f64> = g.eval_batch(&xs)?.into_iter().map(|y| y[0]).collect();
    let y: Vec<f64> = gx.iter().zip(&eps).map(|(a, b)| a + b).collect();
    let ratio = |num: &[f64], r: std::ops::Range<usize>| {
        let (_, vn) = mean_var(&num[r.clone()]);
        let (_, vy) = mean_var(&y[r]);
        vn / vy
    };
    let s_x = ratio(&gx, 0..n);
    let s_eps = ratio(&eps, 0..n);
    Ok(SobolIndices {
        s_x: OracleResult {
            estimate: s_x,
            std_error: batch_std_error(n, |r| ratio(&gx, r)),
            n_samples: n,
            seed,
        },
        s_eps: OracleResult {
            estimate: s_eps,
            std_error: batch_std_error(n, |r| ratio(&eps, r)),
            n_samples: n,
            seed,
        },
    })
}

fn log_det_spd(m: &DMatrix<f64>, name: &str) -> Result<f64> {
    let chol = linalg::cholesky(name, m)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Fisher information about `tau2` as
/// `-1/2 d^2/d(tau2)^2 ln det(tau2 HH^T + Sigma)`, by a central second
/// difference with step `step` (default `1e-4 * tau2`).
pub fn fd_fisher_tau2(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, step: Option<f64>) -> Result<f64> {
    let q = linalg::ensure_square("Sigma", sigma)?;
    if h.nrows() != q {
        return Err(Error::dims("rows of H vs Sigma", q, h.nrows()));
    }
    let step = step.unwrap_or(1e-4 * tau2);
    if !(step > 0.0) || !(tau2 - step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must satisfy 0 < h < tau2, got h = {step}, tau2 = {tau2}"
        )));
    }
    let hht = h * h.transpose();
    let f = |t: f64| log_det_spd(&(&hht * t + sigma), "tau2 HH^T + Sigma");
    let (lo, mid, hi) = (f(tau2 - step)?, f(tau2)?, f(tau2 + step)?);
    Ok(-0.5 * (hi - 2.0 * mid + lo) / (step * step))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOracle {
    /// Sample variance of the score, an estimate of the Fisher information.
    pub variance: OracleResult<f64>,
    /// Sample mean of the score, which should vanish.
    pub mean: OracleResult<f64>,
}

/// Fisher information about `tau2` as the variance of the analytic score
/// `1/2 (y^T C^{-1} HH^T C^{-1} y - Tr(C^{-1} HH^T))`, `C = tau2 HH^T + Sigma`,
/// over draws `y ~ N(0, C)`.
pub fn score_variance_fi(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, n: usize, seed: u64) -> Result<ScoreOracle> {
    fisher::check_tau2(tau2)?;
    let q = linalg::ensure_square("Sigma", sigma)?;
    if h.nrows() != q {
        return Err(Error::dims("rows of H vs Sigma", q, h.nrows()));
    }
    if n < 1000 {
        return Err(Error::InvalidArgument(format!("score oracle needs n >= 1000, got {n}")));
    }
    let hht = h * h.transpose();
    let c = &hht * tau2 + sigma;
    let c = (&c + c.transpose()) * 0.5;
    let chol = linalg::cholesky("tau2 HH^T + Sigma", &c)?;
    // B = H^T C^{-1}, so y^T C^{-1} HH^T C^{-1} y = |B y|^2.
    let b = chol.solve(h).transpose();
    let trace = (chol.solve(&hht)).trace();
    let ys = gaussian_draws(&DVector::zeros(q), &c, n, seed)?;
    let scores: Vec<f64> = ys.iter().map(|y| 0.5 * ((&b * y).norm_squared() - trace)).collect();
    let (mean, var) = mean_var(&scores);
    let nf = n as f64;
    let m4 = scores.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / nf;
    let var_se = ((m4 - var * var).max(0.0) / nf).sqrt();
    Ok(ScoreOracle {
        variance: OracleResult {
            estimate: var,
            std_error: var_se,
            n_samples: n,
            seed,
        },
        mean: OracleResult {
            estimate: mean,
            std_error: (var / nf).sqrt(),
            n_samples: n,
            seed,
        },
    })
}

/// `E[g(X) g(X)^T]` for `X ~ N(0, gamma)`. The standard error is the
/// largest entrywise standard error.
pub fn mc_second_moment(g: &dyn Evaluator, gamma: &DMatrix<f64>, n: usize, seed: u64) -> Result<OracleResult<DMatrix<f64>>> {
    let p = linalg::ensure_square("Gamma", gamma)?;
    if g.input_dim() != p {
        return Err(Error::dims("forward input dimension", p, g.input_dim()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let xs = gaussian_draws(&DVector::zeros(p), gamma, n, seed)?;
    let ys = g.eval_batch(&xs)?;
    let q = g.output_dim();
    let nf = n as f64;
    let mut sum = DMatrix::zeros(q, q);
    let mut sum_sq = DMatrix::zeros(q, q);
    for y in &ys {
        let outer = y * y.transpose();
        sum_sq += outer.component_mul(&outer);
        sum += outer;
    }
    let mean = &sum / nf;
    let var = (sum_sq / nf - mean.component_mul(&mean)) * (nf / (nf - 1.0));
    let std_error = var.iter().fold(0.0_f64, |m, v| m.max(v.max(0.0))).sqrt() / nf.sqrt();
    Ok(OracleResult {
        estimate: (&mean + mean.transpose()) * 0.5,
        std_error,
        n_samples: n,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBound {
    #[serde(with = "crate::precise")]
    pub lower: f64,
    #[serde(with = "crate::precise")]
    pub value: f64,
    #[serde(with = "crate::precise")]
    pub upper: f64,
    pub holds: bool,
}

/// `min d Tr(A) <= Tr(diag(d) A) <= max d Tr(A)` for positive `d`, SPD `A`.
pub fn trace_bound_check(d: &DVector<f64>, a: &DMatrix<f64>) -> Result<TraceBound> {
    let p = linalg::ensure_square("A", a)?;
    if d.len() != p {
        return Err(Error::dims("diagonal vs A", p, d.len()));
    }
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("diagonal entries must be positive".into()));
    }
    let value: f64 = (0..p).map(|i| d[i] * a[(i, i)]).sum();
    let lower: f64 = (0..p).map(|i| d.min() * a[(i, i)]).sum();
    let upper: f64 = (0..p).map(|i| d.max() * a[(i, i)]).sum();
    Ok(TraceBound {
        lower,
        value,
        upper,
        holds: lower <= value && value <= upper,
    })
}
