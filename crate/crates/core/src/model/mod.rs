//! Problem description: Gaussian input law, Gaussian noise, forward model.

pub mod linalg;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forward::{Builtin, Evaluator};

pub use linalg::{
    condition_number, eig_sym, identifiability_check, inv_sqrt_sym, EigenDecomposition, Identifiability,
};

/// Default Monte Carlo seed for every oracle.
pub const DEFAULT_SEED: u64 = 20240101;
/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// A covariance as written by the user: either a full matrix or `s * I`.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    Isotropic { dim: usize, scale: f64 },
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Full(m) => m.nrows(),
            Covariance::Isotropic { dim, .. } => *dim,
        }
    }
}

/// Validated covariance. When `isotropic` is set the matrix is exactly `s * I`.
fn validated_covariance(name: &str, cov: Covariance) -> Result<(DMatrix<f64>, Option<f64>)> {
    match cov {
        Covariance::Full(m) => {
            let m = linalg::symmetrize_checked(name, &m, linalg::SYMMETRY_TOL)?;
            linalg::ensure_spd(name, &m)?;
            Ok((m, None))
        }
        Covariance::Isotropic { dim, scale } => {
            if dim == 0 {
                return Err(Error::InvalidArgument(format!("{name} has zero dimension")));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::NotPositiveDefinite {
                    matrix: name.to_string(),
                    min_eigenvalue: scale,
                });
            }
            Ok((DMatrix::identity(dim, dim) * scale, Some(scale)))
        }
    }
}

/// Gaussian law `X ~ N(mu, Gamma)` of the unknown input.
#[derive(Debug, Clone, PartialEq)]
pub struct InputModel {
    mu: DVector<f64>,
    gamma: DMatrix<f64>,
    isotropic_tau2: Option<f64>,
}

impl InputModel {
    pub fn new(mu: DVector<f64>, gamma: DMatrix<f64>) -> Result<Self> {
        Self::from_covariance(mu, Covariance::Full(gamma))
    }

    /// `X ~ N(mu, tau2 I)`.
    pub fn isotropic(mu: DVector<f64>, tau2: f64) -> Result<Self> {
        let dim = mu.len();
        Self::from_covariance(mu, Covariance::Isotropic { dim, scale: tau2 })
    }

    pub fn from_covariance(mu: DVector<f64>, gamma: Covariance) -> Result<Self> {
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("mu has non-finite entries".into()));
        }
        if gamma.dim() != mu.len() {
            return Err(Error::dims("gamma vs mu", mu.len(), gamma.dim()));
        }
        let (gamma, isotropic_tau2) = validated_covariance("Gamma", gamma)?;
        Ok(Self {
            mu,
            gamma,
            isotropic_tau2,
        })
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    pub fn isotropic_tau2(&self) -> Option<f64> {
        self.isotropic_tau2
    }

    /// `tau^2` of an isotropic input, `NotIsotropic` otherwise.
    pub fn tau2(&self) -> Result<f64> {
        self.isotropic_tau2.ok_or(Error::NotIsotropic)
    }

    pub fn covariance(&self) -> Covariance {
        match self.isotropic_tau2 {
            Some(scale) => Covariance::Isotropic { dim: self.p(), scale },
            None => Covariance::Full(self.gamma.clone()),
        }
    }
}

/// Gaussian noise `eps ~ N(0, Sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma: DMatrix<f64>,
    isotropic_sigma2: Option<f64>,
}

impl NoiseModel {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        Self::from_covariance(Covariance::Full(sigma))
    }

    pub fn isotropic(q: usize, sigma2: f64) -> Result<Self> {
        Self::from_covariance(Covariance::Isotropic { dim: q, scale: sigma2 })
    }

    pub fn from_covariance(sigma: Covariance) -> Result<Self> {
        let (sigma, isotropic_sigma2) = validated_covariance("Sigma", sigma)?;
        Ok(Self {
            sigma,
            isotropic_sigma2,
        })
    }

    pub fn q(&self) -> usize {
        self.sigma.nrows()
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn isotropic_sigma2(&self) -> Option<f64> {
        self.isotropic_sigma2
    }

    pub fn covariance(&self) -> Covariance {
        match self.isotropic_sigma2 {
            Some(scale) => Covariance::Isotropic { dim: self.q(), scale },
            None => Covariance::Full(self.sigma.clone()),
        }
    }
}

/// The map from input to noiseless output.
#[derive(Clone)]
pub enum ForwardModel {
    Linear(DMatrix<f64>),
    BlackBox(Arc<dyn Evaluator>),
}

impl std::fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForwardModel::Linear(h) => f.debug_tuple("Linear").field(h).finish(),
            ForwardModel::BlackBox(g) => f.debug_tuple("BlackBox").field(&g.describe()).finish(),
        }
    }
}

impl PartialEq for ForwardModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ForwardModel::Linear(a), ForwardModel::Linear(b)) => a == b,
            (ForwardModel::BlackBox(a), ForwardModel::BlackBox(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl ForwardModel {
    pub fn black_box(g: impl Evaluator + 'static) -> Self {
        ForwardModel::BlackBox(Arc::new(g))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ForwardModel::Linear(h) => h.ncols(),
            ForwardModel::BlackBox(g) => g.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ForwardModel::Linear(h) => h.nrows(),
            ForwardModel::BlackBox(g) => g.output_dim(),
        }
    }

    pub fn linear_map(&self) -> Option<&DMatrix<f64>> {
        match self {
            ForwardModel::Linear(h) => Some(h),
            ForwardModel::BlackBox(_) => None,
        }
    }

    /// The model as an evaluator; a linear map becomes the `linear` builtin.
    pub fn evaluator(&self) -> Arc<dyn Evaluator> {
        match self {
            ForwardModel::Linear(h) => Arc::new(Builtin::Linear { h: h.clone() }),
            ForwardModel::BlackBox(g) => Arc::clone(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSettings {
    pub seed: u64,
    pub n: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            n: DEFAULT_SAMPLES,
        }
    }
}

/// Unvalidated problem description, as parsed from a spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub mu: DVector<f64>,
    pub gamma: Covariance,
    pub sigma: Covariance,
    pub forward: ForwardModel,
    /// Fisher fraction constant, `c > 1`.
    pub c: f64,
    pub n_obs: Option<usize>,
    pub oracle: OracleSettings,
}

/// A [`ProblemSpec`] whose invariants have all been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSpec {
    input: InputModel,
    noise: NoiseModel,
    forward: ForwardModel,
    c: f64,
    n_obs: Option<usize>,
    oracle: OracleSettings,
}

pub(crate) fn check_c(c: f64) -> Result<()> {
    if c > 1.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidC(c))
    }
}

pub fn validate_spec(raw: ProblemSpec) -> Result<ValidatedSpec> {
    check_c(raw.c)?;
    let p = raw.mu.len();
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let input = InputModel::from_covariance(raw.mu, raw.gamma)?;
    let noise = NoiseModel::from_covariance(raw.sigma)?;
    let q = noise.q();
    if raw.forward.input_dim() != p {
        return Err(Error::dims("forward input dimension", p, raw.forward.input_dim()));
    }
    if raw.forward.output_dim() != q {
        return Err(Error::dims("forward output dimension", q, raw.forward.output_dim()));
    }
    if let ForwardModel::Linear(h) = &raw.forward {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("H has non-finite entries".into()));
        }
        if q <= p {
            linalg::ensure_full_row_rank(h)?;
        }
    }
    if raw.n_obs == Some(0) {
        return Err(Error::InvalidArgument("n_obs must be positive".into()));
    }
    if raw.oracle.n == 0 {
        return Err(Error::InvalidArgument("oracle sample count must be positive".into()));
    }
    Ok(ValidatedSpec {
        input,
        noise,
        forward: raw.forward,
        c: raw.c,
        n_obs: raw.n_obs,
        oracle: raw.oracle,
    })
}

impl ValidatedSpec {
    pub fn input(&self) -> &InputModel {
        &self.input
    }
    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
    pub fn forward(&self) -> &ForwardModel {
        &self.forward
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn n_obs(&self) -> Option<usize> {
        self.n_obs
    }
    pub fn oracle(&self) -> OracleSettings {
        self.oracle
    }
    pub fn p(&self) -> usize {
        self.input.p()
    }
    pub fn q(&self) -> usize {
        self.noise.q()
    }

    pub fn to_problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            mu: self.input.mu.clone(),
            gamma: self.input.covariance(),
            sigma: self.noise.covariance(),
            forward: self.forward.clone(),
            c: self.c,
            n_obs: self.n_obs,
            oracle: self.oracle,
        }
    }

    /// Same problem with a different Fisher constant.
    pub fn with_c(&self, c: f64) -> Result<Self> {
        check_c(c)?;
        Ok(Self { c, ..self.clone() })
    }
}
