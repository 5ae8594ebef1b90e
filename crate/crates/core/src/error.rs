use thiserror::Error;

/// Every failure the diagnostics can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("matrix {matrix} is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { matrix: String, asymmetry: f64 },
    #[error("matrix {matrix} is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { matrix: String, min_eigenvalue: f64 },
    #[error("Fisher fraction constant must satisfy c > 1, got {0}")]
    InvalidC(f64),
    #[error("matrix is rank deficient (smallest singular value {smallest:.6e}, largest {largest:.6e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("HH^T and Sigma do not commute (relative commutator norm {relative_norm:.3e})")]
    NotCommuting { relative_norm: f64 },
    #[error("input covariance is not isotropic (tau^2 I) but the operation requires it")]
    NotIsotropic,
    #[error("input mean must be zero for the KL surrogate")]
    MuNotZero,
    #[error("estimated second moment of g(X) is not positive definite")]
    M2NotPD,
    #[error("forward model evaluation failed: {0}")]
    EvaluatorFailure(String),
    #[error("non-finite gradient entry at index {index}")]
    NonFiniteGradient { index: usize },
    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("rejection sampler accepted {accepted} of {requested} requested samples within {draws} draws")]
    AcceptanceTooLow {
        accepted: usize,
        requested: usize,
        draws: usize,
    },
    #[error("every evaluated linearization point has a rank-deficient Jacobian")]
    AllPointsDegenerate,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid spec file: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }
}
