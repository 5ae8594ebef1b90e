//! Well-posedness predicates.
//!
//! Each predicate compares a left-hand side against a right-hand side and
//! returns a [`ConditionVerdict`] carrying both numbers and the margin.
//! The Fisher-sense family compares the information about `tau2` in the
//! noisy observable with a fraction `1/c` of the information in the signal.

mod prior;
mod report;

pub use report::{overall_verdict, LinearizationInfo};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher;
use crate::forward::Evaluator;
use crate::linearize::jacobian_fd;
use crate::model::{check_c, linalg};

pub use prior::{constrained_iw_prior_sample, InverseWishart, PriorSample};
pub use report::{full_report, LinearizeRequest, Overall, ReportOptions, WellPosednessReport};

/// Relative tolerance of the commutation guard on `HH^T` and `Sigma`.
pub const COMMUTE_TOL: f64 = 1e-8;
/// Relative tolerance for "all eigenvalues of `HH^T` equal".
pub const EQUAL_SPECTRUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    /// Equivalent to the well-posedness notion it tests.
    Exact,
    /// Holding implies well-posedness.
    Sufficient,
    /// Well-posedness implies it holds.
    Necessary,
}

/// A named scalar attached to a verdict (Sobol indices, eigenvalue extremes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detail {
    pub name: String,
    #[serde(with = "crate::precise")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub name: String,
    pub kind: ConditionKind,
    /// The inequality being tested, in plain text.
    pub formula: String,
    #[serde(with = "crate::precise")]
    pub lhs: f64,
    #[serde(with = "crate::precise")]
    pub rhs: f64,
    #[serde(with = "crate::precise")]
    pub margin: f64,
    /// `>` when true, `>=` otherwise.
    pub strict: bool,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<Detail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConditionVerdict {
    fn build(name: &str, kind: ConditionKind, formula: &str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let margin = lhs - rhs;
        let holds = if strict { margin > 0.0 } else { margin >= 0.0 };
        Self {
            name: name.to_string(),
            kind,
            formula: formula.to_string(),
            lhs,
            rhs,
            margin,
            strict,
            holds,
            details: Vec::new(),
            note: None,
        }
    }

    pub(crate) fn strict(name: &str, kind: ConditionKind, formula: &str, lhs: f64, rhs: f64) -> Self {
        Self::build(name, kind, formula, lhs, rhs, true)
    }

    fn with_detail(mut self, name: &str, value: f64) -> Self {
        self.details.push(Detail {
            name: name.to_string(),
            value,
        });
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn detail(&self, name: &str) -> Option<f64> {
        self.details.iter().find(|d| d.name == name).map(|d| d.value)
    }
}

/// Default Fisher fraction constant. A signal-to-noise ratio above one in
/// the necessary condition forces `sqrt(c) > 2`.
pub fn default_c() -> f64 {
    4.0
}

fn check_scalar_inputs(a: &DVector<f64>, gamma: &DMatrix<f64>, sigma2: f64) -> Result<()> {
    let p = linalg::ensure_square("Gamma", gamma)?;
    if a.len() != p {
        return Err(Error::dims("a vs Gamma", p, a.len()));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma2 must be finite and >= 0, got {sigma2}")));
    }
    Ok(())
}

fn signal_variance(a: &DVector<f64>, gamma: &DMatrix<f64>) -> f64 {
    (a.transpose() * gamma * a)[(0, 0)].max(0.0)
}

/// Scalar-output model `Y* = a^T X + eps`: the Sobol index of `X` exceeds
/// that of the noise iff `a^T Gamma a > sigma^2`.
pub fn sobol_wellposed_scalar(a: &DVector<f64>, gamma: &DMatrix<f64>, sigma2: f64) -> Result<ConditionVerdict> {
    check_scalar_inputs(a, gamma, sigma2)?;
    let v = signal_variance(a, gamma);
    Ok(sobol_verdict("sobol_scalar", "a^T Gamma a > sigma^2", v, sigma2))
}

fn sobol_verdict(name: &str, formula: &str, v: f64, sigma2: f64) -> ConditionVerdict {
    let total = v + sigma2;
    let (s_x, s_eps) = if total > 0.0 { (v / total, sigma2 / total) } else { (0.0, 0.0) };
    ConditionVerdict::strict(name, ConditionKind::Exact, formula, v, sigma2)
        .with_detail("S_X", s_x)
        .with_detail("S_eps", s_eps)
}

/// Entropic version of [`sobol_wellposed_scalar`]; the holds-bit is identical.
pub fn entropy_wellposed_scalar(a: &DVector<f64>, gamma: &DMatrix<f64>, sigma2: f64) -> Result<ConditionVerdict> {
    check_scalar_inputs(a, gamma, sigma2)?;
    Ok(entropy_verdict("entropy_scalar", signal_variance(a, gamma), sigma2))
}

fn entropy_of_variance(v: f64) -> f64 {
    if v > 0.0 {
        fisher::entropy_gaussian_scalar(v).expect("positive variance")
    } else {
        f64::NEG_INFINITY
    }
}

fn entropy_verdict(name: &str, v: f64, sigma2: f64) -> ConditionVerdict {
    let lhs = entropy_of_variance(v);
    let rhs = entropy_of_variance(sigma2);
    // 1/2 ln(v / sigma2) written so its sign is exactly the sign of v - sigma2.
    let margin = if v == sigma2 {
        0.0
    } else if sigma2 == 0.0 {
        f64::INFINITY
    } else {
        0.5 * ((v - sigma2) / sigma2).ln_1p()
    };
    ConditionVerdict {
        margin,
        holds: margin > 0.0,
        ..ConditionVerdict::strict(name, ConditionKind::Exact, "E(a^T X) > E(eps)", lhs, rhs)
    }
}

/// Sobol condition for a differentiable scalar `g` linearized at `mu`:
/// `Dg^T Gamma Dg > sigma^2`, gradient by central differences.
pub fn sobol_wellposed_linearized(
    g: &dyn Evaluator,
    mu: &DVector<f64>,
    gamma: &DMatrix<f64>,
    sigma2: f64,
    fd_step: f64,
) -> Result<ConditionVerdict> {
    if g.output_dim() != 1 {
        return Err(Error::dims("output dimension of g", 1, g.output_dim()));
    }
    let jac = jacobian_fd(g, mu, fd_step).map_err(|e| match e {
        Error::NonFiniteEntry { col, .. } => Error::NonFiniteGradient { index: col },
        other => other,
    })?;
    let grad = jac.row(0).transpose();
    check_scalar_inputs(&grad, gamma, sigma2)?;
    let v = signal_variance(&grad, gamma);
    let mut verdict = sobol_verdict("sobol_linearized", "Dg(x0)^T Gamma Dg(x0) > sigma^2", v, sigma2);
    if v == 0.0 {
        verdict = verdict.with_note("degenerate linearization: zero gradient at mu");
    }
    Ok(verdict)
}

/// Entropic counterpart of [`sobol_wellposed_linearized`] for a gradient
/// already computed.
pub(crate) fn entropy_for_gradient(grad: &DVector<f64>, gamma: &DMatrix<f64>, sigma2: f64) -> ConditionVerdict {
    let mut v = entropy_verdict("entropy_linearized", signal_variance(grad, gamma), sigma2);
    v.formula = "E(Dg(x0)^T X) > E(eps)".into();
    v
}

fn check_fisher_inputs(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, c: f64) -> Result<()> {
    check_c(c)?;
    fisher::check_tau2(tau2)?;
    let q = linalg::ensure_square("Sigma", sigma)?;
    if h.nrows() != q {
        return Err(Error::dims("rows of H vs Sigma", q, h.nrows()));
    }
    linalg::ensure_full_row_rank(h)
}

/// Spectrum of `Psi` for a full-rank `H`, descending.
fn psi_spectrum(h: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let eigs = fisher::psi_eigenvalues(h, sigma)?;
    let min = eigs[eigs.len() - 1];
    if !(min > 0.0) {
        let sv = linalg::singular_values(h);
        return Err(Error::RankDeficient {
            smallest: sv[sv.len() - 1],
            largest: sv[0],
        });
    }
    Ok(eigs)
}

fn ratio_term(t: f64) -> f64 {
    let r = t / (1.0 + t);
    r * r
}

/// Exact Fisher condition from the spectrum of `Psi`:
/// `sum_i 1/(1 + (tau2 lambda_i)^{-1})^2 > q/c`.
pub fn fisher_condition_exact(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, c: f64) -> Result<ConditionVerdict> {
    check_fisher_inputs(h, sigma, tau2, c)?;
    let eigs = psi_spectrum(h, sigma)?;
    Ok(exact_from_spectrum(&eigs, tau2, c))
}

pub(crate) fn exact_from_spectrum(psi_eigs: &DVector<f64>, tau2: f64, c: f64) -> ConditionVerdict {
    let q = psi_eigs.len() as f64;
    let lhs: f64 = psi_eigs.iter().map(|&l| ratio_term(tau2 * l)).sum();
    ConditionVerdict::strict(
        "fisher_exact",
        ConditionKind::Exact,
        "sum_i 1/(1 + 1/(tau2 lambda_i(Psi)))^2 > q/c",
        lhs,
        q / c,
    )
    .with_detail("min_lambda_psi", psi_eigs[psi_eigs.len() - 1])
    .with_detail("max_lambda_psi", psi_eigs[0])
}

/// Eigenvalue pairs `(lambda(HH^T), lambda(Sigma))` from a shared eigenbasis.
///
/// The basis comes from `HH^T`; inside each cluster of equal `HH^T`
/// eigenvalues `Sigma` is diagonalized, so ties are ordered by `Sigma`.
fn codiagonal_pairs(hht: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let eig = linalg::eig_sym_unchecked(hht.clone());
    let q = eig.values.len();
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut pairs = Vec::with_capacity(q);
    let mut start = 0;
    while start < q {
        let mut end = start + 1;
        while end < q && (eig.values[start] - eig.values[end]).abs() <= EQUAL_SPECTRUM_TOL * scale {
            end += 1;
        }
        let basis = eig.vectors.columns(start, end - start).into_owned();
        let block = basis.transpose() * sigma * &basis;
        let sigma_vals = linalg::sym_eigenvalues(&block);
        for (k, s) in sigma_vals.iter().enumerate() {
            pairs.push((eig.values[start + k], *s));
        }
        start = end;
    }
    pairs
}

/// Fisher condition when `HH^T` and `Sigma` commute:
/// `sum_i (tau2 l_i(HH^T) / (tau2 l_i(HH^T) + l_i(Sigma)))^2 > q/c`.
pub fn fisher_condition_commuting(
    h: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tau2: f64,
    c: f64,
) -> Result<ConditionVerdict> {
    check_fisher_inputs(h, sigma, tau2, c)?;
    let hht = h * h.transpose();
    let commutator = &hht * sigma - sigma * &hht;
    let denom = linalg::frobenius(&hht) * linalg::frobenius(sigma);
    let relative_norm = linalg::frobenius(&commutator) / denom;
    if relative_norm > COMMUTE_TOL {
        return Err(Error::NotCommuting { relative_norm });
    }
    let pairs = codiagonal_pairs(&hht, sigma);
    let lhs: f64 = pairs
        .iter()
        .map(|&(lh, ls)| {
            let r = tau2 * lh / (tau2 * lh + ls);
            r * r
        })
        .sum();
    Ok(ConditionVerdict::strict(
        "fisher_commuting",
        ConditionKind::Exact,
        "sum_i (tau2 l_i(HH^T) / (tau2 l_i(HH^T) + l_i(Sigma)))^2 > q/c",
        lhs,
        pairs.len() as f64 / c,
    )
    .with_detail("commutator_relative_norm", relative_norm))
}

/// Verdicts for isotropic noise `Sigma = sigma2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicVerdicts {
    pub sum: ConditionVerdict,
    /// Present when every eigenvalue of `HH^T` is the same `lambda`:
    /// `(sqrt(c) - 1) tau2 > sigma2 / lambda`.
    pub equal_spectrum: Option<ConditionVerdict>,
}

impl IsotropicVerdicts {
    pub fn into_vec(self) -> Vec<ConditionVerdict> {
        std::iter::once(self.sum).chain(self.equal_spectrum).collect()
    }
}

pub fn fisher_condition_isotropic(h: &DMatrix<f64>, sigma2: f64, tau2: f64, c: f64) -> Result<IsotropicVerdicts> {
    if !(sigma2 > 0.0) {
        return Err(Error::NotPositiveDefinite {
            matrix: "Sigma".into(),
            min_eigenvalue: sigma2,
        });
    }
    let q = h.nrows();
    check_fisher_inputs(h, &(DMatrix::identity(q, q) * sigma2), tau2, c)?;
    let lh = linalg::sym_eigenvalues(&(h * h.transpose()));
    let lhs: f64 = lh
        .iter()
        .map(|&l| {
            let r = tau2 * l / (tau2 * l + sigma2);
            r * r
        })
        .sum();
    let sum = ConditionVerdict::strict(
        "fisher_isotropic",
        ConditionKind::Exact,
        "sum_i (tau2 l_i(HH^T) / (tau2 l_i(HH^T) + sigma^2))^2 > q/c",
        lhs,
        q as f64 / c,
    );
    let (max, min) = (lh[0], lh[q - 1]);
    let equal_spectrum = if max - min <= EQUAL_SPECTRUM_TOL * max {
        let lambda = lh.mean();
        let mut v = ConditionVerdict::strict(
            "fisher_isotropic_equal_spectrum",
            ConditionKind::Exact,
            "(sqrt(c) - 1) tau2 > sigma^2 / lambda",
            (c.sqrt() - 1.0) * tau2,
            sigma2 / lambda,
        )
        .with_detail("lambda", lambda);
        if v.holds != sum.holds {
            v = v.with_note("disagrees with the spectral sum at rounding level; the sum is authoritative");
        }
        Some(v)
    } else {
        None
    };
    Ok(IsotropicVerdicts { sum, equal_spectrum })
}

/// `(sqrt(c) - 1) tau2 > 1 / min lambda(Psi)`; implies the exact condition.
pub fn sufficient_condition(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, c: f64) -> Result<ConditionVerdict> {
    check_fisher_inputs(h, sigma, tau2, c)?;
    let eigs = psi_spectrum(h, sigma)?;
    Ok(sufficient_from_spectrum(&eigs, tau2, c))
}

pub(crate) fn sufficient_from_spectrum(psi_eigs: &DVector<f64>, tau2: f64, c: f64) -> ConditionVerdict {
    let min = psi_eigs[psi_eigs.len() - 1];
    ConditionVerdict::strict(
        "fisher_sufficient",
        ConditionKind::Sufficient,
        "(sqrt(c) - 1) tau2 > 1 / min lambda(Psi)",
        (c.sqrt() - 1.0) * tau2,
        1.0 / min,
    )
    .with_detail("min_lambda_psi", min)
}

/// `(sqrt(c) - 1) tau2 > 1 / max lambda(Psi)`; implied by the exact condition.
pub fn necessary_condition(h: &DMatrix<f64>, sigma: &DMatrix<f64>, tau2: f64, c: f64) -> Result<ConditionVerdict> {
    check_fisher_inputs(h, sigma, tau2, c)?;
    let eigs = psi_spectrum(h, sigma)?;
    Ok(necessary_from_spectrum(&eigs, tau2, c))
}

pub(crate) fn necessary_from_spectrum(psi_eigs: &DVector<f64>, tau2: f64, c: f64) -> ConditionVerdict {
    let max = psi_eigs[0];
    ConditionVerdict::strict(
        "fisher_necessary",
        ConditionKind::Necessary,
        "(sqrt(c) - 1) tau2 > 1 / max lambda(Psi)",
        (c.sqrt() - 1.0) * tau2,
        1.0 / max,
    )
    .with_detail("max_lambda_psi", max)
}

/// Sufficient condition through the condition number of `HH^T`:
/// `(sqrt(c) - max l(HH^T)/min l(HH^T)) tau2 >= max l(Sigma) / min l(HH^T)`.
///
/// Non-strict as stated. When the bracket is not positive the condition can
/// never hold and the verdict is marked vacuous.
pub fn sufficient_condition_condnum(
    h: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tau2: f64,
    c: f64,
) -> Result<ConditionVerdict> {
    check_fisher_inputs(h, sigma, tau2, c)?;
    let lh = linalg::sym_eigenvalues(&(h * h.transpose()));
    let ls = linalg::sym_eigenvalues(sigma);
    let (hmax, hmin) = (lh[0], lh[lh.len() - 1]);
    let cond = hmax / hmin;
    let coefficient = c.sqrt() - cond;
    let mut v = ConditionVerdict::build(
        "fisher_sufficient_condnum",
        ConditionKind::Sufficient,
        "(sqrt(c) - max l(HH^T)/min l(HH^T)) tau2 >= max l(Sigma) / min l(HH^T)",
        coefficient * tau2,
        ls[0] / hmin,
        false,
    )
    .with_detail("cond_hht", cond)
    .with_detail("coefficient", coefficient);
    if !(coefficient > 0.0) {
        v.holds = false;
        v = v.with_note("vacuous: sqrt(c) does not exceed the condition number of HH^T");
    }
    Ok(v)
}

/// Sufficient condition for a general input covariance:
/// `(sqrt(c) - 1) min lambda(Gamma) > 1 / min lambda(Psi)`.
pub fn general_gamma_condition(
    h: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    c: f64,
) -> Result<ConditionVerdict> {
    let p = linalg::ensure_square("Gamma", gamma)?;
    if h.ncols() != p {
        return Err(Error::dims("columns of H vs Gamma", p, h.ncols()));
    }
    let gamma_eig = linalg::ensure_spd("Gamma", gamma)?;
    let min_gamma = gamma_eig.min();
    check_fisher_inputs(h, sigma, min_gamma, c)?;
    let eigs = psi_spectrum(h, sigma)?;
    let min_psi = eigs[eigs.len() - 1];
    Ok(ConditionVerdict::strict(
        "fisher_general_gamma",
        ConditionKind::Sufficient,
        "(sqrt(c) - 1) min lambda(Gamma) > 1 / min lambda(Psi)",
        (c.sqrt() - 1.0) * min_gamma,
        1.0 / min_psi,
    )
    .with_detail("min_lambda_gamma", min_gamma)
    .with_detail("min_lambda_psi", min_psi))
}
