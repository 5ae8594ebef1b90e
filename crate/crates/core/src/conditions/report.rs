//! Aggregation of every applicable condition into one report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::*;
use crate::linearize::{self, DEFAULT_FD_STEP};
use crate::model::{linalg::Identifiability, ForwardModel, ValidatedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    WellPosed,
    IllPosed,
    Inconclusive,
}

impl Overall {
    pub fn as_str(self) -> &'static str {
        match self {
            Overall::WellPosed => "well_posed",
            Overall::IllPosed => "ill_posed",
            Overall::Inconclusive => "inconclusive",
        }
    }
}

/// How a black-box forward model is linearized before the Fisher family runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LinearizeRequest {
    #[default]
    None,
    /// Taylor expansion at the input mean.
    Mean,
    /// Taylor expansion at a given point.
    Point(DVector<f64>),
    /// Taylor expansion at the information-maximizing point, searched from the mean.
    Optimize { budget: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub linearize: LinearizeRequest,
    pub fd_step: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            linearize: LinearizeRequest::None,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

/// Where the Fisher family took its `H` from when the model is not linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationInfo {
    pub strategy: linearize::Strategy,
    #[serde(with = "crate::precise::vec")]
    pub x0: Vec<f64>,
    #[serde(with = "crate::precise::rows")]
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPosednessReport {
    pub overall: Overall,
    pub verdicts: Vec<ConditionVerdict>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identifiability: Option<Identifiability>,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub condition_number: Option<f64>,
    #[serde(default, with = "crate::precise::vec", skip_serializing_if = "Vec::is_empty")]
    pub psi_spectrum: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearization: Option<LinearizationInfo>,
}

impl WellPosednessReport {
    pub fn verdict(&self, name: &str) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Exact verdicts decide when present. Otherwise a failing necessary
/// condition proves ill-posedness and a holding sufficient one proves
/// well-posedness; anything else is inconclusive.
pub fn overall_verdict(verdicts: &[ConditionVerdict]) -> Overall {
    let exact: Vec<_> = verdicts.iter().filter(|v| v.kind == ConditionKind::Exact).collect();
    if !exact.is_empty() {
        return if exact.iter().all(|v| v.holds) {
            Overall::WellPosed
        } else {
            Overall::IllPosed
        };
    }
    let fails = |k| verdicts.iter().any(|v| v.kind == k && !v.holds);
    let holds = |k| verdicts.iter().any(|v| v.kind == k && v.holds);
    if fails(ConditionKind::Necessary) {
        Overall::IllPosed
    } else if holds(ConditionKind::Sufficient) {
        Overall::WellPosed
    } else {
        Overall::Inconclusive
    }
}

/// Runs identifiability, conditioning and every condition that applies to
/// the spec, and aggregates them.
///
/// A black-box forward model only gets the Fisher family after a Taylor
/// linearization requested through `options`; with none, the scalar
/// Sobol/entropy checks are skipped too and the report is inconclusive.
pub fn full_report(spec: &ValidatedSpec, options: &ReportOptions) -> Result<WellPosednessReport> {
    let (p, q, c) = (spec.p(), spec.q(), spec.c());
    let gamma = spec.input().gamma();
    let sigma = spec.noise().sigma();
    let mut verdicts = Vec::new();
    let mut notes = Vec::new();
    let mut linearization = None;

    let h: Option<DMatrix<f64>> = match spec.forward() {
        ForwardModel::Linear(h) => Some(h.clone()),
        ForwardModel::BlackBox(g) => {
            let x0 = match &options.linearize {
                LinearizeRequest::None => None,
                LinearizeRequest::Mean => Some(spec.input().mu().clone()),
                LinearizeRequest::Point(x) => Some(x.clone()),
                LinearizeRequest::Optimize { budget } => {
                    let tau2 = spec.input().tau2().unwrap_or_else(|_| linalg::sym_eigenvalues(gamma).min());
                    let mu = spec.input().mu();
                    match linearize::optimize_linearization_point(g.as_ref(), sigma, tau2, mu, mu, *budget, options.fd_step) {
                        Ok(opt) => {
                            notes.push(format!(
                                "linearization point chosen by maximizing the surrogate Fisher information trace ({})",
                                opt.objective
                            ));
                            Some(opt.x0_star)
                        }
                        Err(Error::AllPointsDegenerate) => {
                            notes.push("every linearization point tried has a rank-deficient Jacobian".into());
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            match x0 {
                None => {
                    if options.linearize == LinearizeRequest::None {
                        notes.push(format!(
                            "nonlinear forward model {}: no linearization requested, closed-form conditions unavailable",
                            g.describe()
                        ));
                    }
                    None
                }
                Some(x0) => {
                    let lin = linearize::taylor_linearize(g.as_ref(), &x0, options.fd_step)?;
                    linearization = Some(LinearizationInfo {
                        strategy: lin.strategy,
                        x0: x0.iter().copied().collect(),
                        h: crate::precise::rows::of(&lin.h),
                    });
                    if q == 1 {
                        let grad = lin.h.row(0).transpose();
                        let s2 = sigma[(0, 0)];
                        let mut sv = sobol_verdict(
                            "sobol_linearized",
                            "Dg(x0)^T Gamma Dg(x0) > sigma^2",
                            signal_variance(&grad, gamma),
                            s2,
                        );
                        if sv.lhs == 0.0 {
                            sv = sv.with_note("degenerate linearization: zero gradient");
                        }
                        verdicts.push(sv);
                        verdicts.push(entropy_for_gradient(&grad, gamma, s2));
                    }
                    Some(lin.h)
                }
            }
        }
    };

    let Some(h) = h else {
        return Ok(WellPosednessReport {
            overall: Overall::Inconclusive,
            verdicts,
            notes,
            identifiability: None,
            condition_number: None,
            psi_spectrum: Vec::new(),
            linearization,
        });
    };

    let identifiability = spec.n_obs().map(|n| linalg::identifiability_check(&h, n));
    if let Some(id) = identifiability {
        if !id.injective {
            notes.push(format!("H is not injective: rank {} < p = {p}", linalg::rank(&h)));
        }
        if !id.count_ok {
            notes.push("too few observations: p > n_obs * q".into());
        }
    }
    let condition_number = linalg::condition_number(&h).ok();

    if q == 1 && spec.forward().linear_map().is_some() {
        let a = h.row(0).transpose();
        let s2 = sigma[(0, 0)];
        verdicts.push(sobol_wellposed_scalar(&a, gamma, s2)?);
        verdicts.push(entropy_wellposed_scalar(&a, gamma, s2)?);
    } else if q > 1 {
        notes.push("Sobol and entropy conditions are defined for scalar output only; skipped".into());
    }

    let full_rank = q <= p && linalg::ensure_full_row_rank(&h).is_ok();
    if !full_rank {
        let sv = linalg::singular_values(&h);
        let err = Error::RankDeficient {
            smallest: sv[sv.len() - 1],
            largest: sv[0],
        };
        notes.push(format!("Fisher conditions need H of full row rank q: {err}"));
        let overall = if spec.forward().linear_map().is_some() {
            overall_verdict(&verdicts)
        } else {
            Overall::Inconclusive
        };
        return Ok(WellPosednessReport {
            overall,
            verdicts,
            notes,
            identifiability,
            condition_number,
            psi_spectrum: Vec::new(),
            linearization,
        });
    }

    let psi = psi_spectrum(&h, sigma)?;
    let psi_spectrum = psi.iter().copied().collect();
    match spec.input().isotropic_tau2() {
        Some(tau2) => {
            verdicts.push(exact_from_spectrum(&psi, tau2, c));
            verdicts.push(sufficient_from_spectrum(&psi, tau2, c));
            verdicts.push(necessary_from_spectrum(&psi, tau2, c));
            verdicts.push(sufficient_condition_condnum(&h, sigma, tau2, c)?);
            match spec.noise().isotropic_sigma2() {
                Some(s2) => verdicts.extend(fisher_condition_isotropic(&h, s2, tau2, c)?.into_vec()),
                None => match fisher_condition_commuting(&h, sigma, tau2, c) {
                    Ok(v) => verdicts.push(v),
                    Err(Error::NotCommuting { .. }) => {}
                    Err(e) => return Err(e),
                },
            }
        }
        None => {
            verdicts.push(general_gamma_condition(&h, sigma, gamma, c)?);
            notes.push("input covariance is not isotropic: only the general-covariance sufficient condition applies".into());
        }
    }

    Ok(WellPosednessReport {
        overall: overall_verdict(&verdicts),
        verdicts,
        notes,
        identifiability,
        condition_number,
        psi_spectrum,
        linearization,
    })
}

