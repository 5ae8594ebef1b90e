//! Linear surrogates `Y* ~ H X + u + eps` for a black-box forward model.
//!
//! Three strategies: first-order Taylor expansion at a point, least-squares
//! regression on Monte Carlo draws, and the second-moment matching
//! `H Gamma H^T = E[g(X) g(X)^T]` that makes the surrogate law KL-stationary.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditions::{self, ConditionVerdict};
use crate::error::{Error, Result};
use crate::fisher;
use crate::forward::Evaluator;
use crate::model::{linalg, InputModel};
use crate::oracle;

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Taylor,
    Mse,
    Kl,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taylor" => Ok(Strategy::Taylor),
            "mse" => Ok(Strategy::Mse),
            "kl" => Ok(Strategy::Kl),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub h: DMatrix<f64>,
    pub x0: DVector<f64>,
    /// `g(x0) - H x0` for Taylor, the intercept `u` for regression, zero for KL.
    pub offset: DVector<f64>,
    pub strategy: Strategy,
}

impl LinearizedModel {
    /// Surrogate prediction `H x + offset`.
    pub fn predict(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h * x + &self.offset
    }

    /// `Y* - g(x0) + H x0`, the observation the centred linear model sees.
    pub fn shift_observation(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.offset
    }
}

/// Central-difference Jacobian with per-coordinate step
/// `step * max(1, |x0_i|)`.
pub fn jacobian_fd(g: &dyn Evaluator, x0: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
    let p = g.input_dim();
    if x0.len() != p {
        return Err(Error::dims("linearization point", p, x0.len()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {step}")));
    }
    let steps: Vec<f64> = x0.iter().map(|x| step * x.abs().max(1.0)).collect();
    let mut points = Vec::with_capacity(2 * p);
    for (i, h) in steps.iter().enumerate() {
        let mut plus = x0.clone();
        plus[i] += h;
        let mut minus = x0.clone();
        minus[i] -= h;
        points.push(plus);
        points.push(minus);
    }
    let values = g.eval_batch(&points)?;
    let q = g.output_dim();
    let mut jac = DMatrix::zeros(q, p);
    for i in 0..p {
        // Use the realized step so rounding in x0 +- h cancels.
        let width = points[2 * i][i] - points[2 * i + 1][i];
        let col = (&values[2 * i] - &values[2 * i + 1]) / width;
        for r in 0..q {
            if !col[r].is_finite() {
                return Err(Error::NonFiniteEntry { row: r, col: i });
            }
            jac[(r, i)] = col[r];
        }
    }
    Ok(jac)
}

/// First-order Taylor surrogate at `x0`.
pub fn taylor_linearize(g: &dyn Evaluator, x0: &DVector<f64>, fd_step: f64) -> Result<LinearizedModel> {
    let h = jacobian_fd(g, x0, fd_step)?;
    let gx0 = g.eval(x0)?;
    let offset = gx0 - &h * x0;
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::EvaluatorFailure(format!("non-finite value of g at x0 = {x0}")));
    }
    Ok(LinearizedModel {
        h,
        x0: x0.clone(),
        offset,
        strategy: Strategy::Taylor,
    })
}

/// Sufficient and necessary Fisher conditions on the Taylor surrogate at `x0`.
///
/// A Jacobian of rank below `q` yields [`Error::RankDeficient`].
pub fn wellposed_linearized(
    g: &dyn Evaluator,
    x0: &DVector<f64>,
    tau2: f64,
    sigma: &DMatrix<f64>,
    c: f64,
    fd_step: f64,
) -> Result<(ConditionVerdict, ConditionVerdict)> {
    let lin = taylor_linearize(g, x0, fd_step)?;
    Ok((
        conditions::sufficient_condition(&lin.h, sigma, tau2, c)?,
        conditions::necessary_condition(&lin.h, sigma, tau2, c)?,
    ))
}

/// Trace of the Fisher information about `(mu, tau2)` carried by the
/// observable of the Taylor surrogate at `x0`; `None` when the Jacobian is
/// rank deficient.
pub fn linearized_objective(
    g: &dyn Evaluator,
    x0: &DVector<f64>,
    sigma: &DMatrix<f64>,
    tau2: f64,
    fd_step: f64,
) -> Result<Option<f64>> {
    let h = jacobian_fd(g, x0, fd_step)?;
    if h.nrows() > h.ncols() {
        return Ok(None);
    }
    match fisher::fisher_blocks_linear(&h, sigma, tau2, false) {
        Ok(blocks) => Ok(Some(blocks.trace())),
        Err(Error::RankDeficient { .. }) | Err(Error::NotPositiveDefinite { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOptimization {
    pub x0_star: DVector<f64>,
    pub objective: f64,
    /// Best objective so far after each evaluation; degenerate points count as `-inf`.
    pub objective_trace: Vec<f64>,
}

/// Radius of the linearization-point search, in input standard deviations.
pub const SEARCH_RADIUS: f64 = 3.0;

struct Budgeted<'a> {
    g: &'a dyn Evaluator,
    sigma: &'a DMatrix<f64>,
    tau2: f64,
    fd_step: f64,
    center: &'a DVector<f64>,
    radius: f64,
    remaining: usize,
    best: Option<(DVector<f64>, f64)>,
    trace: Vec<f64>,
}

impl Budgeted<'_> {
    /// `None` once the budget is exhausted.
    fn eval(&mut self, x: &DVector<f64>) -> Result<Option<f64>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let v = if (x - self.center).norm() > self.radius {
            f64::NEG_INFINITY
        } else {
            linearized_objective(self.g, x, self.sigma, self.tau2, self.fd_step)?.unwrap_or(f64::NEG_INFINITY)
        };
        let improved = match &self.best {
            None => true,
            Some((_, b)) => v > *b,
        };
        if improved {
            self.best = Some((x.clone(), v));
        }
        self.trace.push(self.best.as_ref().map_or(v, |b| b.1));
        Ok(Some(v))
    }
}

/// Nelder-Mead maximization of `f` from `start`, until the budget runs out
/// or the simplex collapses.
fn nelder_mead(f: &mut Budgeted<'_>, start: &DVector<f64>) -> Result<()> {
    const TOL: f64 = 1e-10;
    let p = start.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(p + 1);
    let Some(v0) = f.eval(start)? else { return Ok(()) };
    simplex.push((start.clone(), v0));
    for i in 0..p {
        let mut x = start.clone();
        x[i] += 0.5 * start[i].abs().max(1.0);
        let Some(v) = f.eval(&x)? else { return Ok(()) };
        simplex.push((x, v));
    }
    // Minimize the negated objective; NaN-free because degenerate is -inf.
    let key = |v: f64| -v;
    loop {
        simplex.sort_by(|a, b| key(a.1).total_cmp(&key(b.1)));
        let spread = simplex.iter().skip(1).map(|(x, _)| (x - &simplex[0].0).amax()).fold(0.0, f64::max);
        if spread < TOL * simplex[0].0.amax().max(1.0) {
            return Ok(());
        }
        let worst = simplex[p].clone();
        let centroid = simplex[..p].iter().fold(DVector::zeros(p), |acc, (x, _)| acc + x) / p as f64;
        let reflected = &centroid + (&centroid - &worst.0);
        let Some(fr) = f.eval(&reflected)? else { return Ok(()) };
        if key(fr) < key(simplex[0].1) {
            let expanded = &centroid + (&reflected - &centroid) * 2.0;
            let Some(fe) = f.eval(&expanded)? else { return Ok(()) };
            simplex[p] = if key(fe) < key(fr) { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if key(fr) < key(simplex[p - 1].1) {
            simplex[p] = (reflected, fr);
            continue;
        }
        let outside = key(fr) < key(worst.1);
        let contracted = if outside {
            &centroid + (&reflected - &centroid) * 0.5
        } else {
            &centroid + (&worst.0 - &centroid) * 0.5
        };
        let Some(fc) = f.eval(&contracted)? else { return Ok(()) };
        let accept = if outside { key(fc) <= key(fr) } else { key(fc) < key(worst.1) };
        if accept {
            simplex[p] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = &best + (&vertex.0 - &best) * 0.5;
            let Some(v) = f.eval(&x)? else { return Ok(()) };
            *vertex = (x, v);
        }
    }
}

/// Linearization point maximizing [`linearized_objective`].
///
/// `budget` counts objective evaluations. Half the budget goes to a
/// Nelder-Mead run from `x_init`, the rest to a restart from `mu` (or from
/// the best point so far when `mu == x_init`). The search is confined to the
/// ball of radius `SEARCH_RADIUS * sqrt(tau2)` around `mu`; points outside
/// score like degenerate ones.
pub fn optimize_linearization_point(
    g: &dyn Evaluator,
    sigma: &DMatrix<f64>,
    tau2: f64,
    mu: &DVector<f64>,
    x_init: &DVector<f64>,
    budget: usize,
    fd_step: f64,
) -> Result<PointOptimization> {
    if budget == 0 {
        return Err(Error::InvalidArgument("optimization budget must be at least 1".into()));
    }
    fisher::check_tau2(tau2)?;
    let p = g.input_dim();
    if x_init.len() != p || mu.len() != p {
        return Err(Error::dims("linearization start point", p, x_init.len().min(mu.len())));
    }
    let mut f = Budgeted {
        g,
        sigma,
        tau2,
        fd_step,
        center: mu,
        radius: SEARCH_RADIUS * tau2.sqrt(),
        remaining: budget.div_ceil(2),
        best: None,
        trace: Vec::with_capacity(budget),
    };
    nelder_mead(&mut f, x_init)?;
    f.remaining += budget - budget.div_ceil(2);
    let mut restart_from_mu = mu != x_init;
    while f.remaining > 0 {
        let start = if restart_from_mu {
            restart_from_mu = false;
            mu.clone()
        } else {
            f.best.as_ref().map(|b| b.0.clone()).expect("x_init was evaluated")
        };
        nelder_mead(&mut f, &start)?;
    }
    let (x0_star, objective) = f.best.expect("budget >= 1 evaluates x_init");
    if objective == f64::NEG_INFINITY {
        return Err(Error::AllPointsDegenerate);
    }
    Ok(PointOptimization {
        x0_star,
        objective,
        objective_trace: f.trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurrogateQuality {
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub kl_residual: Option<f64>,
    /// Information about `tau2` in the surrogate signal `H X`.
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub fi_signal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseFit {
    pub model: LinearizedModel,
    pub quality: SurrogateQuality,
}

/// Least-squares linear surrogate: minimizes the sample mean of
/// `|g(X) - (H X + u)|^2` over Monte Carlo draws of `X`.
///
/// `quality.mse` is the mean squared residual of the noiseless part; the
/// observation noise adds `Tr(Sigma)` on top and does not depend on `H`.
pub fn mse_linear_approx(g: &dyn Evaluator, input: &InputModel, n_samples: usize, seed: u64) -> Result<MseFit> {
    let p = input.p();
    if g.input_dim() != p {
        return Err(Error::dims("forward input dimension", p, g.input_dim()));
    }
    if n_samples < 10 * p {
        return Err(Error::InvalidArgument(format!("need at least 10 p = {} samples, got {n_samples}", 10 * p)));
    }
    let xs = oracle::gaussian_draws(input.mu(), input.gamma(), n_samples, seed)?;
    let ys = g.eval_batch(&xs)?;
    let q = g.output_dim();
    let nf = n_samples as f64;
    let x_bar = xs.iter().fold(DVector::zeros(p), |acc, x| acc + x) / nf;
    let y_bar = ys.iter().fold(DVector::zeros(q), |acc, y| acc + y) / nf;
    let mut sxx = DMatrix::zeros(p, p);
    let mut syx = DMatrix::zeros(q, p);
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - &x_bar;
        syx += (y - &y_bar) * dx.transpose();
        sxx += &dx * dx.transpose();
    }
    let chol = linalg::cholesky("sample covariance of X", &sxx)?;
    // H = Syx Sxx^{-1}, computed as (Sxx^{-1} Sxy)^T.
    let h = chol.solve(&syx.transpose()).transpose();
    let u = &y_bar - &h * &x_bar;
    let mse = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - &h * x - &u).norm_squared())
        .sum::<f64>()
        / nf;
    let fi_signal = input.isotropic_tau2().map(|t| fisher::fisher_signal_tau2(q, t));
    Ok(MseFit {
        model: LinearizedModel {
            h,
            x0: input.mu().clone(),
            offset: u,
            strategy: Strategy::Mse,
        },
        quality: SurrogateQuality {
            mse: Some(mse),
            kl_residual: None,
            fi_signal,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlFit {
    pub model: LinearizedModel,
    /// Estimated `E[g(X) g(X)^T]`.
    pub m2: DMatrix<f64>,
    pub quality: SurrogateQuality,
}

/// `|H Gamma H^T - M2|_F`, zero exactly when the first-order condition of
/// the KL surrogate holds.
pub fn kl_optimal_check(h: &DMatrix<f64>, gamma: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<f64> {
    let p = linalg::ensure_square("Gamma", gamma)?;
    let q = linalg::ensure_square("M2", m2)?;
    if h.nrows() != q {
        return Err(Error::dims("rows of H vs M2", q, h.nrows()));
    }
    if h.ncols() != p {
        return Err(Error::dims("columns of H vs Gamma", p, h.ncols()));
    }
    Ok(linalg::frobenius(&(h * gamma * h.transpose() - m2)))
}

/// Linear surrogate with `H Gamma H^T = E[g(X) g(X)^T]` for `X ~ N(0, Gamma)`.
///
/// Among the solutions the canonical one is `H = L [I_q | 0] G^{-1}` with
/// Cholesky factors `M2 = L L^T` and `Gamma = G G^T`.
pub fn kl_optimal_fit(g: &dyn Evaluator, input: &InputModel, n_samples: usize, seed: u64) -> Result<KlFit> {
    if input.mu().iter().any(|v| *v != 0.0) {
        return Err(Error::MuNotZero);
    }
    let (p, q) = (input.p(), g.output_dim());
    if q > p {
        return Err(Error::InvalidArgument(format!(
            "second-moment matching needs q <= p, got q = {q}, p = {p}"
        )));
    }
    let m2 = oracle::mc_second_moment(g, input.gamma(), n_samples, seed)?.estimate;
    let l = nalgebra::Cholesky::new(m2.clone()).ok_or(Error::M2NotPD)?.l();
    let g_chol = linalg::cholesky("Gamma", input.gamma())?.l();
    let g_inv = g_chol
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .expect("Cholesky factor has a positive diagonal");
    let h = l * g_inv.rows(0, q);
    let kl_residual = kl_optimal_check(&h, input.gamma(), &m2)?;
    let fi_signal = input.isotropic_tau2().map(|t| fisher::fisher_signal_tau2(q, t));
    Ok(KlFit {
        model: LinearizedModel {
            h,
            x0: DVector::zeros(p),
            offset: DVector::zeros(q),
            strategy: Strategy::Kl,
        },
        m2,
        quality: SurrogateQuality {
            mse: None,
            kl_residual: Some(kl_residual),
            fi_signal,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTransform {
    /// `tau H`
    pub theta: DMatrix<f64>,
    /// `Sigma^{-1/2} Theta Theta^T Sigma^{-1/2}`, equal to `tau2 Psi`.
    pub phi: DMatrix<f64>,
    pub verdict: ConditionVerdict,
}

/// The sufficient condition with `tau` absorbed into `Theta = tau H`:
/// `(sqrt(c) - 1) min lambda(Phi) > 1`.
pub fn theta_transform(
    input: &InputModel,
    h: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    c: f64,
) -> Result<ThetaTransform> {
    let tau2 = input.tau2()?;
    crate::model::check_c(c)?;
    let theta = h * tau2.sqrt();
    let phi = fisher::psi_matrix(&theta, sigma)?;
    let eigs = fisher::clamp_spectrum(linalg::sym_eigenvalues(&phi));
    let min = eigs[eigs.len() - 1];
    let verdict = ConditionVerdict::strict(
        "fisher_sufficient_theta",
        conditions::ConditionKind::Sufficient,
        "(sqrt(c) - 1) min lambda(Phi) > 1",
        (c.sqrt() - 1.0) * min,
        1.0,
    );
    Ok(ThetaTransform { theta, phi, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{Builtin, FnEvaluator};
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let a = dmatrix![1.0, -2.0, 0.5; 3.0, 0.0, 1.0];
        let g = Builtin::Linear { h: a.clone() };
        let j = jacobian_fd(&g, &dvector![0.3, -1.2, 4.0], DEFAULT_FD_STEP).unwrap();
        assert!((j - a).abs().max() < 1e-9);
    }

    #[test]
    fn jacobian_matches_analytic() {
        let g = FnEvaluator::new(2, 2, "poly", |x| dvector![x[0] * x[0], x[0] * x[1]]);
        let j = jacobian_fd(&g, &dvector![1.0, 1.0], DEFAULT_FD_STEP).unwrap();
        assert!((j - dmatrix![2.0, 0.0; 1.0, 1.0]).abs().max() < 1e-6);
        let constant = FnEvaluator::new(2, 1, "c", |_| dvector![5.0]);
        assert_eq!(jacobian_fd(&constant, &dvector![1.0, 2.0], 1e-5).unwrap(), DMatrix::zeros(1, 2));
    }

    #[test]
    fn jacobian_reports_non_finite_entries() {
        let g = FnEvaluator::new(1, 1, "log", |x| dvector![x[0].ln()]);
        assert!(matches!(
            jacobian_fd(&g, &dvector![0.0], 1e-5),
            Err(Error::NonFiniteEntry { row: 0, col: 0 })
        ));
    }

    #[test]
    fn builtin_jacobians_agree() {
        let x = dvector![0.4, -0.7];
        for g in [
            Builtin::Sin1d { p: 2 },
            Builtin::ExpComponentwise { p: 2 },
            Builtin::QuadraticDiag { curvature: dvector![1.5, -0.5] },
            Builtin::Cubic1d { p: 2 },
        ] {
            let j = jacobian_fd(&g, &x, DEFAULT_FD_STEP).unwrap();
            assert!((j - g.jacobian(&x)).abs().max() < 1e-7, "{}", g.name());
        }
    }

    #[test]
    fn taylor_of_exp_at_zero() {
        let g = Builtin::ExpComponentwise { p: 1 };
        let lin = taylor_linearize(&g, &dvector![0.0], DEFAULT_FD_STEP).unwrap();
        assert_relative_eq!(lin.h[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(lin.offset[0], 1.0, epsilon = 1e-12);
        let y = dvector![2.5];
        assert_relative_eq!(lin.shift_observation(&y)[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn taylor_reproduces_affine_map() {
        let g = FnEvaluator::new(2, 2, "affine", |x| dmatrix![1.0, 2.0; 0.0, -1.0] * x + dvector![3.0, 4.0]);
        let lin = taylor_linearize(&g, &dvector![0.5, 0.5], DEFAULT_FD_STEP).unwrap();
        let x = dvector![-2.0, 7.0];
        assert!((lin.predict(&x) - g.eval(&x).unwrap()).amax() < 1e-8);
    }

    #[test]
    fn degenerate_jacobian_is_rank_deficient() {
        let g = Builtin::Sin1d { p: 1 };
        let s = dmatrix![1.0];
        assert!(wellposed_linearized(&g, &dvector![0.0], 2.0, &s, 4.0, DEFAULT_FD_STEP).is_ok());
        let half_pi = dvector![std::f64::consts::FRAC_PI_2];
        assert!(matches!(
            wellposed_linearized(&g, &half_pi, 2.0, &s, 4.0, DEFAULT_FD_STEP),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn optimizer_budget_one_returns_start() {
        let g = Builtin::Cubic1d { p: 1 };
        let out = optimize_linearization_point(&g, &dmatrix![1.0], 1.0, &dvector![0.0], &dvector![0.7], 1, 1e-5).unwrap();
        assert_eq!(out.x0_star, dvector![0.7]);
        assert_eq!(out.objective_trace.len(), 1);
    }

    #[test]
    fn optimizer_moves_away_from_flat_point() {
        let g = Builtin::Cubic1d { p: 1 };
        let s = dmatrix![1.0];
        let out = optimize_linearization_point(&g, &s, 1.0, &dvector![0.0], &dvector![0.1], 60, 1e-5).unwrap();
        let start = linearized_objective(&g, &dvector![0.1], &s, 1.0, 1e-5).unwrap().unwrap();
        assert!(out.objective >= start);
        assert!(out.x0_star[0].abs() > 0.1);
        assert!(out.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.x0_star[0].abs() <= SEARCH_RADIUS);
    }

    #[test]
    fn optimizer_stays_in_search_ball() {
        let g = Builtin::QuadraticDiag { curvature: dvector![0.5, 0.2] };
        let mu = dvector![1.0, -1.0];
        let out = optimize_linearization_point(&g, &dmatrix![0.25, 0.0; 0.0, 0.25], 0.5, &mu, &mu, 200, 1e-5).unwrap();
        assert!((&out.x0_star - &mu).norm() <= SEARCH_RADIUS * 0.5f64.sqrt());
    }

    #[test]
    fn optimizer_all_degenerate() {
        let g = FnEvaluator::new(1, 1, "flat", |_| dvector![1.0]);
        assert!(matches!(
            optimize_linearization_point(&g, &dmatrix![1.0], 1.0, &dvector![0.0], &dvector![0.0], 10, 1e-5),
            Err(Error::AllPointsDegenerate)
        ));
    }

    #[test]
    fn optimizer_linear_map_keeps_start() {
        let g = Builtin::Linear { h: dmatrix![1.0, 2.0] };
        let x = dvector![0.3, -0.4];
        let out = optimize_linearization_point(&g, &dmatrix![1.0], 2.0, &dvector![0.0, 0.0], &x, 20, 1e-5).unwrap();
        let start = linearized_objective(&g, &x, &dmatrix![1.0], 2.0, 1e-5).unwrap().unwrap();
        assert!(out.objective >= start);
        assert_relative_eq!(out.objective, start, max_relative = 1e-8);
    }

    #[test]
    fn mse_of_affine_map() {
        let a = dmatrix![1.0, -1.0; 0.5, 2.0];
        let b = dvector![0.3, -2.0];
        let (a2, b2) = (a.clone(), b.clone());
        let g = FnEvaluator::new(2, 2, "affine", move |x| &a2 * x + &b2);
        let input = InputModel::new(dvector![1.0, 0.0], dmatrix![1.0, 0.2; 0.2, 0.5]).unwrap();
        let fit = mse_linear_approx(&g, &input, 20_000, 1).unwrap();
        assert!((fit.model.h - a).abs().max() < 1e-9);
        assert!((fit.model.offset - b).abs().max() < 1e-9);
        assert!(fit.quality.mse.unwrap() < 1e-18);
    }

    #[test]
    fn mse_of_square() {
        let g = Builtin::QuadraticDiag { curvature: dvector![1.0] };
        let input = InputModel::isotropic(dvector![0.0], 1.0).unwrap();
        let fit = mse_linear_approx(&g, &input, 100_000, 20240101).unwrap();
        assert!(fit.model.h[(0, 0)].abs() < 0.05);
        assert!((fit.model.offset[0] - 1.0).abs() < 0.05);
        let again = mse_linear_approx(&g, &input, 100_000, 20240101).unwrap();
        assert_eq!(fit, again);
        assert!(mse_linear_approx(&g, &input, 5, 1).is_err());
    }

    #[test]
    fn kl_fit_matches_second_moment() {
        let g = Builtin::ExpComponentwise { p: 2 };
        let input = InputModel::new(dvector![0.0, 0.0], dmatrix![0.5, 0.1; 0.1, 0.3]).unwrap();
        let fit = kl_optimal_fit(&g, &input, 20_000, 3).unwrap();
        assert!(fit.quality.kl_residual.unwrap() <= 1e-10);
        assert!(kl_optimal_fit(&g, &InputModel::isotropic(dvector![1.0, 0.0], 1.0).unwrap(), 100, 1)
            .is_err_and(|e| e == Error::MuNotZero));
    }

    #[test]
    fn kl_fit_of_identity_is_orthogonal() {
        let g = Builtin::Linear { h: DMatrix::identity(3, 3) };
        let input = InputModel::isotropic(DVector::zeros(3), 1.0).unwrap();
        let fit = kl_optimal_fit(&g, &input, 100_000, 4).unwrap();
        let hht = &fit.model.h * fit.model.h.transpose();
        assert!((hht - DMatrix::identity(3, 3)).abs().max() < 0.05);
    }

    #[test]
    fn kl_degenerate_image() {
        let g = FnEvaluator::new(2, 2, "rank1", |x| dvector![x[0], x[0]]);
        let input = InputModel::isotropic(DVector::zeros(2), 1.0).unwrap();
        assert_eq!(kl_optimal_fit(&g, &input, 1000, 1).unwrap_err(), Error::M2NotPD);
    }

    #[test]
    fn kl_check_examples() {
        let m2 = dmatrix![2.0, 0.5; 0.5, 1.0];
        let zero = DMatrix::zeros(2, 3);
        assert_relative_eq!(kl_optimal_check(&zero, &DMatrix::identity(3, 3), &m2).unwrap(), linalg::frobenius(&m2));
        assert!(kl_optimal_check(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3), &m2).is_err());
    }

    #[test]
    fn kl_residual_grows_with_perturbation() {
        let g = Builtin::QuadraticDiag { curvature: dvector![1.0, 2.0] };
        let input = InputModel::isotropic(DVector::zeros(2), 1.0).unwrap();
        let fit = kl_optimal_fit(&g, &input, 10_000, 1).unwrap();
        let e = dmatrix![0.3, -0.2; 0.1, 0.4];
        let mut last = 0.0;
        for k in 1..=8 {
            let r = kl_optimal_check(&(&fit.model.h + &e * (k as f64 * 0.05)), input.gamma(), &fit.m2).unwrap();
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn theta_transform_identity_scale() {
        let h = dmatrix![1.0, 0.5; 0.0, 2.0];
        let s = dmatrix![1.0, 0.2; 0.2, 0.8];
        let t = theta_transform(&InputModel::isotropic(DVector::zeros(2), 1.0).unwrap(), &h, &s, 4.0).unwrap();
        assert_eq!(t.theta, h);
        assert!((t.phi - fisher::psi_matrix(&h, &s).unwrap()).abs().max() < 1e-14);
        let non_iso = InputModel::new(DVector::zeros(2), dmatrix![1.0, 0.0; 0.0, 2.0]).unwrap();
        assert_eq!(theta_transform(&non_iso, &h, &s, 4.0).unwrap_err(), Error::NotIsotropic);
    }

    #[test]
    fn theta_transform_scalar_arithmetic() {
        let t = theta_transform(&InputModel::isotropic(dvector![0.0], 4.0).unwrap(), &dmatrix![1.0], &dmatrix![1.0], 4.0)
            .unwrap();
        assert_relative_eq!(t.phi[(0, 0)], 4.0);
        assert!(t.verdict.holds);
        assert_relative_eq!(t.verdict.lhs, 4.0);
    }
}
