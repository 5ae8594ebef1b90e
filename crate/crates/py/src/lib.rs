//! Python bindings for the `wellposed` diagnostics.
//!
//! Matrices cross the boundary as lists of rows; vectors as flat lists.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wellposed::cli::SpecFile;
use wellposed::conditions::{self, ConditionVerdict, LinearizeRequest, ReportOptions, WellPosednessReport};
use wellposed::model::validate_spec;
use wellposed::{fisher, oracle, Error};

create_exception!(wellposed_py, WellposedError, PyValueError);

fn to_py(e: Error) -> PyErr {
    WellposedError::new_err(e.to_string())
}

/// Row-major nested lists to a matrix; rows must share one length.
pub fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Error> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!(
            "ragged matrix: rows of length {ncols} and {}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn mat(rows_: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    matrix(&rows_).map_err(to_py)
}

/// One evaluated condition.
#[pyclass(frozen, skip_from_py_object, name = "Verdict", module = "wellposed_py")]
#[derive(Clone)]
pub struct PyVerdict(ConditionVerdict);

#[pymethods]
impl PyVerdict {
    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn kind(&self) -> String {
        serde_json::to_value(self.0.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    #[getter]
    fn formula(&self) -> &str {
        &self.0.formula
    }

    #[getter]
    fn lhs(&self) -> f64 {
        self.0.lhs
    }

    #[getter]
    fn rhs(&self) -> f64 {
        self.0.rhs
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.0.margin
    }

    #[getter]
    fn strict(&self) -> bool {
        self.0.strict
    }

    #[getter]
    fn holds(&self) -> bool {
        self.0.holds
    }

    #[getter]
    fn note(&self) -> Option<&str> {
        self.0.note.as_deref()
    }

    fn __repr__(&self) -> String {
        format!(
            "Verdict(name={:?}, holds={}, lhs={}, rhs={}, margin={})",
            self.0.name,
            if self.0.holds { "True" } else { "False" },
            self.0.lhs,
            self.0.rhs,
            self.0.margin
        )
    }
}

/// Aggregated report for a problem spec.
#[pyclass(frozen, name = "Report", module = "wellposed_py")]
pub struct PyReport(WellPosednessReport);

#[pymethods]
impl PyReport {
    /// `"well_posed"`, `"ill_posed"` or `"inconclusive"`.
    #[getter]
    fn overall(&self) -> &'static str {
        self.0.overall.as_str()
    }

    #[getter]
    fn verdicts(&self) -> Vec<PyVerdict> {
        self.0.verdicts.iter().cloned().map(PyVerdict).collect()
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.0.notes.clone()
    }

    #[getter]
    fn condition_number(&self) -> Option<f64> {
        self.0.condition_number
    }

    #[getter]
    fn psi_spectrum(&self) -> Vec<f64> {
        self.0.psi_spectrum.clone()
    }

    fn verdict(&self, name: &str) -> Option<PyVerdict> {
        self.0.verdict(name).cloned().map(PyVerdict)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("report serializes")
    }

    fn __repr__(&self) -> String {
        format!("Report(overall={:?}, verdicts={})", self.0.overall.as_str(), self.0.verdicts.len())
    }
}

/// Parses a TOML problem spec and runs every applicable condition.
///
/// `linearize` is `None`, `"mean"`, `"opt"` or a list of coordinates.
pub fn check_text(
    spec_toml: &str,
    c: Option<f64>,
    linearize: Option<LinearizeRequest>,
) -> Result<WellPosednessReport, Error> {
    let mut raw = SpecFile::parse(spec_toml)?.to_problem_spec()?;
    if let Some(c) = c {
        raw.c = c;
    }
    let spec = validate_spec(raw)?;
    let options = ReportOptions {
        linearize: linearize.unwrap_or_default(),
        ..Default::default()
    };
    conditions::full_report(&spec, &options)
}

#[derive(FromPyObject)]
enum LinearizeArg {
    Mode(String),
    Point(Vec<f64>),
}

#[pyfunction]
#[pyo3(signature = (spec_toml, c=None, linearize=None, opt_budget=200))]
fn check_spec(spec_toml: &str, c: Option<f64>, linearize: Option<LinearizeArg>, opt_budget: usize) -> PyResult<PyReport> {
    let request = match linearize {
        None => None,
        Some(LinearizeArg::Mode(m)) if m == "mean" => Some(LinearizeRequest::Mean),
        Some(LinearizeArg::Mode(m)) if m == "opt" => Some(LinearizeRequest::Optimize { budget: opt_budget }),
        Some(LinearizeArg::Mode(m)) => {
            return Err(WellposedError::new_err(format!(
                "linearize must be 'mean', 'opt' or a point, got {m:?}"
            )))
        }
        Some(LinearizeArg::Point(x)) => Some(LinearizeRequest::Point(DVector::from_vec(x))),
    };
    check_text(spec_toml, c, request).map(PyReport).map_err(to_py)
}

#[pyfunction]
fn default_c() -> f64 {
    conditions::default_c()
}

#[pyfunction]
fn fisher_signal_tau2(q: usize, tau2: f64) -> f64 {
    fisher::fisher_signal_tau2(q, tau2)
}

#[pyfunction]
fn fisher_observed_tau2(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64) -> PyResult<f64> {
    fisher::fisher_observed_tau2(&mat(h)?, &mat(sigma)?, tau2).map_err(to_py)
}

#[pyfunction]
fn psi_eigenvalues(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let eigs = fisher::psi_eigenvalues(&mat(h)?, &mat(sigma)?).map_err(to_py)?;
    Ok(eigs.iter().copied().collect())
}

type FisherCheck = fn(&DMatrix<f64>, &DMatrix<f64>, f64, f64) -> Result<ConditionVerdict, Error>;

fn fisher_check(f: FisherCheck, h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, c: f64) -> PyResult<PyVerdict> {
    f(&mat(h)?, &mat(sigma)?, tau2, c).map(PyVerdict).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, c=4.0))]
fn fisher_condition_exact(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, c: f64) -> PyResult<PyVerdict> {
    fisher_check(conditions::fisher_condition_exact, h, sigma, tau2, c)
}

#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, c=4.0))]
fn sufficient_condition(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, c: f64) -> PyResult<PyVerdict> {
    fisher_check(conditions::sufficient_condition, h, sigma, tau2, c)
}

#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, c=4.0))]
fn necessary_condition(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, c: f64) -> PyResult<PyVerdict> {
    fisher_check(conditions::necessary_condition, h, sigma, tau2, c)
}

#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, c=4.0))]
fn sufficient_condition_condnum(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, c: f64) -> PyResult<PyVerdict> {
    fisher_check(conditions::sufficient_condition_condnum, h, sigma, tau2, c)
}

#[pyfunction]
fn sobol_wellposed_scalar(a: Vec<f64>, gamma: Vec<Vec<f64>>, sigma2: f64) -> PyResult<PyVerdict> {
    conditions::sobol_wellposed_scalar(&DVector::from_vec(a), &mat(gamma)?, sigma2)
        .map(PyVerdict)
        .map_err(to_py)
}

#[pyfunction]
fn entropy_wellposed_scalar(a: Vec<f64>, gamma: Vec<Vec<f64>>, sigma2: f64) -> PyResult<PyVerdict> {
    conditions::entropy_wellposed_scalar(&DVector::from_vec(a), &mat(gamma)?, sigma2)
        .map(PyVerdict)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, step=None))]
fn fd_fisher_tau2(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, step: Option<f64>) -> PyResult<f64> {
    oracle::fd_fisher_tau2(&mat(h)?, &mat(sigma)?, tau2, step).map_err(to_py)
}

/// Monte Carlo Fisher information as `(estimate, std_error)`.
#[pyfunction]
#[pyo3(signature = (h, sigma, tau2, n=100_000, seed=20240101))]
fn score_variance_fi(h: Vec<Vec<f64>>, sigma: Vec<Vec<f64>>, tau2: f64, n: usize, seed: u64) -> PyResult<(f64, f64)> {
    let s = oracle::score_variance_fi(&mat(h)?, &mat(sigma)?, tau2, n, seed).map_err(to_py)?;
    Ok((s.variance.estimate, s.variance.std_error))
}

/// Inverse-Wishart draws with `a^T Gamma a > sigma2`, as `(samples, acceptance_rate)`.
#[pyfunction]
#[pyo3(signature = (lambda_scale, nu, a, sigma2, n, seed=20240101, max_draws=None))]
fn sample_constrained_prior(
    lambda_scale: Vec<Vec<f64>>,
    nu: f64,
    a: Vec<f64>,
    sigma2: f64,
    n: usize,
    seed: u64,
    max_draws: Option<usize>,
) -> PyResult<(Vec<Vec<Vec<f64>>>, f64)> {
    let lambda = mat(lambda_scale)?;
    let max_draws = max_draws.unwrap_or_else(|| n.saturating_mul(1000));
    let s = conditions::constrained_iw_prior_sample(&lambda, nu, &DVector::from_vec(a), sigma2, n, seed, max_draws)
        .map_err(to_py)?;
    Ok((s.samples.iter().map(rows).collect(), s.acceptance_rate))
}

#[pymodule]
fn wellposed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WellposedError", m.py().get_type::<WellposedError>())?;
    m.add_class::<PyVerdict>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(check_spec, m)?)?;
    m.add_function(wrap_pyfunction!(default_c, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_signal_tau2, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_observed_tau2, m)?)?;
    m.add_function(wrap_pyfunction!(psi_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_condition_exact, m)?)?;
    m.add_function(wrap_pyfunction!(sufficient_condition, m)?)?;
    m.add_function(wrap_pyfunction!(necessary_condition, m)?)?;
    m.add_function(wrap_pyfunction!(sufficient_condition_condnum, m)?)?;
    m.add_function(wrap_pyfunction!(sobol_wellposed_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_wellposed_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(fd_fisher_tau2, m)?)?;
    m.add_function(wrap_pyfunction!(score_variance_fi, m)?)?;
    m.add_function(wrap_pyfunction!(sample_constrained_prior, m)?)?;
    Ok(())
}
