//! TOML problem specification.
//!
//! ```toml
//! # comments start with '#'
//! p = 2
//! q = 2
//! mu = [0.0, 0.0]
//! c = 4.0            # optional, default 4
//! n_obs = 1          # optional
//!
//! [gamma]
//! tau2 = 4.0         # or: full = [..]  (p*p entries, row-major)
//!
//! [sigma]
//! sigma2 = 1.0       # or: full = [..]  (q*q entries, row-major)
//!
//! [forward]
//! H = [1.0, 0.0, 0.0, 1.0]   # q*p entries, row-major
//! # or: builtin = "quadratic_diag"
//! #     params = { curvature = [1.0, 2.0] }
//! # or: command = ["python3", "model.py"]
//!
//! [oracle]           # optional
//! seed = 20240101
//! n = 100000
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::conditions::default_c;
use crate::error::{Error, Result};
use crate::forward::{Builtin, SubprocessEvaluator, BUILTIN_NAMES};
use crate::model::{Covariance, ForwardModel, OracleSettings, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub p: usize,
    pub q: usize,
    pub mu: Vec<f64>,
    pub gamma: CovarianceSection<GammaScale>,
    pub sigma: CovarianceSection<SigmaScale>,
    pub forward: ForwardSection,
    pub c: Option<f64>,
    pub n_obs: Option<usize>,
    pub oracle: Option<OracleSection>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaScale {
    pub tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaScale {
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSection<S> {
    Full {
        full: Vec<f64>,
    },
    Isotropic(S),
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    #[serde(rename = "H")]
    pub h: Option<Vec<f64>>,
    pub builtin: Option<String>,
    pub params: Option<BuiltinParams>,
    pub command: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinParams {
    #[serde(rename = "H")]
    pub h: Option<Vec<f64>>,
    pub curvature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub seed: Option<u64>,
    pub n: Option<usize>,
}

fn matrix(name: &str, rows: usize, cols: usize, values: &[f64]) -> Result<DMatrix<f64>> {
    if values.len() != rows * cols {
        return Err(Error::Parse(format!(
            "{name} must have {rows} x {cols} = {} entries, found {}",
            rows * cols,
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Parse(format!("{name} entry {i} is not finite")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, values))
}

impl<S> CovarianceSection<S> {
    fn to_covariance(&self, name: &str, dim: usize, scale: impl Fn(&S) -> f64) -> Result<Covariance> {
        match self {
            CovarianceSection::Full { full } => Ok(Covariance::Full(matrix(name, dim, dim, full)?)),
            CovarianceSection::Isotropic(s) => Ok(Covariance::Isotropic { dim, scale: scale(s) }),
        }
    }
}

impl ForwardSection {
    fn to_forward(&self, p: usize, q: usize) -> Result<ForwardModel> {
        let given = [self.h.is_some(), self.builtin.is_some(), self.command.is_some()];
        if given.iter().filter(|b| **b).count() != 1 {
            return Err(Error::Parse("forward needs exactly one of H, builtin, command".into()));
        }
        if self.params.is_some() && self.builtin.is_none() {
            return Err(Error::Parse("forward.params is only valid with forward.builtin".into()));
        }
        if let Some(h) = &self.h {
            return Ok(ForwardModel::Linear(matrix("forward.H", q, p, h)?));
        }
        if let Some(argv) = &self.command {
            return Ok(ForwardModel::black_box(SubprocessEvaluator::new(argv.clone(), p, q)?));
        }
        let name = self.builtin.as_deref().unwrap_or_default();
        let params = self.params.clone().unwrap_or_default();
        let builtin = match name {
            "linear" => {
                let h = params
                    .h
                    .as_ref()
                    .ok_or_else(|| Error::Parse("builtin linear needs params.H".into()))?;
                Builtin::Linear { h: matrix("forward.params.H", q, p, h)? }
            }
            "sin1d" => Builtin::Sin1d { p },
            "exp_componentwise" => Builtin::ExpComponentwise { p },
            "quadratic_diag" => {
                let k = params.curvature.unwrap_or_else(|| vec![1.0; p]);
                if k.len() != p {
                    return Err(Error::Parse(format!("params.curvature needs {p} entries, found {}", k.len())));
                }
                Builtin::QuadraticDiag { curvature: DVector::from_vec(k) }
            }
            "cubic1d" => Builtin::Cubic1d { p },
            other => {
                return Err(Error::Parse(format!(
                    "unknown builtin {other:?}; expected one of {}",
                    BUILTIN_NAMES.join(", ")
                )))
            }
        };
        Ok(ForwardModel::black_box(builtin))
    }
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_problem_spec(&self) -> Result<ProblemSpec> {
        let (p, q) = (self.p, self.q);
        if p == 0 || q == 0 {
            return Err(Error::Parse("p and q must be positive".into()));
        }
        if self.mu.len() != p {
            return Err(Error::Parse(format!("mu must have p = {p} entries, found {}", self.mu.len())));
        }
        let defaults = OracleSettings::default();
        let oracle = self.oracle.as_ref().map_or(defaults, |o| OracleSettings {
            seed: o.seed.unwrap_or(defaults.seed),
            n: o.n.unwrap_or(defaults.n),
        });
        Ok(ProblemSpec {
            mu: DVector::from_vec(self.mu.clone()),
            gamma: self.gamma.to_covariance("gamma.full", p, |s| s.tau2)?,
            sigma: self.sigma.to_covariance("sigma.full", q, |s| s.sigma2)?,
            forward: self.forward.to_forward(p, q)?,
            c: self.c.unwrap_or_else(default_c),
            n_obs: self.n_obs,
            oracle,
        })
    }
}

/// Reads a matrix from text: one row per line, entries separated by
/// whitespace or commas, `#` starts a comment.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    let Some(first) = rows.first() else {
        return Err(Error::Parse("empty matrix".into()));
    };
    let cols = first.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Parse(format!("row {} has {} entries, expected {cols}", bad + 1, rows[bad].len())));
    }
    let flat: Vec<f64> = rows.concat();
    matrix("matrix", rows.len(), cols, &flat)
}

/// Comma- or whitespace-separated list of numbers.
pub fn parse_vector_arg(text: &str) -> Result<DVector<f64>> {
    let v = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Parse(format!("bad number list {text:?}: {e}")))?;
    if v.is_empty() {
        return Err(Error::Parse("empty number list".into()));
    }
    Ok(DVector::from_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    const GOLDEN: &str = r#"
        # identity model
        p = 2
        q = 2
        mu = [0.0, 0.0]
        [gamma]
        tau2 = 4.0
        [sigma]
        sigma2 = 1.0
        [forward]
        H = [1.0, 0.0, 0.0, 1.0]
    "#;

    #[test]
    fn parses_golden_spec() {
        let spec = SpecFile::parse(GOLDEN).unwrap().to_problem_spec().unwrap();
        assert_eq!(spec.c, 4.0);
        assert_eq!(spec.gamma, Covariance::Isotropic { dim: 2, scale: 4.0 });
        assert_eq!(spec.forward, ForwardModel::Linear(DMatrix::identity(2, 2)));
        assert_eq!(spec.oracle, OracleSettings::default());
        assert!(validate_spec(spec).is_ok());
    }

    #[test]
    fn full_covariances_are_row_major() {
        let text = GOLDEN
            .replace("tau2 = 4.0", "full = [2.0, 0.5, 0.5, 1.0]")
            .replace("H = [1.0, 0.0, 0.0, 1.0]", "H = [1.0, 2.0, 3.0, 4.0]");
        let spec = SpecFile::parse(&text).unwrap().to_problem_spec().unwrap();
        assert_eq!(spec.gamma, Covariance::Full(nalgebra::dmatrix![2.0, 0.5; 0.5, 1.0]));
        assert_eq!(spec.forward, ForwardModel::Linear(nalgebra::dmatrix![1.0, 2.0; 3.0, 4.0]));
    }

    #[test]
    fn wrong_length_matrix_is_a_parse_error() {
        let text = GOLDEN.replace("H = [1.0, 0.0, 0.0, 1.0]", "H = [1.0, 0.0, 0.0]");
        let err = SpecFile::parse(&text).unwrap().to_problem_spec().unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("4 entries")), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_ambiguous_forward() {
        assert!(SpecFile::parse(&GOLDEN.replace("p = 2", "p = 2\nbogus = 1")).is_err());
        let both = GOLDEN.replace("H = [1.0, 0.0, 0.0, 1.0]", "H = [1.0, 0.0, 0.0, 1.0]\nbuiltin = \"sin1d\"");
        assert!(SpecFile::parse(&both).unwrap().to_problem_spec().is_err());
    }

    #[test]
    fn builtins() {
        let text = GOLDEN.replace(
            "H = [1.0, 0.0, 0.0, 1.0]",
            "builtin = \"quadratic_diag\"\nparams = { curvature = [1.0, 3.0] }",
        );
        let spec = SpecFile::parse(&text).unwrap().to_problem_spec().unwrap();
        assert!(matches!(spec.forward, ForwardModel::BlackBox(_)));
        let unknown = GOLDEN.replace("H = [1.0, 0.0, 0.0, 1.0]", "builtin = \"nope\"");
        assert!(SpecFile::parse(&unknown).unwrap().to_problem_spec().is_err());
    }

    #[test]
    fn matrix_text() {
        let m = parse_matrix_text("# scale\n2, 0.5\n0.5 1\n").unwrap();
        assert_eq!(m, nalgebra::dmatrix![2.0, 0.5; 0.5, 1.0]);
        assert!(parse_matrix_text("1 2\n3").is_err());
        assert_eq!(parse_vector_arg("1, -2.5").unwrap(), nalgebra::dvector![1.0, -2.5]);
    }
}
