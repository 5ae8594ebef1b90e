//! Black-box forward models `g: R^p -> R^q`.
//!
//! Three flavours: closures, a small builtin registry with known Jacobians,
//! and external programs speaking a line protocol on stdin/stdout.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Environment variable bounding each subprocess evaluation, in milliseconds.
pub const EVAL_TIMEOUT_ENV: &str = "WELLPOSED_EVAL_TIMEOUT_MS";
pub const DEFAULT_EVAL_TIMEOUT_MS: u64 = 30_000;

/// A pure, reentrant map from inputs to outputs.
pub trait Evaluator: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// Evaluates many points. Implementations with per-call setup cost
    /// (subprocesses) override this.
    fn eval_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        xs.iter().map(|x| self.eval(x)).collect()
    }

    fn describe(&self) -> String;
}

pub(crate) fn check_output(y: &DVector<f64>, q: usize) -> Result<()> {
    if y.len() != q {
        return Err(Error::EvaluatorFailure(format!(
            "expected {q} outputs, got {}",
            y.len()
        )));
    }
    Ok(())
}

/// Wraps a closure as an [`Evaluator`].
pub struct FnEvaluator<F> {
    p: usize,
    q: usize,
    name: String,
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(p: usize, q: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            p,
            q,
            name: name.into(),
            f,
        }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn input_dim(&self) -> usize {
        self.p
    }
    fn output_dim(&self) -> usize {
        self.q
    }
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.p {
            return Err(Error::dims("forward input", self.p, x.len()));
        }
        let y = (self.f)(x);
        check_output(&y, self.q)?;
        Ok(y)
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Builtin forward models, selectable by name from a spec file.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    /// `g(x) = H x`
    Linear { h: DMatrix<f64> },
    /// `g(x) = sin(x_1)`, scalar output.
    Sin1d { p: usize },
    /// `g_i(x) = exp(x_i)`, q = p.
    ExpComponentwise { p: usize },
    /// `g_i(x) = k_i x_i^2`, q = p.
    QuadraticDiag { curvature: DVector<f64> },
    /// `g(x) = x_1^3`, scalar output.
    Cubic1d { p: usize },
}

pub const BUILTIN_NAMES: [&str; 5] = ["linear", "sin1d", "exp_componentwise", "quadratic_diag", "cubic1d"];

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Linear { .. } => "linear",
            Builtin::Sin1d { .. } => "sin1d",
            Builtin::ExpComponentwise { .. } => "exp_componentwise",
            Builtin::QuadraticDiag { .. } => "quadratic_diag",
            Builtin::Cubic1d { .. } => "cubic1d",
        }
    }

    /// Analytic Jacobian, used to test finite-difference machinery.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = self.input_dim();
        match self {
            Builtin::Linear { h } => h.clone(),
            Builtin::Sin1d { .. } => {
                let mut j = DMatrix::zeros(1, p);
                j[(0, 0)] = x[0].cos();
                j
            }
            Builtin::ExpComponentwise { .. } => DMatrix::from_diagonal(&x.map(f64::exp)),
            Builtin::QuadraticDiag { curvature } => {
                DMatrix::from_diagonal(&curvature.zip_map(x, |k, xi| 2.0 * k * xi))
            }
            Builtin::Cubic1d { .. } => {
                let mut j = DMatrix::zeros(1, p);
                j[(0, 0)] = 3.0 * x[0] * x[0];
                j
            }
        }
    }
}

impl Evaluator for Builtin {
    fn input_dim(&self) -> usize {
        match self {
            Builtin::Linear { h } => h.ncols(),
            Builtin::Sin1d { p } | Builtin::ExpComponentwise { p } | Builtin::Cubic1d { p } => *p,
            Builtin::QuadraticDiag { curvature } => curvature.len(),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Builtin::Linear { h } => h.nrows(),
            Builtin::Sin1d { .. } | Builtin::Cubic1d { .. } => 1,
            Builtin::ExpComponentwise { p } => *p,
            Builtin::QuadraticDiag { curvature } => curvature.len(),
        }
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.input_dim();
        if x.len() != p {
            return Err(Error::dims("forward input", p, x.len()));
        }
        Ok(match self {
            Builtin::Linear { h } => h * x,
            Builtin::Sin1d { .. } => DVector::from_element(1, x[0].sin()),
            Builtin::ExpComponentwise { .. } => x.map(f64::exp),
            Builtin::QuadraticDiag { curvature } => curvature.zip_map(x, |k, xi| k * xi * xi),
            Builtin::Cubic1d { .. } => DVector::from_element(1, x[0].powi(3)),
        })
    }

    fn describe(&self) -> String {
        format!("builtin:{}", self.name())
    }
}

/// Forward model run as an external program.
///
/// Protocol: the program reads one line of `p` whitespace-separated decimals
/// per evaluation and answers with one line of `q` decimals, flushing after
/// each line. The process is launched once per batch; stdin is closed at the
/// end of the batch. A nonzero exit, a malformed line, or a reply slower than
/// the timeout is an `EvaluatorFailure`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubprocessEvaluator {
    argv: Vec<String>,
    p: usize,
    q: usize,
    timeout: Duration,
}

impl SubprocessEvaluator {
    pub fn new(argv: Vec<String>, p: usize, q: usize) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::InvalidArgument("empty forward command".into()));
        }
        let ms = std::env::var(EVAL_TIMEOUT_ENV)
            .ok()
            .and_then(|s| s.trim().parse::<u64>().ok())
            .unwrap_or(DEFAULT_EVAL_TIMEOUT_MS);
        Ok(Self {
            argv,
            p,
            q,
            timeout: Duration::from_millis(ms),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }

    fn spawn(&self) -> Result<Child> {
        Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::EvaluatorFailure(format!("cannot launch {:?}: {e}", self.argv[0])))
    }

    fn parse_line(&self, line: &str) -> Result<DVector<f64>> {
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::EvaluatorFailure(format!("malformed output line {line:?}: {e}")))?;
        if values.len() != self.q {
            return Err(Error::EvaluatorFailure(format!(
                "expected {} values, got {} in line {line:?}",
                self.q,
                values.len()
            )));
        }
        Ok(DVector::from_vec(values))
    }

    fn run_batch(&self, child: &mut Child, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            if x.len() != self.p {
                return Err(Error::dims("forward input", self.p, x.len()));
            }
            let line: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            writeln!(stdin, "{}", line.join(" "))
                .and_then(|_| stdin.flush())
                .map_err(|e| Error::EvaluatorFailure(format!("write to child failed: {e}")))?;
            match rx.recv_timeout(self.timeout) {
                Ok(Ok(reply)) => out.push(self.parse_line(&reply)?),
                Ok(Err(e)) => return Err(Error::EvaluatorFailure(format!("read from child failed: {e}"))),
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    return Err(Error::EvaluatorFailure(format!(
                        "no reply within {} ms",
                        self.timeout.as_millis()
                    )))
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    return Err(Error::EvaluatorFailure("child closed its output early".into()))
                }
            }
        }
        drop(stdin);
        Ok(out)
    }
}

impl Evaluator for SubprocessEvaluator {
    fn input_dim(&self) -> usize {
        self.p
    }
    fn output_dim(&self) -> usize {
        self.q
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.eval_batch(std::slice::from_ref(x))?.remove(0))
    }

    fn eval_batch(&self, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let mut child = self.spawn()?;
        let result = self.run_batch(&mut child, xs);
        if result.is_err() {
            let _ = child.kill();
            let _ = child.wait();
            return result;
        }
        let status = child
            .wait()
            .map_err(|e| Error::EvaluatorFailure(format!("wait failed: {e}")))?;
        if !status.success() {
            return Err(Error::EvaluatorFailure(format!("child exited with {status}")));
        }
        result
    }

    fn describe(&self) -> String {
        format!("command:{}", self.argv.join(" "))
    }
}

impl fmt::Debug for dyn Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Evaluator({}, {} -> {})", self.describe(), self.input_dim(), self.output_dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn builtin_dims_and_values() {
        let g = Builtin::QuadraticDiag { curvature: dvector![1.0, 2.0] };
        assert_eq!((g.input_dim(), g.output_dim()), (2, 2));
        assert_eq!(g.eval(&dvector![3.0, 1.0]).unwrap(), dvector![9.0, 2.0]);
        let lin = Builtin::Linear { h: dmatrix![1.0, 2.0, 3.0] };
        assert_eq!(lin.eval(&dvector![1.0, 1.0, 1.0]).unwrap(), dvector![6.0]);
        assert!(lin.eval(&dvector![1.0]).is_err());
        let c = Builtin::Cubic1d { p: 2 };
        assert_eq!(c.eval(&dvector![2.0, 5.0]).unwrap(), dvector![8.0]);
        assert_eq!(c.jacobian(&dvector![2.0, 5.0]), dmatrix![12.0, 0.0]);
    }

    #[test]
    fn closure_output_length_is_checked() {
        let g = FnEvaluator::new(1, 2, "bad", |x: &DVector<f64>| x.clone());
        assert!(matches!(g.eval(&dvector![1.0]), Err(Error::EvaluatorFailure(_))));
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_round_trip() {
        // replies with the sum and the product of each input pair
        let script = "import sys\nfor line in sys.stdin:\n    a, b = map(float, line.split())\n    print(repr(a + b), repr(a * b), flush=True)\n";
        let argv = vec!["python3".to_string(), "-c".to_string(), script.to_string()];
        let g = SubprocessEvaluator::new(argv, 2, 2).unwrap();
        let ys = g.eval_batch(&[dvector![1.5, 2.0], dvector![-1.0, 4.0]]).unwrap();
        assert_eq!(ys[0], dvector![3.5, 3.0]);
        assert_eq!(ys[1], dvector![3.0, -4.0]);
    }

    #[cfg(unix)]
    #[test]
    fn subprocess_failures() {
        let script = "import sys\nfor line in sys.stdin:\n    print(line.split()[0], flush=True)\n";
        let wrong_arity =
            SubprocessEvaluator::new(vec!["python3".into(), "-c".into(), script.into()], 2, 2).unwrap();
        assert!(matches!(wrong_arity.eval(&dvector![1.0, 2.0]), Err(Error::EvaluatorFailure(_))));

        let exits = SubprocessEvaluator::new(vec!["false".into()], 1, 1).unwrap();
        assert!(matches!(exits.eval(&dvector![1.0]), Err(Error::EvaluatorFailure(_))));

        let missing = SubprocessEvaluator::new(vec!["/nonexistent/forward-model".into()], 1, 1).unwrap();
        assert!(matches!(missing.eval(&dvector![1.0]), Err(Error::EvaluatorFailure(_))));

        let slow = SubprocessEvaluator::new(vec!["sleep".into(), "5".into()], 1, 1)
            .unwrap()
            .with_timeout(Duration::from_millis(100));
        assert!(matches!(slow.eval(&dvector![1.0]), Err(Error::EvaluatorFailure(_))));
    }
}
