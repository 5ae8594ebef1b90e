//! Command-line front end.
//!
//! Exit codes: 0 well-posed (or success), 1 ill-posed, 2 invalid input,
//! 3 inconclusive or degenerate. Reports go to stdout, diagnostics to stderr.

mod report_file;
mod spec_file;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditions::{
    self, full_report, ConditionVerdict, LinearizeRequest, Overall, ReportOptions,
};
use crate::error::Error;
use crate::fisher;
use crate::linearize::{self, Strategy, SurrogateQuality, DEFAULT_FD_STEP};
use crate::model::{linalg, validate_spec, ForwardModel, ValidatedSpec, DEFAULT_SEED};
use crate::oracle;

pub use report_file::{input_digest, render_report, ReportFile, TOOL, VERSION};
pub use spec_file::{parse_matrix_text, parse_vector_arg, SpecFile};

pub const EXIT_WELL_POSED: i32 = 0;
pub const EXIT_ILL_POSED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wellposed", version, about = "Well-posedness diagnostics for stochastic inversion problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate every applicable well-posedness condition.
    Check(CheckArgs),
    /// Print the closed-form Fisher information quantities.
    Fisher(FisherArgs),
    /// Build a linear surrogate of the forward model.
    Linearize(LinearizeArgs),
    /// Compare closed forms with Monte Carlo or finite-difference estimates.
    Oracle(OracleArgs),
    /// Sample an Inverse-Wishart prior restricted to the well-posed region.
    SamplePrior(SamplePriorArgs),
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    pub spec: PathBuf,
    /// Override the Fisher fraction constant.
    #[arg(long)]
    pub c: Option<f64>,
    /// Write the JSON report to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Linearize a black-box model at `mean`, at `opt` (optimized point), or at a point `x1,x2,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub linearize: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    /// Objective evaluations for `--linearize opt`.
    #[arg(long, default_value_t = 200)]
    pub opt_budget: usize,
}

#[derive(Debug, clap::Args)]
pub struct FisherArgs {
    pub spec: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Linearize a black-box model at `mean` or at a point `x1,x2,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub linearize: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Taylor,
    Mse,
    Kl,
}

#[derive(Debug, clap::Args)]
pub struct LinearizeArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum, default_value = "taylor")]
    pub strategy: StrategyArg,
    /// Taylor expansion point `x1,x2,...` (default: the input mean).
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Optimize the Taylor expansion point with this many objective evaluations.
    #[arg(long)]
    pub opt_budget: Option<usize>,
    /// Monte Carlo samples for the mse and kl strategies.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleWhat {
    Sobol,
    FiFd,
    FiScore,
    M2,
}

#[derive(Debug, clap::Args)]
pub struct OracleArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum)]
    pub what: OracleWhat,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SamplePriorArgs {
    /// File holding the scale matrix, one row per line.
    #[arg(long)]
    pub lambda: PathBuf,
    #[arg(long)]
    pub nu: f64,
    /// Constraint direction `a1,a2,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Proposal limit (default: 1000 n).
    #[arg(long)]
    pub max_draws: Option<usize>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Check(a) => cmd_check(&a),
        Command::Fisher(a) => cmd_fisher(&a),
        Command::Linearize(a) => cmd_linearize(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::SamplePrior(a) => cmd_sample_prior(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

struct LoadedSpec {
    bytes: Vec<u8>,
    spec: ValidatedSpec,
}

fn load_spec(path: &Path, c: Option<f64>) -> std::result::Result<LoadedSpec, Failure> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| invalid(format!("{} is not UTF-8: {e}", path.display())))?;
    let mut raw = SpecFile::parse(text)?.to_problem_spec()?;
    if let Some(c) = c {
        raw.c = c;
    }
    Ok(LoadedSpec {
        spec: validate_spec(raw)?,
        bytes,
    })
}

fn write_json(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn point_arg(text: &str, p: usize) -> std::result::Result<DVector<f64>, Failure> {
    let x = parse_vector_arg(text)?;
    if x.len() != p {
        return Err(invalid(format!("point needs p = {p} coordinates, got {}", x.len())));
    }
    Ok(x)
}

fn linearize_request(arg: Option<&str>, p: usize, budget: usize) -> std::result::Result<LinearizeRequest, Failure> {
    Ok(match arg {
        None => LinearizeRequest::None,
        Some("mean") => LinearizeRequest::Mean,
        Some("opt") => LinearizeRequest::Optimize { budget },
        Some(x) => LinearizeRequest::Point(point_arg(x, p)?),
    })
}

pub fn exit_code(overall: Overall) -> i32 {
    match overall {
        Overall::WellPosed => EXIT_WELL_POSED,
        Overall::IllPosed => EXIT_ILL_POSED,
        Overall::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn cmd_check(args: &CheckArgs) -> CmdResult {
    let loaded = load_spec(&args.spec, args.c)?;
    let spec = &loaded.spec;
    let request = linearize_request(args.linearize.as_deref(), spec.p(), args.opt_budget)?;
    if request != LinearizeRequest::None && spec.forward().linear_map().is_some() {
        eprintln!("note: forward model is linear; --linearize ignored");
    }
    let options = ReportOptions {
        linearize: request,
        fd_step: args.fd_step,
    };
    let report = full_report(spec, &options)?;
    let file = ReportFile::new(&loaded.bytes, spec.c(), report);
    print!("{}", file.render());
    if let Some(path) = &args.json {
        write_json(path, &file.to_json())?;
    }
    Ok(exit_code(file.report.overall))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherOutput {
    pub tool: String,
    pub version: String,
    pub input_digest: String,
    #[serde(with = "crate::precise")]
    pub tau2: f64,
    /// Information about `tau2` in the signal `H X`.
    #[serde(with = "crate::precise")]
    pub i_signal: f64,
    /// Information about `tau2` in the observable `H X + eps`.
    #[serde(with = "crate::precise")]
    pub i_observed: f64,
    #[serde(with = "crate::precise::vec")]
    pub psi_spectrum: Vec<f64>,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub mean_block_trace_signal: Option<f64>,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub mean_block_trace_observed: Option<f64>,
}

fn surrogate_h(
    spec: &ValidatedSpec,
    linearize: Option<&str>,
    fd_step: f64,
) -> std::result::Result<DMatrix<f64>, Failure> {
    match spec.forward() {
        ForwardModel::Linear(h) => Ok(h.clone()),
        ForwardModel::BlackBox(g) => {
            let x0 = match linearize {
                None => {
                    return Err(invalid(
                        "forward model is nonlinear; pass --linearize mean or --linearize x1,x2,... to use its Taylor surrogate",
                    ))
                }
                Some("mean") => spec.input().mu().clone(),
                Some(x) => point_arg(x, spec.p())?,
            };
            Ok(linearize::taylor_linearize(g.as_ref(), &x0, fd_step)?.h)
        }
    }
}

fn cmd_fisher(args: &FisherArgs) -> CmdResult {
    let loaded = load_spec(&args.spec, None)?;
    let spec = &loaded.spec;
    let tau2 = spec
        .input()
        .tau2()
        .map_err(|_| invalid("the Fisher information about tau2 needs an isotropic input covariance (gamma.tau2)"))?;
    let h = surrogate_h(spec, args.linearize.as_deref(), args.fd_step)?;
    let sigma = spec.noise().sigma();
    let psi = fisher::psi_eigenvalues(&h, sigma)?;
    let (signal_block, observed_block) = match (
        fisher::fisher_blocks_linear(&h, sigma, tau2, true),
        fisher::fisher_blocks_linear(&h, sigma, tau2, false),
    ) {
        (Ok(s), Ok(o)) => (Some(s.mean_block.trace()), Some(o.mean_block.trace())),
        _ => (None, None),
    };
    let out = FisherOutput {
        tool: TOOL.into(),
        version: VERSION.into(),
        input_digest: input_digest(&loaded.bytes),
        tau2,
        i_signal: fisher::fisher_signal_tau2(spec.q(), tau2),
        i_observed: fisher::fisher_observed_from_spectrum(&psi, tau2),
        psi_spectrum: psi.iter().copied().collect(),
        mean_block_trace_signal: signal_block,
        mean_block_trace_observed: observed_block,
    };
    let mut text = String::new();
    let _ = writeln!(text, "tau2 = {}", out.tau2);
    let _ = writeln!(text, "I_signal(tau2)   = {}", out.i_signal);
    let _ = writeln!(text, "I_observed(tau2) = {}", out.i_observed);
    let eigs: Vec<String> = out.psi_spectrum.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(text, "spectrum of Psi  = [{}]", eigs.join(", "));
    if let (Some(s), Some(o)) = (out.mean_block_trace_signal, out.mean_block_trace_observed) {
        let _ = writeln!(text, "trace of mean block: signal {s}, observed {o}");
    }
    print!("{text}");
    if let Some(path) = &args.json {
        write_json(path, &to_json(&out))?;
    }
    Ok(EXIT_WELL_POSED)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizeOutput {
    pub tool: String,
    pub version: String,
    pub input_digest: String,
    pub strategy: Strategy,
    #[serde(with = "crate::precise::vec")]
    pub x0: Vec<f64>,
    #[serde(with = "crate::precise::rows")]
    pub h: Vec<Vec<f64>>,
    #[serde(with = "crate::precise::vec")]
    pub offset: Vec<f64>,
    pub quality: SurrogateQuality,
    pub verdicts: Vec<ConditionVerdict>,
    pub notes: Vec<String>,
}

/// Fisher verdicts on a surrogate; `Err` carries a degeneracy note.
fn surrogate_verdicts(spec: &ValidatedSpec, h: &DMatrix<f64>) -> std::result::Result<Vec<ConditionVerdict>, String> {
    let (sigma, c) = (spec.noise().sigma(), spec.c());
    if h.nrows() > h.ncols() || linalg::ensure_full_row_rank(h).is_err() {
        let sv = linalg::singular_values(h);
        return Err(format!(
            "rank-deficient surrogate (singular values {:.3e} .. {:.3e}): Fisher conditions unavailable",
            sv[0],
            sv[sv.len() - 1]
        ));
    }
    let result = match spec.input().isotropic_tau2() {
        Some(tau2) => (|| {
            Ok(vec![
                conditions::fisher_condition_exact(h, sigma, tau2, c)?,
                conditions::sufficient_condition(h, sigma, tau2, c)?,
                conditions::necessary_condition(h, sigma, tau2, c)?,
            ])
        })(),
        None => conditions::general_gamma_condition(h, sigma, spec.input().gamma(), c).map(|v| vec![v]),
    };
    result.map_err(|e: Error| e.to_string())
}

fn cmd_linearize(args: &LinearizeArgs) -> CmdResult {
    let loaded = load_spec(&args.spec, args.c)?;
    let spec = &loaded.spec;
    let g = spec.forward().evaluator();
    let n = args.samples.unwrap_or(spec.oracle().n);
    let seed = args.seed.unwrap_or(spec.oracle().seed);
    let mut notes = Vec::new();
    let degenerate = |e: Error| match e {
        Error::RankDeficient { .. } | Error::AllPointsDegenerate | Error::M2NotPD => Failure {
            code: EXIT_INCONCLUSIVE,
            message: e.to_string(),
        },
        other => other.into(),
    };
    let (model, quality) = match args.strategy {
        StrategyArg::Taylor => {
            let x0 = match (&args.x0, args.opt_budget) {
                (Some(x), _) => point_arg(x, spec.p())?,
                (None, Some(budget)) => {
                    let tau2 = spec
                        .input()
                        .tau2()
                        .unwrap_or_else(|_| linalg::sym_eigenvalues(spec.input().gamma()).min());
                    let mu = spec.input().mu();
                    let opt = linearize::optimize_linearization_point(
                        g.as_ref(),
                        spec.noise().sigma(),
                        tau2,
                        mu,
                        mu,
                        budget,
                        args.fd_step,
                    )
                    .map_err(degenerate)?;
                    notes.push(format!("optimized linearization point, objective {}", opt.objective));
                    opt.x0_star
                }
                (None, None) => spec.input().mu().clone(),
            };
            let lin = linearize::taylor_linearize(g.as_ref(), &x0, args.fd_step)?;
            let fi_signal = spec.input().isotropic_tau2().map(|t| fisher::fisher_signal_tau2(spec.q(), t));
            (
                lin,
                SurrogateQuality {
                    fi_signal,
                    ..Default::default()
                },
            )
        }
        StrategyArg::Mse => {
            let fit = linearize::mse_linear_approx(g.as_ref(), spec.input(), n, seed)?;
            notes.push("least-squares surrogate; Fisher verdicts report feasibility only".into());
            (fit.model, fit.quality)
        }
        StrategyArg::Kl => {
            let fit = linearize::kl_optimal_fit(g.as_ref(), spec.input(), n, seed).map_err(degenerate)?;
            (fit.model, fit.quality)
        }
    };
    let (verdicts, code) = match surrogate_verdicts(spec, &model.h) {
        Ok(v) => (v, EXIT_WELL_POSED),
        Err(note) => {
            notes.push(note);
            (Vec::new(), EXIT_INCONCLUSIVE)
        }
    };
    let out = LinearizeOutput {
        tool: TOOL.into(),
        version: VERSION.into(),
        input_digest: input_digest(&loaded.bytes),
        strategy: model.strategy,
        x0: model.x0.iter().copied().collect(),
        h: crate::precise::rows::of(&model.h),
        offset: model.offset.iter().copied().collect(),
        quality,
        verdicts,
        notes,
    };
    print!("{}", render_linearize(&out));
    if let Some(path) = &args.json {
        write_json(path, &to_json(&out))?;
    }
    Ok(code)
}

fn render_linearize(out: &LinearizeOutput) -> String {
    let mut text = String::new();
    let strategy = serde_json::to_value(out.strategy).expect("strategy serializes");
    let _ = writeln!(text, "strategy: {}", strategy.as_str().unwrap_or_default());
    let _ = writeln!(text, "x0 = {:?}", out.x0);
    let _ = writeln!(text, "H =");
    for row in &out.h {
        let _ = writeln!(text, "  {row:?}");
    }
    let _ = writeln!(text, "offset = {:?}", out.offset);
    if let Some(v) = out.quality.mse {
        let _ = writeln!(text, "mse = {v:e}");
    }
    if let Some(v) = out.quality.kl_residual {
        let _ = writeln!(text, "kl_residual = {v:e}");
    }
    if let Some(v) = out.quality.fi_signal {
        let _ = writeln!(text, "fi_signal = {v}");
    }
    if !out.verdicts.is_empty() {
        text.push('\n');
        report_file::render_verdicts(&mut text, &out.verdicts);
    }
    for note in &out.notes {
        let _ = writeln!(text, "note: {note}");
    }
    text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLine {
    pub quantity: String,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
    #[serde(with = "crate::precise")]
    pub estimate: f64,
    #[serde(default, with = "crate::precise::option", skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agree: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub tool: String,
    pub version: String,
    pub input_digest: String,
    pub what: OracleWhat,
    pub n: usize,
    pub seed: u64,
    pub lines: Vec<OracleLine>,
}

/// Relative agreement required between the closed form and finite differences.
const FD_REL_TOL: f64 = 1e-4;
/// Absolute agreement required of Monte Carlo Sobol indices.
const SOBOL_TOL: f64 = 0.02;

fn linear_and_tau2(spec: &ValidatedSpec) -> std::result::Result<(DMatrix<f64>, f64), Failure> {
    let h = spec
        .forward()
        .linear_map()
        .ok_or_else(|| invalid("this oracle needs a linear forward model (forward.H)"))?
        .clone();
    let tau2 = spec
        .input()
        .tau2()
        .map_err(|_| invalid("this oracle needs an isotropic input covariance (gamma.tau2)"))?;
    Ok((h, tau2))
}

fn cmd_oracle(args: &OracleArgs) -> CmdResult {
    let loaded = load_spec(&args.spec, None)?;
    let spec = &loaded.spec;
    let n = args.n.unwrap_or(spec.oracle().n);
    let seed = args.seed.unwrap_or(spec.oracle().seed);
    let sigma = spec.noise().sigma();
    let lines = match args.what {
        OracleWhat::Sobol => {
            if spec.q() != 1 {
                return Err(invalid(format!("Sobol indices are defined for scalar output only (q = {})", spec.q())));
            }
            let g = spec.forward().evaluator();
            let s = oracle::mc_sobol_indices(g.as_ref(), spec.input(), spec.noise(), n, seed)?;
            let analytic = spec.forward().linear_map().map(|h| {
                let a = h.row(0).transpose();
                let v = (a.transpose() * spec.input().gamma() * &a)[(0, 0)];
                let s2 = sigma[(0, 0)];
                (v / (v + s2), s2 / (v + s2))
            });
            let line = |name: &str, closed: Option<f64>, r: &oracle::OracleResult<f64>| OracleLine {
                quantity: name.into(),
                closed_form: closed,
                estimate: r.estimate,
                std_error: Some(r.std_error),
                agree: closed.map(|c| (c - r.estimate).abs() <= SOBOL_TOL),
            };
            vec![
                line("S_X", analytic.map(|a| a.0), &s.s_x),
                line("S_eps", analytic.map(|a| a.1), &s.s_eps),
            ]
        }
        OracleWhat::FiFd => {
            let (h, tau2) = linear_and_tau2(spec)?;
            let closed = fisher::fisher_observed_tau2(&h, sigma, tau2)?;
            let fd = oracle::fd_fisher_tau2(&h, sigma, tau2, None)?;
            vec![OracleLine {
                quantity: "I_observed(tau2)".into(),
                closed_form: Some(closed),
                estimate: fd,
                std_error: None,
                agree: Some((closed - fd).abs() <= FD_REL_TOL * closed.abs()),
            }]
        }
        OracleWhat::FiScore => {
            let (h, tau2) = linear_and_tau2(spec)?;
            let closed = fisher::fisher_observed_tau2(&h, sigma, tau2)?;
            let s = oracle::score_variance_fi(&h, sigma, tau2, n, seed)?;
            vec![
                OracleLine {
                    quantity: "I_observed(tau2)".into(),
                    closed_form: Some(closed),
                    estimate: s.variance.estimate,
                    std_error: Some(s.variance.std_error),
                    agree: Some((closed - s.variance.estimate).abs() <= 3.0 * s.variance.std_error),
                },
                OracleLine {
                    quantity: "score mean".into(),
                    closed_form: Some(0.0),
                    estimate: s.mean.estimate,
                    std_error: Some(s.mean.std_error),
                    agree: Some(s.mean.estimate.abs() <= 3.0 * s.mean.std_error),
                },
            ]
        }
        OracleWhat::M2 => {
            let g = spec.forward().evaluator();
            let gamma = spec.input().gamma();
            if spec.input().mu().iter().any(|v| *v != 0.0) {
                eprintln!("note: the second moment is taken under X ~ N(0, Gamma); mu is ignored");
            }
            let m = oracle::mc_second_moment(g.as_ref(), gamma, n, seed)?;
            let exact = spec.forward().linear_map().map(|h| h * gamma * h.transpose());
            let q = spec.q();
            let mut lines = Vec::with_capacity(q * q);
            for i in 0..q {
                for j in 0..q {
                    let closed = exact.as_ref().map(|e| e[(i, j)]);
                    lines.push(OracleLine {
                        quantity: format!("M2[{i},{j}]"),
                        closed_form: closed,
                        estimate: m.estimate[(i, j)],
                        std_error: Some(m.std_error),
                        agree: closed.map(|c| (c - m.estimate[(i, j)]).abs() <= 4.0 * m.std_error),
                    });
                }
            }
            lines
        }
    };
    let out = OracleOutput {
        tool: TOOL.into(),
        version: VERSION.into(),
        input_digest: input_digest(&loaded.bytes),
        what: args.what,
        n,
        seed,
        lines,
    };
    let mut text = String::new();
    let _ = writeln!(text, "{:<18}  {:>24}  {:>24}  {:>12}  agree", "quantity", "closed form", "oracle", "std error");
    for l in &out.lines {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.16e}"));
        let agree = l.agree.map_or("-", |a| if a { "yes" } else { "no" });
        let se = l.std_error.map_or("-".to_string(), |x| format!("{x:.3e}"));
        let _ = writeln!(
            text,
            "{:<18}  {:>24}  {:>24}  {:>12}  {agree}",
            l.quantity,
            opt(l.closed_form),
            format!("{:.16e}", l.estimate),
            se
        );
    }
    print!("{text}");
    if let Some(path) = &args.json {
        write_json(path, &to_json(&out))?;
    }
    Ok(EXIT_WELL_POSED)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorOutput {
    pub tool: String,
    pub version: String,
    #[serde(with = "crate::precise")]
    pub acceptance_rate: f64,
    pub draws: usize,
    /// Accepted covariance matrices, each row-major.
    pub samples: Vec<PriorMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorMatrix(#[serde(with = "crate::precise::rows")] pub Vec<Vec<f64>>);

fn cmd_sample_prior(args: &SamplePriorArgs) -> CmdResult {
    let text = std::fs::read_to_string(&args.lambda)
        .map_err(|e| invalid(format!("cannot read {}: {e}", args.lambda.display())))?;
    let lambda = parse_matrix_text(&text)?;
    let a = parse_vector_arg(&args.a)?;
    let max_draws = args.max_draws.unwrap_or_else(|| args.n.saturating_mul(1000));
    let sample = match conditions::constrained_iw_prior_sample(&lambda, args.nu, &a, args.sigma2, args.n, args.seed, max_draws) {
        Ok(s) => s,
        Err(e @ Error::AcceptanceTooLow { .. }) => {
            return Err(Failure {
                code: EXIT_ILL_POSED,
                message: e.to_string(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    eprintln!(
        "accepted {} of {} draws (rate {:.4})",
        sample.samples.len(),
        sample.draws,
        sample.acceptance_rate
    );
    let out = PriorOutput {
        tool: TOOL.into(),
        version: VERSION.into(),
        acceptance_rate: sample.acceptance_rate,
        draws: sample.draws,
        samples: sample.samples.iter().map(|m| PriorMatrix(crate::precise::rows::of(m))).collect(),
    };
    print!("{}", to_json(&out));
    Ok(EXIT_WELL_POSED)
}
