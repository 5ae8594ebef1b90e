use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;

use wellposed::cli::ReportFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wellposed"))
}

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/specs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

const IDENTITY_TAU1: &str = "p = 2\nq = 2\nmu = [0.0, 0.0]\n[gamma]\ntau2 = 1.0\n[sigma]\nsigma2 = 1.0\n[forward]\nH = [1.0, 0.0, 0.0, 1.0]\n";

#[test]
fn check_exit_codes_follow_the_verdict() {
    let path = spec("identity_wellposed.toml");
    assert_eq!(code(&run(&["check", path.to_str().unwrap()])), 0);
    let path = spec("identity_illposed.toml");
    assert_eq!(code(&run(&["check", path.to_str().unwrap()])), 1);
    let path = spec("malformed.toml");
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("4 entries"));
}

#[test]
fn check_c_override_flips_the_verdict() {
    let path = spec("identity_wellposed.toml");
    assert_eq!(code(&run(&["check", path.to_str().unwrap(), "--c", "1.2"])), 1);
    assert_eq!(code(&run(&["check", path.to_str().unwrap(), "--c", "1.0"])), 2);
}

#[test]
fn check_json_embeds_version_digest_and_full_precision() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("r.json");
    let path = spec("identity_wellposed.toml");
    let out = run(&["check", path.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&json).unwrap();
    let report = ReportFile::from_json(&text).unwrap();
    assert_eq!(report.tool, "wellposed");
    assert_eq!(report.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(report.input_digest.len(), 64);
    assert_eq!(report.to_json(), text);
    assert_eq!(report.render(), String::from_utf8(out.stdout).unwrap());
    assert!(text.contains("\"formula\""));
    let v: Value = serde_json::from_str(&text).unwrap();
    let lhs = v["report"]["verdicts"][0]["lhs"].to_string();
    assert!(lhs.split('e').next().unwrap().len() >= 18, "{lhs}");
}

#[test]
fn check_black_box_policy() {
    let path = spec("sin1d.toml");
    let p = path.to_str().unwrap();
    assert_eq!(code(&run(&["check", p])), 3);
    assert_eq!(code(&run(&["check", p, "--linearize", "mean"])), 0);
    assert_eq!(code(&run(&["check", p, "--linearize", "1.5707963267948966"])), 3);
    assert_eq!(code(&run(&["check", p, "--linearize", "1,2"])), 2);
    assert_eq!(code(&run(&["check", p, "--linearize", "opt", "--opt-budget", "40"])), 0);
}

#[test]
fn fisher_prints_closed_forms() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "s.toml", IDENTITY_TAU1);
    let json = dir.path().join("f.json");
    let out = run(&["fisher", &p, "--json", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("I_signal(tau2)   = 1\n"), "{stdout}");
    assert!(stdout.contains("I_observed(tau2) = 0.25\n"), "{stdout}");
    let v = read_json(&json);
    assert_eq!(num(&v["i_signal"]), 1.0);
    assert_eq!(num(&v["i_observed"]), 0.25);
    let spectrum: Vec<f64> = v["psi_spectrum"].as_array().unwrap().iter().map(num).collect();
    assert_eq!(spectrum, vec![1.0, 1.0]);
}

#[test]
fn fisher_needs_linearization_for_black_box() {
    let path = spec("sin1d.toml");
    let out = run(&["fisher", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--linearize"));
    assert_eq!(code(&run(&["fisher", path.to_str().unwrap(), "--linearize", "mean"])), 0);
}

#[test]
fn linearize_builtin_linear_recovers_h() {
    let dir = TempDir::new().unwrap();
    let text = IDENTITY_TAU1.replace("H = [1.0, 0.0, 0.0, 1.0]", "builtin = \"linear\"\nparams = { H = [1.0, 0.5, -0.25, 2.0] }");
    let p = write(&dir, "s.toml", &text);
    for strategy in ["taylor", "mse"] {
        let json = dir.path().join(format!("{strategy}.json"));
        let out = run(&["linearize", &p, "--strategy", strategy, "--samples", "2000", "--json", json.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = read_json(&json);
        let h: Vec<f64> = v["h"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(num)).collect();
        for (got, want) in h.iter().zip([1.0, 0.5, -0.25, 2.0]) {
            assert!((got - want).abs() < 1e-9, "{strategy}: {h:?}");
        }
        if strategy == "mse" {
            assert!(num(&v["quality"]["mse"]) < 1e-20);
        }
    }
}

#[test]
fn linearize_kl_on_quadratic_matches_second_moment() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("kl.json");
    let path = spec("quadratic_diag.toml");
    let out = run(&["linearize", path.to_str().unwrap(), "--strategy", "kl", "--samples", "5000", "--json", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(num(&read_json(&json)["quality"]["kl_residual"]) <= 1e-10);
}

#[test]
fn linearize_at_degenerate_point_is_inconclusive() {
    let path = spec("sin1d.toml");
    let out = run(&["linearize", path.to_str().unwrap(), "--x0", "1.5707963267948966"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rank-deficient"));
}

#[test]
fn oracle_fisher_agreement() {
    let path = spec("identity_wellposed.toml");
    let p = path.to_str().unwrap();
    let dir = TempDir::new().unwrap();
    for what in ["fi-fd", "fi-score"] {
        let json = dir.path().join(format!("{what}.json"));
        let out = run(&["oracle", p, "--what", what, "--n", "20000", "--json", json.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        let v = read_json(&json);
        let line = &v["lines"][0];
        assert_eq!(line["agree"], Value::Bool(true), "{what}: {line}");
        let (closed, est) = (num(&line["closed_form"]), num(&line["estimate"]));
        if what == "fi-fd" {
            assert!((closed - est).abs() <= 1e-4 * closed);
        } else {
            assert!((closed - est).abs() <= 3.0 * num(&line["std_error"]));
        }
    }
}

#[test]
fn oracle_sobol_scalar_only() {
    let path = spec("identity_wellposed.toml");
    assert_eq!(code(&run(&["oracle", path.to_str().unwrap(), "--what", "sobol"])), 2);
    let path = spec("scalar_sobol.toml");
    let out = run(&["oracle", path.to_str().unwrap(), "--what", "sobol", "--n", "20000"]);
    assert_eq!(code(&out), 0);
    assert!(!String::from_utf8(out.stdout).unwrap().contains(" no\n"));
}

#[test]
fn sample_prior_vacuous_and_impossible() {
    let dir = TempDir::new().unwrap();
    let lambda = write(&dir, "lambda.txt", "2.0 0.3\n0.3 1.0\n");
    let out = run(&["sample-prior", "--lambda", &lambda, "--nu", "5", "--a", "1,-1", "--sigma2", "0", "--n", "50"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(num(&v["acceptance_rate"]), 1.0);
    assert_eq!(v["samples"].as_array().unwrap().len(), 50);
    let out = run(&[
        "sample-prior", "--lambda", &lambda, "--nu", "5", "--a", "1,-1", "--sigma2", "1e300", "--n", "5", "--max-draws", "200",
    ]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
}

#[test]
fn sample_prior_scalar_acceptance_matches_tail_probability() {
    // Gamma ~ IW(1, 3) in one dimension means 1/Gamma ~ chi2(3), so
    // P(Gamma > 0.5) = P(chi2(3) < 2).
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let trials = 200_000;
    let hits = (0..trials)
        .filter(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).map(|z: f64| z * z).sum::<f64>() < 2.0)
        .count();
    let oracle = hits as f64 / trials as f64;
    let dir = TempDir::new().unwrap();
    let lambda = write(&dir, "lambda.txt", "1.0\n");
    let out = run(&["sample-prior", "--lambda", &lambda, "--nu", "3", "--a", "1", "--sigma2", "0.5", "--n", "20000"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rate = num(&v["acceptance_rate"]);
    assert!((rate - oracle).abs() <= 0.02, "rate {rate} vs oracle {oracle}");
    assert!(v["samples"].as_array().unwrap().iter().all(|m| num(&m[0][0]) > 0.5));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["check"])), 2);
    assert_eq!(code(&run(&["check", "/nonexistent/spec.toml"])), 2);
    assert_eq!(code(&run(&["oracle", spec("scalar_sobol.toml").to_str().unwrap(), "--what", "bogus"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[cfg(unix)]
#[test]
fn check_with_external_forward_command() {
    // y = 2 x + eps, answered by a child process
    let dir = TempDir::new().unwrap();
    let script = "import sys\nfor line in sys.stdin:\n    print(repr(2.0 * float(line)), flush=True)\n";
    let script_path = write(&dir, "model.py", script);
    let text = format!(
        "p = 1\nq = 1\nmu = [0.0]\n[gamma]\ntau2 = 1.0\n[sigma]\nsigma2 = 1.0\n[forward]\ncommand = [\"python3\", {script_path:?}]\n"
    );
    let p = write(&dir, "s.toml", &text);
    let json = dir.path().join("r.json");
    let out = run(&["check", &p, "--linearize", "mean", "--json", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&json);
    let h = num(&v["report"]["linearization"]["h"][0][0]);
    assert!((h - 2.0).abs() < 1e-6, "{h}");
}
