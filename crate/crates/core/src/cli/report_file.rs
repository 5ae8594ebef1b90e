//! Machine-readable reports and their text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conditions::{ConditionVerdict, WellPosednessReport};

pub const TOOL: &str = "wellposed";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the spec file bytes.
pub fn input_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Envelope written by `check --json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub input_digest: String,
    #[serde(with = "crate::precise")]
    pub c: f64,
    pub report: WellPosednessReport,
}

impl ReportFile {
    pub fn new(spec_bytes: &[u8], c: f64, report: WellPosednessReport) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            input_digest: input_digest(spec_bytes),
            c,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn render(&self) -> String {
        render_report(&self.report, self.c)
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        format!("{v}")
    }
}

pub fn render_verdicts(out: &mut String, verdicts: &[ConditionVerdict]) {
    let width = verdicts.iter().map(|v| v.name.len()).max().unwrap_or(4).max(9);
    let _ = writeln!(
        out,
        "{:<width$}  {:<10}  {:>14}  {:>14}  {:>14}  {:<5}",
        "condition", "kind", "lhs", "rhs", "margin", "holds"
    );
    for v in verdicts {
        let kind = serde_json::to_value(v.kind).expect("kind serializes");
        let _ = writeln!(
            out,
            "{:<width$}  {:<10}  {:>14}  {:>14}  {:>14}  {:<5}",
            v.name,
            kind.as_str().unwrap_or_default(),
            num(v.lhs),
            num(v.rhs),
            num(v.margin),
            if v.holds { "yes" } else { "no" }
        );
        let _ = writeln!(out, "{:<width$}    {}{}", "", v.formula, if v.strict { "" } else { "  (non-strict)" });
        if let Some(note) = &v.note {
            let _ = writeln!(out, "{:<width$}    note: {note}", "");
        }
    }
}

pub fn render_report(report: &WellPosednessReport, c: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "overall: {}   (c = {c})", report.overall.as_str());
    if let Some(k) = report.condition_number {
        let _ = writeln!(out, "condition number of H: {}", num(k));
    }
    if let Some(id) = report.identifiability {
        let _ = writeln!(out, "identifiability: injective = {}, count_ok = {}", id.injective, id.count_ok);
    }
    if !report.psi_spectrum.is_empty() {
        let eigs: Vec<String> = report.psi_spectrum.iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "spectrum of Psi: [{}]", eigs.join(", "));
    }
    if let Some(lin) = &report.linearization {
        let x0: Vec<String> = lin.x0.iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "linearized at x0 = [{}]", x0.join(", "));
    }
    if !report.verdicts.is_empty() {
        out.push('\n');
        render_verdicts(&mut out, &report.verdicts);
    }
    for note in &report.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}
