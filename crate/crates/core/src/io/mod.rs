//! Documents in, reports out: the orchestration behind the command-line tool.

mod commands;
mod document;
mod format;

pub use document::{
    kernel_entries, parse_problem, BathDoc, GeneratorDoc, GeneratorKind, KernelEntry, LadderDoc, LevelDoc,
    ProblemDocument, QuantumDoc, ShiftDoc, SystemDoc, UnitaryKind, WeightDoc, DEFAULT_TOL,
};
pub use format::{format_f64, to_json, Table};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fluctuation::IdentityReport;

pub const COMMANDS: [&str; 11] = [
    "validate",
    "backward",
    "realize",
    "identities",
    "sample",
    "curve",
    "feasible",
    "optimal-work",
    "landauer",
    "quantum",
    "demo",
];

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Command-line overrides; `None` defers to the document.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Options {
    pub beta: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<i64>,
    pub epsilon: Option<f64>,
    pub sweep: bool,
    /// Emit the command's table as CSV instead of the JSON report.
    pub csv: bool,
    pub timestamp: bool,
    /// Demo name for `demo`.
    pub demo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical document and effective options.
    pub input_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub pass: bool,
    /// Names of failed checks.
    pub violations: Vec<String>,
    pub checks: Vec<IdentityReport>,
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub exit_code: i32,
    pub report: Option<ReportDocument>,
    pub csv: Option<String>,
    /// What the tool prints: the CSV table with `--csv`, the JSON report
    /// otherwise; empty on input errors.
    pub text: String,
    pub error: Option<String>,
}

/// A command's checks, structured results and optional plot table.
pub(crate) struct CommandOutput {
    pub checks: Vec<IdentityReport>,
    pub results: serde_json::Value,
    pub table: Option<Table>,
}

pub(crate) fn flag(name: &str, ok: bool) -> IdentityReport {
    IdentityReport {
        name: name.into(),
        computed: if ok { 1.0 } else { 0.0 },
        target: 1.0,
        abs_error: if ok { 0.0 } else { 1.0 },
        pass: ok,
    }
}

/// Passes when `computed <= target + tol`.
pub(crate) fn upper_bound(name: &str, computed: f64, target: f64, tol: f64) -> IdentityReport {
    IdentityReport {
        name: name.into(),
        computed,
        target,
        abs_error: (computed - target).abs(),
        pass: computed <= target + tol,
    }
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn needs_document(command: &str) -> bool {
    !matches!(command, "landauer" | "demo")
}

fn apply_overrides(doc: &mut ProblemDocument, opts: &Options) -> Result<()> {
    if let Some(b) = opts.beta {
        doc.beta = b;
    }
    if let Some(t) = opts.tol {
        doc.tol = t;
    }
    if let Some(s) = opts.seed {
        doc.seed = s;
    }
    if let Some(n) = opts.samples {
        doc.samples = Some(n);
    }
    if let Some(e) = opts.epsilon {
        doc.epsilon = Some(e);
    }
    doc.validate()
}

fn digest(command: &str, doc: Option<&ProblemDocument>, opts: &Options) -> Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    if let Some(d) = doc {
        h.update(d.to_canonical_json()?.as_bytes());
    }
    let effective = Options {
        timestamp: false,
        ..opts.clone()
    };
    h.update(to_json(&effective)?.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn execute(command: &str, opts: &Options, input: Option<&str>) -> Result<(ReportDocument, Option<Table>)> {
    if !COMMANDS.contains(&command) {
        return Err(Error::Argument(format!(
            "unknown command '{command}'; expected one of {}",
            COMMANDS.join(", ")
        )));
    }
    let doc = match input {
        Some(text) => {
            let mut d = parse_problem(text)?;
            apply_overrides(&mut d, opts)?;
            Some(d)
        }
        None if needs_document(command) => {
            return Err(Error::Argument(format!("'{command}' needs a problem document")));
        }
        None => None,
    };
    log::debug!("running {command}");
    let out = commands::dispatch(command, doc.as_ref(), opts)?;
    let violations = out.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect::<Vec<_>>();
    let timestamp = opts.timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let report = ReportDocument {
        tool: "fluctwork".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        input_digest: digest(command, doc.as_ref(), opts)?,
        timestamp,
        pass: violations.is_empty(),
        violations,
        checks: out.checks,
        results: out.results,
    };
    Ok((report, out.table))
}

/// Runs one command on an optional JSON document. Exit code 0 when every
/// check passes, 1 on a verified violation, 2 on input errors.
pub fn run(command: &str, opts: &Options, input: Option<&str>) -> RunOutput {
    match execute(command, opts, input).and_then(|(report, table)| {
        let csv = table.map(|t| t.to_csv()).transpose()?;
        let json = to_json(&report)?;
        Ok((report, csv, json))
    }) {
        Ok((report, csv, json)) => {
            let text = match (&csv, opts.csv) {
                (Some(c), true) => c.clone(),
                _ => json,
            };
            RunOutput {
                exit_code: if report.pass { EXIT_PASS } else { EXIT_VIOLATION },
                report: Some(report),
                csv,
                text,
                error: None,
            }
        }
        Err(e) => RunOutput {
            exit_code: EXIT_INPUT,
            report: None,
            csv: None,
            text: String::new(),
            error: Some(e.to_string()),
        },
    }
}
