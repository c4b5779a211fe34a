//! Check records and reports shared by the verification suites and the CLI.

use std::io::Write;

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "oplab-report/1";

/// One compared quantity. `residual ≤ tolerance` decides `passed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub suite: String,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub runtime_ms: f64,
}

impl CheckRecord {
    fn build(suite: &str, check: &str, lhs: f64, rhs: f64, residual: f64, tolerance: f64) -> Self {
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            lhs,
            rhs,
            residual,
            tolerance,
            // NaN residuals fail.
            passed: residual <= tolerance,
            runtime_ms: 0.0,
        }
    }

    /// `|lhs - rhs| / max(|rhs|, 1e-300) ≤ tol`.
    pub fn relative(suite: &str, check: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(suite, check, lhs, rhs, (lhs - rhs).abs() / rhs.abs().max(1e-300), tol)
    }

    /// `|lhs - rhs| ≤ tol`.
    pub fn absolute(suite: &str, check: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(suite, check, lhs, rhs, (lhs - rhs).abs(), tol)
    }

    /// `lhs ≤ rhs` up to `tol`: the residual is `max(0, lhs - rhs)`.
    pub fn at_most(suite: &str, check: &str, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self::build(suite, check, lhs, rhs, (lhs - rhs).max(0.0), tol)
    }

    /// A residual that must not exceed `tol`; `rhs` is zero.
    pub fn residual(suite: &str, check: &str, residual: f64, tol: f64) -> Self {
        Self::build(suite, check, residual, 0.0, residual, tol)
    }

    /// A count of failures that must be zero.
    pub fn count(suite: &str, check: &str, failures: usize, trials: usize) -> Self {
        Self::build(suite, check, failures as f64, trials as f64, failures as f64, 0.0)
    }

    /// A boolean outcome.
    pub fn flag(suite: &str, check: &str, holds: bool) -> Self {
        let r = if holds { 0.0 } else { 1.0 };
        Self::build(suite, check, r, 0.0, r, 0.0)
    }

    pub fn timed(mut self, runtime_ms: f64) -> Self {
        self.runtime_ms = runtime_ms;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub version: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema: String,
    pub records: Vec<CheckRecord>,
    pub overall: bool,
    pub environment: Environment,
}

impl Report {
    pub fn new(records: Vec<CheckRecord>, seed: Option<u64>) -> Self {
        Report {
            schema: REPORT_SCHEMA.into(),
            overall: records.iter().all(|r| r.passed),
            records,
            environment: Environment { version: env!("CARGO_PKG_VERSION").into(), seed },
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed)
    }

    /// The report with every `runtime_ms` zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Report {
        let mut out = self.clone();
        for r in &mut out.records {
            r.runtime_ms = 0.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Non-finite numbers are written as `null` in JSON and as `NaN`/`inf` in CSV.
pub fn emit_report(report: &Report, format: Format, out: &mut impl Write) -> std::io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, report).map_err(std::io::Error::other)?;
            writeln!(out)
        }
        Format::Csv => {
            writeln!(out, "suite,check,lhs,rhs,residual,tolerance,passed,runtime_ms")?;
            for r in &report.records {
                writeln!(
                    out,
                    "{},{},{:e},{:e},{:e},{:e},{},{:.3}",
                    csv_field(&r.suite),
                    csv_field(&r.check),
                    r.lhs,
                    r.rhs,
                    r.residual,
                    r.tolerance,
                    r.passed,
                    r.runtime_ms
                )?;
            }
            Ok(())
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_passes() {
        let r = Report::new(Vec::new(), None);
        assert!(r.overall);
        let mut buf = Vec::new();
        emit_report(&r, Format::Json, &mut buf).unwrap();
        let back: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back["overall"], true);
        assert_eq!(back["records"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn record_constructors() {
        assert!(CheckRecord::relative("s", "c", 1.0 + 1e-12, 1.0, 1e-10).passed);
        assert!(!CheckRecord::relative("s", "c", 2.0, 1.0, 1e-10).passed);
        assert!(CheckRecord::at_most("s", "c", 0.5, 1.0, 0.0).passed);
        assert!(!CheckRecord::at_most("s", "c", 1.5, 1.0, 0.1).passed);
        assert!(!CheckRecord::residual("s", "c", f64::NAN, 1.0).passed);
        assert!(CheckRecord::count("s", "c", 0, 10).passed);
        assert!(!CheckRecord::flag("s", "c", false).passed);
    }

    #[test]
    fn failing_record_in_csv() {
        let r = Report::new(vec![CheckRecord::residual("kms", "a,b", 1.0, 0.5).timed(2.0)], Some(7));
        assert!(!r.overall);
        let mut buf = Vec::new();
        emit_report(&r, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("kms,\"a,b\",") && row.contains(",false,"), "{row}");
    }

    #[test]
    fn json_round_trip() {
        let r = Report::new(vec![CheckRecord::relative("x", "y", 1.0, 1.0, 1e-12)], Some(1));
        let mut buf = Vec::new();
        emit_report(&r, Format::Json, &mut buf).unwrap();
        let back: Report = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, r);
    }
}
