//! CSV emission, the JSON sidecar and the post-emission verifier.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::Table;
use crate::config::{Analysis, ExperimentConfig};

/// Nine significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn write_csv(path: &Path, table: &Table) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_sidecar(
    path: &Path,
    config: &ExperimentConfig,
    table: &Table,
    report: &VerifierReport,
) -> io::Result<()> {
    let doc = json!({
        "config": config,
        "analysis": table.analysis,
        "columns": table.columns,
        "rows": table.rows.len(),
        "diagnostics": table.diagnostics,
        "verifier": report,
    });
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.write_all(b"\n")?;
    w.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifierReport {
    pub rows_checked: usize,
    pub violations: Vec<String>,
}

impl VerifierReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `lo <= hi` up to a relative slack.
fn ordered(lo: f64, hi: f64, rel: f64) -> bool {
    lo <= hi + rel * hi.abs() + 1e-15
}

/// Re-reads an emitted CSV and checks the orderings each analysis guarantees.
pub fn verify_csv(path: &Path, analysis: Analysis) -> io::Result<VerifierReport> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut report = VerifierReport::default();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let v: Vec<f64> = record
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
            .collect::<io::Result<_>>()?;
        let get = |name: &str| col(name).map(|i| v[i]).unwrap_or(f64::NAN);
        let mut need = |ok: bool, what: &str| {
            if !ok {
                report.violations.push(format!("row {k}: {what}"));
            }
        };
        match analysis {
            Analysis::Fading => {
                for env in 1..=3 {
                    let (avg, ub) = (get(&format!("env{env}")), get(&format!("ub{env}")));
                    need(ordered(avg, ub, 1e-9), &format!("ub{env} >= env{env}"));
                    need((0.0..=0.5).contains(&avg), &format!("env{env} in [0, 0.5]"));
                }
            }
            Analysis::Joint => {
                let relaxed = get("pe_relaxed");
                let minlp = get("pe_minlp_small");
                let floor = get("pe_floor");
                let b = get("pe_scenario_b");
                let b_relaxed = get("pe_scenario_b_relaxed");
                need(ordered(relaxed, minlp, 1e-9), "pe_relaxed <= pe_minlp_small");
                need(ordered(minlp, floor, 1e-9), "pe_minlp_small <= pe_floor");
                need(ordered(relaxed, b_relaxed, 1e-6), "pe_relaxed <= pe_scenario_b_relaxed");
                need(ordered(b_relaxed, b, 1e-6), "pe_scenario_b_relaxed <= pe_scenario_b");
            }
            Analysis::Gains => {
                let opt = get("pe_opt");
                for other in ["pe_sub", "pe_equ", "pe_opt_b"] {
                    need(ordered(opt, get(other), 1e-9), &format!("pe_opt <= {other}"));
                }
                for rule in ["opt", "sub", "equ"] {
                    let (pe, asym) = (get(&format!("pe_{rule}")), get(&format!("asymptote_{rule}")));
                    need(ordered(asym, pe, 1e-12), &format!("asymptote_{rule} <= pe_{rule}"));
                }
            }
            Analysis::Simulation => {
                let pe = get("p_e");
                need((0.0..=1.0).contains(&pe), "p_e in [0, 1]");
            }
        }
        report.rows_checked += 1;
    }
    Ok(report)
}

/// Machine-readable error document for the error stream.
pub fn error_json(kind: &str, code: i32, message: &str, violations: &[Value]) -> String {
    json!({
        "error": kind,
        "exit_code": code,
        "message": message,
        "violations": violations,
    })
    .to_string()
}
