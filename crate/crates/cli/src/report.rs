//! Report assembly: JSON objects with full provenance and plot-ready CSV
//! bodies. All numbers in CSV bodies are printed with 17 significant
//! digits so identical runs produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use uot::EnergyReport;

/// 17 significant digits; the shortest representation that survives a
/// round-trip for every f64.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{x:.16e}")
    }
}

/// A `(N, value, reference, gap)` row of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub n: usize,
    pub value: f64,
    pub reference: f64,
    pub gap: f64,
}

impl From<&EnergyReport> for CsvRow {
    fn from(r: &EnergyReport) -> Self {
        CsvRow {
            n: r.n,
            value: r.value,
            reference: r.reference,
            gap: r.gap,
        }
    }
}

/// Renders the CSV body. With `monotone_flag` a trailing column records
/// whether the absolute gap has been non-increasing so far.
pub fn render_csv(rows: &[CsvRow], monotone_flag: bool) -> String {
    let mut out = String::new();
    if monotone_flag {
        out.push_str("N,value,reference,gap,gap_monotone\n");
    } else {
        out.push_str("N,value,reference,gap\n");
    }
    let mut best_gap = f64::INFINITY;
    for row in rows {
        let abs_gap = row.gap.abs();
        let monotone = abs_gap <= best_gap;
        best_gap = best_gap.min(abs_gap);
        if monotone_flag {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.n,
                fmt17(row.value),
                fmt17(row.reference),
                fmt17(row.gap),
                monotone
            ));
        } else {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.n,
                fmt17(row.value),
                fmt17(row.reference),
                fmt17(row.gap)
            ));
        }
    }
    out
}

/// Writes the CSV body to `path` and the provenance object next to it as
/// `<path>.meta.json`. Returns the sidecar path.
pub fn write_csv_with_sidecar(
    path: &Path,
    rows: &[CsvRow],
    monotone_flag: bool,
    sidecar: &Value,
) -> std::io::Result<String> {
    fs::write(path, render_csv(rows, monotone_flag))?;
    let sidecar_path = format!("{}.meta.json", path.display());
    fs::write(&sidecar_path, serde_json::to_string_pretty(sidecar).unwrap())?;
    Ok(sidecar_path)
}

/// The machine-readable error object printed on failure.
pub fn error_object(kind: &str, message: &str) -> Value {
    json!({ "error": { "kind": kind, "message": message } })
}
