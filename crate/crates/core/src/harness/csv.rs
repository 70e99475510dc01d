//! CSV traces. Schema, fixed:
//!
//! ```text
//! k,mean_energy,predicted_energy,delta_k,std_error,discrepancy
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits, enough to
//! round-trip any `f64`. Empty fields mean "not applicable" (no prediction for sweep
//! algorithms, no standard error for exact or deterministic runs, undefined `delta_k`
//! at zero energy).

use std::fmt::Write;

use crate::analysis::ExpectationReport;

pub const CSV_HEADER: &str = "k,mean_energy,predicted_energy,delta_k,std_error,discrepancy";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub mean_energy: f64,
    pub predicted_energy: Option<f64>,
    pub delta_k: Option<f64>,
    pub std_error: Option<f64>,
    pub discrepancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTrace {
    pub rows: Vec<CsvRow>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// 17 significant digits.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn field(out: &mut String, x: Option<f64>) {
    out.push(',');
    if let Some(x) = x {
        out.push_str(&format_real(x));
    }
}

impl CsvTrace {
    pub fn from_report(report: &ExpectationReport) -> Self {
        let rows = report
            .k_values
            .iter()
            .map(|&k| CsvRow {
                k,
                mean_energy: report.expected_energy[k],
                predicted_energy: finite(report.predicted_energy[k]),
                delta_k: finite(report.delta[k]),
                std_error: report.std_error.as_ref().map(|s| s[k]),
                discrepancy: finite(report.discrepancy[k]),
            })
            .collect();
        Self { rows }
    }

    /// A single deterministic trajectory.
    pub fn from_energies(energies: &[f64]) -> Self {
        let rows = energies
            .iter()
            .enumerate()
            .map(|(k, &e)| CsvRow {
                k,
                mean_energy: e,
                predicted_energy: None,
                delta_k: None,
                std_error: None,
                discrepancy: None,
            })
            .collect();
        Self { rows }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            write!(out, "{}", r.k).unwrap();
            field(&mut out, Some(r.mean_energy));
            field(&mut out, r.predicted_energy);
            field(&mut out, r.delta_k);
            field(&mut out, r.std_error);
            field(&mut out, r.discrepancy);
            out.push('\n');
        }
        out
    }
}
