//! The JSON verification report.
//!
//! Matrices are written row-major as `[[re, im], ...]` rows so that a report
//! is readable without knowing the fibre dimension in advance.

use std::collections::BTreeMap;

use bundle_qm::linalg::CMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ScenarioConfig;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub achieved_tol: f64,
}

/// Sampled data that goes to a CSV file next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub file: String,
    pub header: [&'static str; 4],
    pub rows: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub name: String,
    pub op: String,
    pub law: String,
    pub inputs: BTreeMap<String, Value>,
    pub values: BTreeMap<String, Value>,
    /// `None` when the run failed or produced a non-finite number.
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub diagnostics: Option<Diagnostics>,
    pub error: Option<String>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub scenario: String,
    pub tol_scale: f64,
    pub config: ScenarioConfig,
    pub measurements: Vec<MeasurementRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.summary.passed == self.summary.total
    }

    pub fn record(&self, name: &str) -> Option<&MeasurementRecord> {
        self.measurements.iter().find(|m| m.name == name)
    }
}

pub fn summarize(records: &[MeasurementRecord]) -> Summary {
    let passed = records.iter().filter(|r| r.pass).count();
    let errored = records.iter().filter(|r| r.error.is_some()).count();
    Summary {
        total: records.len(),
        passed,
        failed: records.len() - passed,
        errored,
    }
}

pub fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        m.row_iter()
            .map(|row| Value::Array(row.iter().map(|z| serde_json::json!([z.re, z.im])).collect()))
            .collect(),
    )
}

/// Inverse of [`matrix_json`]; `None` if the value is not a square complex matrix.
pub fn matrix_from_json(v: &Value) -> Option<CMatrix> {
    let rows = v.as_array()?;
    let n = rows.len();
    let mut out = CMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array()?;
        if row.len() != n {
            return None;
        }
        for (j, z) in row.iter().enumerate() {
            let pair = z.as_array()?;
            out[(i, j)] = bundle_qm::linalg::c(pair.first()?.as_f64()?, pair.get(1)?.as_f64()?);
        }
    }
    Some(out)
}
