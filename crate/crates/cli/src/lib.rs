//! Scenario runner for `bundle-qm`: load a TOML scenario, run its
//! measurements, and produce a JSON report plus CSV series.

pub mod config;
pub mod emit;
pub mod error;
pub mod measure;
pub mod report;
pub mod scenario;

use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use config::{parse_config, ScenarioConfig};
pub use error::{ConfigError, EmitError};
pub use report::{MeasurementRecord, Report, Series, Summary};
pub use scenario::{build, load_config, Scenario};

/// Everything a run produced, before anything is written.
#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub series: Vec<Series>,
    pub elapsed: Duration,
    pub per_measurement: Vec<Duration>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn run_one(sc: &Scenario, m: &measure::Prepared, tol_scale: f64) -> (MeasurementRecord, Option<Series>, Duration) {
    let started = Instant::now();
    let tolerance = m.tolerance * tol_scale;
    let mut record = MeasurementRecord {
        name: m.name.clone(),
        op: m.info.op.to_string(),
        law: m.info.law.to_string(),
        inputs: m.inputs.clone(),
        values: Default::default(),
        residual: None,
        tolerance,
        pass: false,
        diagnostics: None,
        error: None,
        csv: None,
    };
    let mut series = None;
    match m.execute(sc) {
        Ok(out) => {
            record.residual = finite(out.residual);
            record.pass = record.residual.is_some_and(|r| r < tolerance);
            record.values = out.values;
            record.diagnostics = out.diagnostics;
            if let Some(s) = out.series {
                record.csv = Some(s.file.clone());
                series = Some(s);
            }
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    (record, series, started.elapsed())
}

/// Run every measurement (in parallel) and collect results in declaration order.
pub fn run_scenario(sc: &Scenario, tol_scale: f64) -> RunOutput {
    let started = Instant::now();
    let results: Vec<_> = sc.measurements.par_iter().map(|m| run_one(sc, m, tol_scale)).collect();
    let mut measurements = Vec::with_capacity(results.len());
    let mut series = Vec::new();
    let mut per_measurement = Vec::with_capacity(results.len());
    for (record, s, d) in results {
        measurements.push(record);
        series.extend(s);
        per_measurement.push(d);
    }
    let summary = report::summarize(&measurements);
    RunOutput {
        report: Report {
            report_version: report::REPORT_VERSION,
            scenario: sc.config.name.clone(),
            tol_scale,
            config: sc.config.clone(),
            measurements,
            summary,
        },
        series,
        elapsed: started.elapsed(),
        per_measurement,
    }
}
