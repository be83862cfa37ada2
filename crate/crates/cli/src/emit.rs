//! Writing a run to disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::error::EmitError;
use crate::report::{Report, Series};

fn io_err(path: &Path, e: impl std::fmt::Display) -> EmitError {
    EmitError {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn csv_text(series: &Series) -> String {
    let mut text = series.header.join(",");
    text.push('\n');
    for row in &series.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    text
}

pub fn report_text(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report values are always serializable");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct Timing<'a> {
    scenario: &'a str,
    total_seconds: f64,
    measurements: Vec<(&'a str, f64)>,
}

/// Write the report, its CSV series and the timing sidecar. Returns the
/// report path.
pub fn write_run(
    dir: &Path,
    report_name: &str,
    report: &Report,
    series: &[Series],
    total: Duration,
    per_measurement: &[Duration],
) -> Result<PathBuf, EmitError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for s in series {
        let path = dir.join(&s.file);
        fs::write(&path, csv_text(s)).map_err(|e| io_err(&path, e))?;
    }
    let report_path = dir.join(report_name);
    fs::write(&report_path, report_text(report)).map_err(|e| io_err(&report_path, e))?;

    let timing = Timing {
        scenario: &report.scenario,
        total_seconds: total.as_secs_f64(),
        measurements: report
            .measurements
            .iter()
            .zip(per_measurement)
            .map(|(m, d)| (m.name.as_str(), d.as_secs_f64()))
            .collect(),
    };
    let timing_path = dir.join("timing.json");
    let text = serde_json::to_string_pretty(&timing).expect("timing is serializable");
    fs::write(&timing_path, text + "\n").map_err(|e| io_err(&timing_path, e))?;
    Ok(report_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_seventeen_significant_digits() {
        let series = Series {
            file: "x.csv".into(),
            header: ["s", "re_expect", "im_expect", "norm"],
            rows: vec![[0.1, -2.5, 0.0, 1.0]],
        };
        let text = csv_text(&series);
        assert_eq!(
            text,
            "s,re_expect,im_expect,norm\n\
             1.0000000000000001e-1,-2.5000000000000000e0,0.0000000000000000e0,1.0000000000000000e0\n"
        );
        let parsed: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(parsed, series.rows[0]);
    }
}
