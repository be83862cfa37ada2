use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bundle_qm_cli::{emit, load_config, run_scenario, ConfigError, Report};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn bin(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bundle-qm"))
        .args(args)
        .output()
        .unwrap()
}

fn run_file(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<&std::ffi::OsStr> = vec![
        config.as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
        "--quiet".as_ref(),
    ];
    args.extend(extra.iter().map(|s| std::ffi::OsStr::new(*s)));
    bin(&args)
}

const MINIMAL: &str = r#"
dsl_version = 1
dimension = 2

[[hamiltonian]]
expr = "1"
basis = 1

[[paths]]
name = "clock"
kind = "rest"
spatial = [0.0, 0.0, 0.0]
domain = [0.0, 1.0]
"#;

fn with_measurement(body: &str) -> String {
    format!("{MINIMAL}\n[[measurements]]\n{body}\n")
}

fn invalid_key(err: ConfigError) -> (String, String) {
    match err {
        ConfigError::Invalid { key, message } => (key, message),
        other => panic!("expected a keyed error, got {other}"),
    }
}

#[test]
fn rabi_golden_file_loads() {
    let text = std::fs::read_to_string(scenario("rabi.toml")).unwrap();
    let sc = load_config(&text).unwrap();
    assert_eq!(sc.n, 2);
    assert_eq!(sc.config.hamiltonian.len(), 1);
    assert_eq!(sc.measurements.len(), sc.config.measurements.len());
}

#[test]
fn missing_dimension_names_the_key() {
    let err = load_config("dsl_version = 1\n").err().unwrap();
    assert!(
        matches!(err, ConfigError::Schema(ref m) if m.contains("dimension")),
        "{err}"
    );
}

#[test]
fn unknown_identifier_is_reported_with_its_key() {
    let text = MINIMAL.replace("expr = \"1\"", "expr = \"x9\"");
    let (key, message) = invalid_key(load_config(&text).err().unwrap());
    assert_eq!(key, "hamiltonian[0].expr");
    assert!(message.contains("x9"), "{message}");
}

#[test]
fn dsl_syntax_errors_carry_columns() {
    let text = MINIMAL.replace("expr = \"1\"", "expr = \"2 + * 3\"");
    let (_, message) = invalid_key(load_config(&text).err().unwrap());
    assert!(message.contains("column 5"), "{message}");
}

#[test]
fn load_time_checks() {
    let non_hermitian = MINIMAL.replace(
        "[[hamiltonian]]",
        "[basis]\nkind = \"custom\"\nmatrices = [{ re = [[0.0, 1.0], [0.0, 0.0]] }]\n\n[[hamiltonian]]",
    );
    let non_hermitian = non_hermitian.replace("basis = 1", "basis = 0");
    assert_eq!(invalid_key(load_config(&non_hermitian).err().unwrap()).0, "basis");

    let singular = format!("{MINIMAL}\n[metric]\nkind = \"diagonal\"\nvalues = [1.0, 0.0]\n");
    assert_eq!(invalid_key(load_config(&singular).err().unwrap()).0, "metric");

    let wrong_state = format!("{MINIMAL}\n[initial_state]\nre = [1.0, 0.0, 0.0]\n");
    assert_eq!(invalid_key(load_config(&wrong_state).err().unwrap()).0, "initial_state");

    let typo = format!("{MINIMAL}\ndimensoin = 3\n");
    assert!(matches!(load_config(&typo).err().unwrap(), ConfigError::Schema(_)));
}

#[test]
fn measurement_references_are_checked() {
    let unknown_path = with_measurement("name = \"m\"\nop = \"inverse\"\npath = \"nowhere\"");
    let (key, message) = invalid_key(load_config(&unknown_path).err().unwrap());
    assert_eq!(key, "measurements[0].path");
    assert!(message.contains("nowhere"));

    let unknown_op = with_measurement("name = \"m\"\nop = \"teleport\"");
    assert_eq!(
        invalid_key(load_config(&unknown_op).err().unwrap()).0,
        "measurements[0].op"
    );

    let unknown_param = with_measurement("name = \"m\"\nop = \"inverse\"\npath = \"clock\"\nspeed = 3");
    assert_eq!(
        invalid_key(load_config(&unknown_param).err().unwrap()).0,
        "measurements[0].speed"
    );

    let needs_state = with_measurement("name = \"m\"\nop = \"parallel_section\"\npath = \"clock\"");
    assert_eq!(
        invalid_key(load_config(&needs_state).err().unwrap()).0,
        "measurements[0]"
    );

    let twice = format!(
        "{}\n[[measurements]]\nname = \"m\"\nop = \"inverse\"\npath = \"clock\"\n",
        with_measurement("name = \"m\"\nop = \"inverse\"\npath = \"clock\"")
    );
    assert!(invalid_key(load_config(&twice).err().unwrap()).1.contains("duplicate"));
}

#[test]
fn rabi_run_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_file(&scenario("rabi.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("norm.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,re_expect,im_expect,norm"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.len() == 4 && (r[3] - 1.0).abs() < 1e-8));
    let first_cell = csv.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first_cell.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);

    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(report.report_version, 1);
    assert!(text.starts_with("{\n  \"report_version\": 1"));
    let names: Vec<&str> = report.measurements.iter().map(|m| m.name.as_str()).collect();
    let declared: Vec<&str> = report.config.measurements.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, declared);
    for m in &report.measurements {
        assert_eq!(m.pass, m.residual.is_some_and(|r| r < m.tolerance), "{}", m.name);
        assert!(!m.law.is_empty());
    }
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn report_round_trips_through_json() {
    let text = std::fs::read_to_string(scenario("non_abelian.toml")).unwrap();
    let sc = load_config(&text).unwrap();
    let report = run_scenario(&sc, 1.0).report;
    let printed = emit::report_text(&report);
    let parsed: Report = serde_json::from_str(&printed).unwrap();
    assert_eq!(parsed, report);
    assert_eq!(emit::report_text(&parsed), printed);
}

#[test]
fn flat_field_loop_commutator_passes() {
    let text = std::fs::read_to_string(scenario("flat_loop.toml")).unwrap();
    let report = run_scenario(&load_config(&text).unwrap(), 1.0).report;
    let m = report.record("loop-commutator-ring").unwrap();
    assert!(m.pass && m.residual.unwrap() < 1e-10);
}

#[test]
fn deliberate_failure_exits_one_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("fail.toml");
    std::fs::write(
        &config,
        with_measurement("name = \"too-strict\"\nop = \"metric_consistency\"\npath = \"clock\"\ntolerance = 1e-300"),
    )
    .unwrap();
    let out = run_file(&config, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report: Report =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(!report.measurements[0].pass);
    assert_eq!(report.summary.failed, 1);

    let relaxed = run_file(&config, &dir.path().join("relaxed"), &["--tol-scale", "1e300"]);
    assert_eq!(relaxed.status.code(), Some(0));
}

#[test]
fn engine_errors_are_recorded_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("err.toml");
    let body = format!(
        "{}\n[[measurements]]\nname = \"fine\"\nop = \"inverse\"\npath = \"clock\"\n",
        with_measurement("name = \"outside\"\nop = \"inverse\"\npath = \"clock\"\ns = 0.0\nt = 5.0")
    );
    std::fs::write(&config, body).unwrap();
    let out = run_file(&config, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let report: Report =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report.measurements[0].error.is_some() && report.measurements[0].residual.is_none());
    assert!(report.measurements[1].pass);
    assert_eq!(report.summary.errored, 1);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "dsl_version = 1\n").unwrap();
    let out = run_file(&config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    let missing = run_file(&dir.path().join("absent.toml"), dir.path(), &[]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_scale = run_file(&scenario("rabi.toml"), dir.path(), &["--tol-scale", "0"]);
    assert_eq!(bad_scale.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = run_file(&scenario("abelian_curvature.toml"), &blocker.join("sub"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn list_measurements_names_every_operation() {
    let out = bin(&["--list-measurements".as_ref()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for info in bundle_qm_cli::measure::REGISTRY {
        assert!(text.contains(info.op), "{}", info.op);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for k in 0..2 {
        let out = run_file(&scenario("rabi.toml"), &dir.path().join(k.to_string()), &[]);
        assert!(out.status.success());
    }
    for file in ["report.json", "excited-population.csv", "norm.csv"] {
        let a = std::fs::read(dir.path().join("0").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("1").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn golden_scenarios_pass_and_cover_every_operation() {
    let mut seen = std::collections::BTreeSet::new();
    for entry in std::fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let sc = load_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let report = run_scenario(&sc, 1.0).report;
        for m in &report.measurements {
            assert!(
                m.pass,
                "{}: {} residual {:?} error {:?}",
                path.display(),
                m.name,
                m.residual,
                m.error
            );
            seen.insert(m.op.clone());
        }
    }
    for info in bundle_qm_cli::measure::REGISTRY {
        assert!(seen.contains(info.op), "no golden scenario exercises `{}`", info.op);
    }
}
