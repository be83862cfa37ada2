use std::path::PathBuf;
use std::process::ExitCode;

use bundle_qm_cli::{emit, load_config, measure, run_scenario, ConfigError};
use clap::Parser;

/// Run a bundle-qm scenario and write a verification report.
#[derive(Debug, Parser)]
#[command(name = "bundle-qm", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(required_unless_present = "list_measurements")]
    config: Option<PathBuf>,

    /// Output directory; overrides `[output].dir` from the scenario.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Multiply every measurement tolerance by this factor.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,

    /// Print nothing except errors.
    #[arg(long, short)]
    quiet: bool,

    /// List the available measurement operations and exit.
    #[arg(long)]
    list_measurements: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_measurements {
        for info in measure::REGISTRY {
            println!("{:<32} tol {:<8e} {}", info.op, info.default_tolerance, info.law);
            println!("{:<32} keys: {}", "", info.keys.join(", "));
        }
        return ExitCode::SUCCESS;
    }
    if !(cli.tol_scale.is_finite() && cli.tol_scale > 0.0) {
        eprintln!("error: --tol-scale must be a positive number");
        return ExitCode::from(2);
    }
    let path = cli.config.expect("clap enforces the config argument");
    let scenario = match std::fs::read_to_string(&path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))
        .and_then(|text| load_config(&text))
    {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = run_scenario(&scenario, cli.tol_scale);
    let dir = cli
        .out_dir
        .unwrap_or_else(|| PathBuf::from(&scenario.config.output.dir));
    let written = emit::write_run(
        &dir,
        &scenario.config.output.report,
        &out.report,
        &out.series,
        out.elapsed,
        &out.per_measurement,
    );
    let report_path = match written {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if !cli.quiet {
        for m in &out.report.measurements {
            let verdict = if m.pass { "PASS" } else { "FAIL" };
            let residual = m.residual.map_or("-".to_string(), |r| format!("{r:.3e}"));
            print!(
                "{verdict} {:<28} residual {residual:>10} tol {:.1e}",
                m.name, m.tolerance
            );
            match &m.error {
                Some(e) => println!("  ({e})"),
                None => println!(),
            }
        }
        let s = out.report.summary;
        println!("{}/{} passed; report at {}", s.passed, s.total, report_path.display());
    }
    if out.report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
