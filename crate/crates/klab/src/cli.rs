//! Command-line interface and the exit-code contract.

use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use klab_core::analysis::optimality::check_ratio_growth;
use klab_core::analysis::Abscissa;
use serde_json::json;

use crate::config::{load_config, ConfigError, RunConfig, Scenario};
use crate::output::{read_table, write_report, write_table, Report};
use crate::scenario::{envelope_fit, eps_tag, evaluate, integrate_runs, timeseries_file};

pub const THREADS_VAR: &str = "KLAB_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Every non-informational check passed.
    Passed = 0,
    ChecksFailed = 1,
    ConfigError = 2,
    /// Integration failure, or an I/O failure after the run started.
    RunFailure = 3,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Parser)]
#[command(name = "klab", version, about = "Batch experiments on weakly damped Kirchhoff flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate and write time series and fits; no checks.
    Simulate(RunArgs),
    /// Run the scenario named in the configuration.
    Verify(RunArgs),
    /// Like verify, for configurations with several epsilon values.
    Sweep(RunArgs),
    /// Re-render report.json from the stored configuration and CSV files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Replace a configuration field, e.g. `epsilon=[0.04,0.02,0.01]` or `operator.K=4`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Defaults to DIR/config.json.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn config_error(e: impl std::fmt::Display) -> Status {
    eprintln!("error: {e}");
    Status::ConfigError
}

fn io_error(what: &str, path: &Path, e: io::Error) -> Status {
    eprintln!("error: {what} {}: {e}", path.display());
    Status::RunFailure
}

/// Reads the thread limit; `None` leaves the pool at its default size.
pub fn thread_limit(value: Option<&str>) -> Result<Option<usize>, ConfigError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ConfigError(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Creates the directory and proves it writable.
pub fn prepare_out_dir(dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let probe = dir.join(".klab-write-probe");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)
}

pub fn run(cli: Cli) -> Status {
    let threads = match thread_limit(std::env::var(THREADS_VAR).ok().as_deref()) {
        Ok(t) => t,
        Err(e) => return config_error(e),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return config_error(format!("{THREADS_VAR}: {e}")),
    };
    pool.install(|| match cli.command {
        Command::Simulate(mut a) => {
            a.overrides.push("scenario=simulate".into());
            run_scenario(&a, false)
        }
        Command::Verify(a) => run_scenario(&a, false),
        Command::Sweep(a) => run_scenario(&a, true),
        Command::Report(a) => rerender(&a),
    })
}

fn run_scenario(args: &RunArgs, sweep: bool) -> Status {
    let cfg = match load_config(&args.config, &args.overrides) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    if sweep && cfg.epsilon.len() < 2 {
        return config_error("sweep needs at least two epsilon values");
    }
    if let Err(e) = prepare_out_dir(&args.out) {
        return config_error(format!("output directory {} is not writable: {e}", args.out.display()));
    }
    let runs = integrate_runs(&cfg);
    let outcome = evaluate(&cfg, &runs);

    let explicit = !matches!(cfg.scenario, Scenario::Simulate | Scenario::All);
    if explicit && outcome.report.checks.is_empty() && outcome.integration_failures.is_empty() {
        let reasons: Vec<String> = outcome
            .skipped()
            .iter()
            .map(|v| format!("{}: {}", v["item"].as_str().unwrap_or("?"), v["reason"].as_str().unwrap_or("?")))
            .collect();
        return config_error(format!(
            "scenario {:?} does not apply to this configuration ({})",
            cfg.scenario,
            reasons.join("; ")
        ));
    }

    let config_path = args.out.join("config.json");
    if let Err(e) = std::fs::write(&config_path, config_json(&cfg)) {
        return io_error("writing", &config_path, e);
    }
    for (name, table) in &outcome.tables {
        let path = args.out.join(name);
        if let Err(e) = write_table(&path, table) {
            return io_error("writing", &path, e);
        }
    }
    let report_path = args.out.join("report.json");
    if let Err(e) = write_report(&report_path, &outcome.report) {
        return io_error("writing", &report_path, e);
    }
    print_summary(&outcome.report);
    for f in &outcome.integration_failures {
        eprintln!("integration failure: {f}");
    }
    if !outcome.integration_failures.is_empty() {
        Status::RunFailure
    } else if outcome.report.all_passed() {
        Status::Passed
    } else {
        Status::ChecksFailed
    }
}

/// The resolved configuration, loadable again as-is.
pub fn config_json(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(&cfg.to_raw()).expect("config serialises");
    s.push('\n');
    s
}

fn print_summary(report: &Report) {
    for c in &report.checks {
        if c.passed {
            println!("PASS {}", c.name);
        } else {
            println!("FAIL {} (worst_slack = {:e} at t = {})", c.name, c.worst_slack, c.worst_t);
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", report.checks.len());
}

/// Rebuilds the CSV-derivable part of the report: envelope fits and, for
/// `p > 0`, the growth of `Γ/Ψ`.
fn rerender(args: &ReportArgs) -> Status {
    let config_path = args.config.clone().unwrap_or_else(|| args.out.join("config.json"));
    let cfg = match load_config(&config_path, &args.overrides) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    match render_from_csv(&cfg, &args.out) {
        Ok(report) => {
            let path = args.out.join("report.json");
            if let Err(e) = write_report(&path, &report) {
                return io_error("writing", &path, e);
            }
            print_summary(&report);
            if report.all_passed() {
                Status::Passed
            } else {
                Status::ChecksFailed
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            Status::RunFailure
        }
    }
}

pub fn render_from_csv(cfg: &RunConfig, dir: &Path) -> io::Result<Report> {
    let mut report = Report::default();
    let mut skipped = Vec::new();
    let p = cfg.p;
    let files = cfg.epsilon.iter().map(|&e| Some(e)).chain(std::iter::once(None));
    for eps in files {
        let path = dir.join(timeseries_file(eps));
        if eps.is_none() && !path.exists() {
            continue;
        }
        let (header, cols) = read_table(&path)?;
        let col = |name: &str| header.iter().position(|h| h == name).map(|i| cols[i].as_slice());
        let missing =
            |name: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: no `{name}` column", path.display()));
        let times = col("t").ok_or_else(|| missing("t"))?;
        let gamma = col("gamma").ok_or_else(|| missing("gamma"))?;
        let ln_gamma: Vec<f64> = gamma.iter().map(|g| g.ln()).collect();
        let (name, abscissa) = match eps {
            Some(e) => (eps_tag("gamma_envelope", e), Abscissa::WeightedTime),
            None => ("gamma_parabolic".to_string(), Abscissa::ParabolicTime),
        };
        match envelope_fit(&name, times, &ln_gamma, p, abscissa) {
            Ok(f) => report.fits.push(f),
            Err(e) => skipped.push(json!({"item": name, "reason": e.to_string()})),
        }
        if let (Some(e), true) = (eps, p > 0.0) {
            let ratio = col("ratio_gamma_psi").ok_or_else(|| missing("ratio_gamma_psi"))?;
            let ln_ratio: Vec<f64> = ratio.iter().map(|r| r.ln()).collect();
            let name = eps_tag("gamma_ratio_growth", e);
            match check_ratio_growth(&name, times, &ln_ratio) {
                Ok(c) => report.checks.push(c.with_param("epsilon", e)),
                Err(err) => skipped.push(json!({"item": name, "reason": err.to_string()})),
            }
        }
    }
    report.informational.insert("rendered_from".into(), json!("csv"));
    if !skipped.is_empty() {
        report.informational.insert("skipped".into(), json!(skipped));
    }
    Ok(report)
}
