//! Command-line layer over `hyperphg`: configuration, the six verification
//! commands and their JSON/CSV reports.

pub mod commands;
pub mod config;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use config::{CommandName, ConfigError, RunConfig};
use report::Report;

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "HYPERPHG_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "hyperphg",
    version,
    about = "Verification runs for hyperbolic models and polyhomogeneous expansions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Cmd>,
    /// Configuration file (sections with key = value lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Sampling seed; overrides [run] seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Report path; overrides [run] output. Without it the report goes to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Also write CSV (next to the JSON report, or alone on stdout).
    #[arg(long, global = true)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Cmd {
    /// Chart pullbacks and the sectional-curvature range.
    VerifyMetric,
    /// Curvature extremes, Einstein constant and the equidistant foliation.
    CurvatureReport,
    /// Positivity certificate and identities for a weight.
    WeightScan,
    /// Critical weights, Dirichlet intervals and the exponent ladder.
    Indicial,
    /// Elements of a finitely generated additive monoid.
    Monoid,
    /// Correction recursion with the ODE remainder check.
    PhgRun,
}

impl From<Cmd> for CommandName {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::VerifyMetric => CommandName::VerifyMetric,
            Cmd::CurvatureReport => CommandName::CurvatureReport,
            Cmd::WeightScan => CommandName::WeightScan,
            Cmd::Indicial => CommandName::Indicial,
            Cmd::Monoid => CommandName::Monoid,
            Cmd::PhgRun => CommandName::PhgRun,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no command given (pass a subcommand or set [run] command)")]
    NoCommand,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::NoCommand => 2,
            CliError::Io { .. } => 1,
        }
    }
}

/// Resolved configuration and command for one invocation.
pub fn resolve(cli: &Cli) -> Result<(CommandName, RunConfig), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::defaults(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    let command = cli
        .command
        .map(CommandName::from)
        .or(cfg.command)
        .ok_or(CliError::NoCommand)?;
    Ok((command, cfg))
}

fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the report where the invocation asks for it.
pub fn emit(report: &Report, out: Option<&Path>, csv: bool) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    match out {
        Some(p) => {
            let path = output_path(p);
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            std::fs::write(&path, json + "\n").map_err(io_err(&path))?;
            if csv {
                let csv_path = path.with_extension("csv");
                let f = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
                report
                    .write_csv(f)
                    .map_err(|e| io_err(&csv_path)(std::io::Error::other(e)))?;
            }
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let res = if csv {
                report.write_csv(&mut lock).map_err(std::io::Error::other)
            } else {
                writeln!(lock, "{json}")
            };
            res.map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    Ok(())
}

/// Runs one invocation and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let (command, cfg) = match resolve(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let report = commands::run(command, &cfg);
    if let Err(e) = emit(&report, cfg.output.as_deref(), cli.csv) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let failed = report.failed();
    eprintln!(
        "{} {}: {}/{} checks passed ({:.2} s)",
        if report.pass() { "PASS" } else { "FAIL" },
        command.as_str(),
        report.checks.len() - failed.len(),
        report.checks.len(),
        report.wall_time_s
    );
    for c in failed {
        eprintln!("  failed: {} (observed {})", c.name, c.observed);
    }
    if report.pass() {
        0
    } else {
        1
    }
}
