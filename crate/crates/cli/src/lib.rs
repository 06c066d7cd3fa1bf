//! Command-line front end: configuration, single-point solves, sweeps,
//! figure reproduction and the validation battery.

pub mod config;
pub mod output;
pub mod validate;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qtt_core::observables::{evaluate_point, PointEvaluation};
use qtt_core::sweeps::{figure_preset, run_sweep, uniform_grid, FigureId, SweepError};
use qtt_core::{validate_secular, Bath, Method};
use thiserror::Error;

use crate::config::{parse_assignment, ConfigError, RunConfig};
use crate::output::{number, sweep_table, Schema, Table};
use crate::validate::{render, run_battery, Status};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("failed checks: {}", .0.join(", "))]
    Validation(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Io { .. } => "io",
            CliError::Validation(_) => "validation",
        }
    }

    /// One `key=value` line for scripts reading standard error.
    pub fn machine_line(&self) -> String {
        let mut line = format!("qtt-error code={} kind={}", self.exit_code(), self.kind());
        if let CliError::Config(e) = self {
            if let Some(key) = e.key() {
                write!(line, " key={key}").unwrap();
            }
        }
        write!(line, " message={:?}", self.to_string()).unwrap();
        line
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::UnknownFigure(_) => CliError::Usage(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qtt", version, about = "Steady-state heat transport of the qubit-qutrit thermal transistor")]
pub struct Cli {
    /// Configuration file of `key = value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the effective configuration and exit
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one operating point with both methods
    Steady {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Sweep one temperature over the configured grid
    Sweep {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Write <fig-id>.csv, .meta and .gp for a published figure
    Reproduce {
        /// fig2, fig3, fig4, fig5, figB6, figB7 or figB8
        figure: String,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Grid points instead of the preset's
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run the invariant battery at the configured point
    Validate {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let base = match path {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p).map_err(io_error(p))?)?,
        None => RunConfig::default(),
    };
    let pairs = overrides.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(base.with_overrides(&pairs)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_error(path))
}

fn emit(target: Option<&Path>, contents: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match target {
        Some(path) => write_file(path, contents),
        None => stdout.write_all(contents.as_bytes()).map_err(io_error(Path::new("<stdout>"))),
    }
}

fn secular_notes(config: &RunConfig, stderr: &mut dyn Write) {
    for w in validate_secular(&config.params).warnings {
        let _ = writeln!(stderr, "warning: secular approximation: {w}");
    }
}

pub fn steady_table(config: &RunConfig) -> Result<Table, CliError> {
    let eval = |method| {
        evaluate_point(&config.params, &config.baths, method).map_err(|e| CliError::Solver(format!("{method}: {e}")))
    };
    let (num, apx): (PointEvaluation, PointEvaluation) = (eval(Method::Numerical)?, eval(Method::Approximate)?);
    let mut columns: Vec<String> = ["t_l", "t_m", "t_r"].map(String::from).to_vec();
    let mut row: Vec<String> = Bath::ALL.iter().map(|&b| number(config.baths.get(b))).collect();
    for (tag, e) in [("num", &num), ("apx", &apx)] {
        columns.extend((1..=6).map(|k| format!("rho{k}{k}_{tag}")));
        row.extend(e.state.populations.iter().map(|&x| number(x)));
    }
    for (tag, e) in [("num", &num), ("apx", &apx)] {
        columns.extend(["ql", "qm", "qr"].iter().map(|q| format!("{q}_{tag}")));
        row.extend(Bath::ALL.iter().map(|&b| number(e.report.currents[b])));
        columns.push(format!("conservation_residual_{tag}"));
        row.push(number(e.report.conservation_residual));
    }
    columns.push("resolved_num".into());
    row.push(num.report.resolved.to_string());
    columns.push("secular_warnings".into());
    row.push(validate_secular(&config.params).warnings.len().to_string());
    Ok(Table { columns, rows: vec![row] })
}

fn cmd_steady(config: &RunConfig, output: Option<&Path>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    secular_notes(config, stderr);
    let table = steady_table(config)?;
    emit(output, &table.to_csv(), stdout)
}

fn cmd_sweep(config: &RunConfig, output: Option<&Path>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    secular_notes(config, stderr);
    let spec = config.sweep_spec();
    let rows = run_sweep(&spec)?;
    let (table, notes) = sweep_table(&rows, Schema::for_spec(&spec))?;
    for note in notes {
        let _ = writeln!(stderr, "note: {note}");
    }
    emit(output, &table.to_csv(), stdout)
}

/// Files written by `reproduce`, in write order.
pub fn reproduce_paths(id: FigureId, dir: &Path) -> [PathBuf; 3] {
    ["csv", "meta", "gp"].map(|ext| dir.join(format!("{}.{ext}", id.name())))
}

pub fn cmd_reproduce(figure: &str, dir: &Path, points: Option<usize>, stderr: &mut dyn Write) -> Result<(), CliError> {
    let id: FigureId = figure.parse()?;
    let mut spec = figure_preset(id);
    if let Some(n) = points {
        if n < 2 {
            return Err(CliError::Usage(format!("--points needs at least 2 (got {n})")));
        }
        spec.grid = uniform_grid(spec.grid[0], spec.grid[spec.grid.len() - 1], n);
    }
    let schema = Schema::for_figure(id);
    let rows = run_sweep(&spec)?;
    let (table, notes) = sweep_table(&rows, schema)?;
    for note in notes {
        let _ = writeln!(stderr, "note: {note}");
    }
    let [csv, meta, gp] = reproduce_paths(id, dir);
    write_file(&csv, &table.to_csv())?;
    write_file(&meta, &output::meta(id.name(), &spec, schema, &validate_secular(&spec.params)))?;
    write_file(&gp, &output::gnuplot(id.name(), schema, spec.variable))
}

fn cmd_validate(config: &RunConfig, inject_fault: bool, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    secular_notes(config, stderr);
    let checks = run_battery(config, inject_fault);
    emit(None, &render(&checks), stdout)?;
    let failed: Vec<String> = checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed))
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref(), &cli.set)?;
    if cli.dump_config {
        return emit(None, &config.dump(), stdout);
    }
    match cli.command {
        None => Err(CliError::Usage("no subcommand given (steady, sweep, reproduce, validate)".into())),
        Some(Command::Steady { output }) => cmd_steady(&config, output.as_deref(), stdout, stderr),
        Some(Command::Sweep { output }) => cmd_sweep(&config, output.as_deref(), stdout, stderr),
        Some(Command::Reproduce { figure, output_dir, points }) => cmd_reproduce(&figure, &output_dir, points, stderr),
        Some(Command::Validate { inject_fault }) => cmd_validate(&config, inject_fault, stdout, stderr),
    }
}

/// Parse `args` (program name first), run, and return the exit code. Errors
/// go to `stderr` as a readable message followed by a machine-readable line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            let _ = write!(stderr, "{e}");
            let _ = writeln!(stderr, "{}", err.machine_line());
            return err.exit_code();
        }
    };
    match dispatch(cli, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            let _ = writeln!(stderr, "{}", e.machine_line());
            e.exit_code()
        }
    }
}
