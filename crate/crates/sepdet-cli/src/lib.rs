//! Batch front end: reads a TOML job, runs one command, writes a CSV or JSON table.

pub mod commands;
pub mod spec;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use sepdet::par::{self, Exec};

pub use spec::{Command, JobSpec};
pub use table::{Format, Row, Status, Table};

pub const THREADS_ENV: &str = "SEPDET_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Numeric(#[from] sepdet::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "sepdet", version, about = "Semi-separable Fredholm determinants, Jost functions and index computations")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML job specification
    #[arg(long)]
    pub spec: PathBuf,
    /// output file (else `output.path` from the spec, else stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv unless the spec's `output.format` says otherwise
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// worker threads (0 = all cores)
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const ROWS_FAILED: i32 = 2;
}

/// Parses and runs one job; returns the table.
pub fn run_job(cmd: Command, text: &str) -> Result<Table, CliError> {
    run_parsed(cmd, &spec::parse(text)?)
}

fn run_parsed(cmd: Command, job: &JobSpec) -> Result<Table, CliError> {
    if let Some(c) = job.command {
        if c != cmd {
            return Err(CliError::Spec(format!("spec is for `{}`, not `{}`", c.name(), cmd.name())));
        }
    }
    commands::run(cmd, job, Exec::default())
}

/// Full CLI: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let start = Instant::now();
    match execute(&args) {
        Ok(table) => {
            eprintln!("{}: {} [{:.3} s]", args.command.name(), table.summary(), start.elapsed().as_secs_f64());
            if table.all_ok() {
                exit::OK
            } else {
                exit::ROWS_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::USAGE
        }
    }
}

fn execute(args: &Args) -> Result<Table, CliError> {
    if let Some(t) = args.threads {
        // a second initialization in the same process is harmless
        let _ = par::init_threads(t);
    }
    let text = std::fs::read_to_string(&args.spec).map_err(|e| CliError::Spec(format!("{}: {e}", args.spec.display())))?;
    let job = spec::parse(&text)?;
    let table = run_parsed(args.command, &job)?;
    let output = job.output.unwrap_or_default();
    let format = args.format.or(output.format).unwrap_or(Format::Csv);
    let bytes = format.render(&table)?;
    let out = args.out.clone().or_else(|| {
        let base = args.spec.parent().unwrap_or_else(|| std::path::Path::new(""));
        output.path.map(|p| base.join(p))
    });
    match out {
        Some(path) => table::write_atomic(&path, &bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(table)
}
