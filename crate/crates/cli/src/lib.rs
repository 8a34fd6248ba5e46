//! Batch pipelines behind the `egoflow` binary.
//!
//! Exit codes: 0 on success, 1 when at least one frame or scene failed,
//! 2 for usage and validation errors. Logs go to standard error; results
//! go to files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub mod bench;
pub mod config;
pub mod flow;
mod io;
pub mod segment;
pub mod synth;
pub mod vmt;

pub use config::{JobConfig, NormSpec, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing inputs or inconsistent data; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Some items failed while others may have succeeded; exit code 1.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "egoflow", version, about = "Ego-motion fields, vehicle motion tensors and motion segmentation")]
pub struct Cli {
    /// key=value file supplying defaults (threads, depth, norm, tau, camera).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; overrides EGOFLOW_THREADS and the config file.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate vehicle motion tensors for every frame of an OXTS sequence.
    Vmt(vmt::VmtArgs),
    /// Convert or visualize optical flow files.
    #[command(subcommand)]
    Flow(flow::FlowCommand),
    /// Compensate observed flow for ego-motion, threshold and evaluate.
    Segment(segment::SegmentArgs),
    /// Emit a seeded synthetic suite with exact flow, masks and OXTS files.
    Synth(synth::SynthArgs),
    /// Measure VMT generation latency.
    Bench(bench::BenchArgs),
}

/// Options shared by commands that evaluate the ego-motion field.
#[derive(Debug, Clone, Args)]
pub struct FieldOptions {
    /// Depth of the virtual plane in meters.
    #[arg(long, value_name = "METERS")]
    pub depth: Option<f64>,
    /// Rectified camera whose intrinsics are used.
    #[arg(long, value_name = "INDEX")]
    pub camera: Option<u8>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let base = Overrides::load(cli.config.as_deref(), cli.threads)?;
    match cli.command {
        Command::Vmt(args) => vmt::run(&base, args),
        Command::Flow(cmd) => flow::run(&base, cmd),
        Command::Segment(args) => segment::run(&base, args),
        Command::Synth(args) => synth::run(&base, args),
        Command::Bench(args) => bench::run(&base, args),
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
