//! `pulsemu` command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for
//! runtime failures.

mod commands;
mod config;
mod persist;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pulsemu::experiments::Exec;
use pulsemu::sequencer::Program;

use config::{ConfigDoc, Scale};
use persist::{persist, RunManifest};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

/// Bad inputs are validation errors; everything that fails while running is
/// a runtime error.
pub fn core_error(e: pulsemu::Error) -> CliError {
    use pulsemu::Error as E;
    match e {
        E::InvalidArgument(_) | E::Capacity(_) | E::Validation(_) | E::Serde(_) => CliError::Validation(e.to_string()),
        E::LengthMismatch { .. } | E::Device { .. } | E::Fit(_) | E::Infeasible(_) => CliError::Runtime(e.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "pulsemu", version, about = "Pulse-level qubit controller emulator")]
struct Cli {
    /// Configuration document (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "pulsemu-out")]
    out: PathBuf,
    /// Overrides the shot count of the experiment.
    #[arg(long, global = true)]
    shots: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    /// Worker threads; results do not depend on it. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rabi, T1, echo, chevron and resonator spectroscopy of one qubit.
    Characterize,
    /// Preliminary and refined readout templates plus a raw store image.
    ReadoutCalibrate,
    /// Active reset to g and to e with match-outcome histograms.
    Reset,
    /// Single-qubit randomized benchmarking.
    Rb,
    /// Coupler tune-up maps and resonance-cut fits.
    Iswap,
    /// Feedback reset of a three-level qubit.
    QutritReset,
    /// Two-tone CW generation and lock-in demodulation.
    CwDemo,
    /// Checks a program (file argument or the config's `program` section).
    Validate {
        program: Option<PathBuf>,
    },
}

fn validate(doc: &ConfigDoc, path: Option<&PathBuf>) -> Result<(), CliError> {
    if let Some(d) = &doc.device {
        doc.device_or(d.clone())?;
    }
    let program = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", p.display())))?;
            Program::from_json(&text).map_err(core_error)?
        }
        None => doc.program.clone().ok_or_else(|| CliError::Validation("no program given".into()))?,
    };
    let v = program.violations();
    if v.is_empty() {
        println!("ok: {} events, period {} ticks", program.schedule.events.len(), program.schedule.period);
        Ok(())
    } else {
        Err(CliError::Validation(v.join("\n")))
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let doc = ConfigDoc::load(cli.config.as_deref())?;
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let ctx = commands::Context { doc, scale: cli.scale, shots: cli.shots, exec: Exec::new(cli.seed, threads) };
    let (name, outcome) = match &cli.command {
        Command::Validate { program } => return validate(&ctx.doc, program.as_ref()),
        Command::Characterize => ("characterize", commands::characterize(&ctx)?),
        Command::ReadoutCalibrate => ("readout-calibrate", commands::readout_calibrate(&ctx)?),
        Command::Reset => ("reset", commands::reset(&ctx)?),
        Command::Rb => ("rb", commands::rb(&ctx)?),
        Command::Iswap => ("iswap", commands::iswap(&ctx)?),
        Command::QutritReset => ("qutrit-reset", commands::qutrit_reset(&ctx)?),
        Command::CwDemo => ("cw-demo", commands::cw_demo(&ctx)?),
    };
    let manifest = RunManifest::new(name, &outcome.effective_config, cli.seed, &outcome.artifacts);
    persist(&cli.out, &manifest, &outcome.artifacts)?;
    println!("{name}: wrote {} files to {}", outcome.artifacts.len() + 1, cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
