//! Command-line front end: `bicavity <task> --config job.json [--set k=v] [--out DIR]`.

use std::path::PathBuf;
use std::process::ExitCode;

use bicavity::sweep::{apply_override, run_sweep, JobConfig, RunOptions};
use bicavity::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "bicavity",
    version,
    about = "Double photonic-crystal-slab cavity simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reflection/transmission spectrum over a frequency axis.
    Spectrum(JobArgs),
    /// Two-axis reflectance or transmittance map.
    Map(JobArgs),
    /// Complex eigenfrequencies in a frequency window.
    Eigen(JobArgs),
    /// Follow one cavity mode across a gap sweep.
    Track(JobArgs),
    /// Track a mode and locate the bound state in the continuum.
    Bic(JobArgs),
    /// Optomechanical figures of merit for parameter sets.
    Fom(JobArgs),
    /// Fabry-Perot reference cavities.
    FpCompare(JobArgs),
    /// Fano fit of a single-slab spectrum.
    Fit(JobArgs),
    /// Check a config without running it.
    Validate(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set solver.half_order=6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. }
        | Error::FitNotConverged { .. }
        | Error::DegenerateSpectrum(_)
        | Error::PoleSearch(_) => 2,
        _ => 1,
    }
}

fn load(args: &JobArgs, task: Option<&str>) -> Result<JobConfig, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
        pointer: "/".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    if let (Some(t), Some(obj)) = (task, v.as_object_mut()) {
        obj.insert("task".into(), Value::String(t.into()));
    }
    for o in &args.overrides {
        apply_override(&mut v, o)?;
    }
    JobConfig::from_value(&v)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (args, task) = match &cli.command {
        Command::Spectrum(a) => (a, "spectrum"),
        Command::Map(a) => (a, "map"),
        Command::Eigen(a) => (a, "eigen"),
        Command::Track(a) => (a, "track"),
        Command::Bic(a) => (a, "bic"),
        Command::Fom(a) => (a, "fom"),
        Command::FpCompare(a) => (a, "fp-compare"),
        Command::Fit(a) => (a, "fit"),
        Command::Validate(a) => {
            let cfg = load(a, None)?;
            eprintln!("ok: {:?} job, hash {}", cfg.task, cfg.hash);
            return Ok(());
        }
    };
    let cfg = load(args, Some(task))?;
    let opts = RunOptions {
        threads: args.threads,
        seed: args.seed,
        out_dir: args.out.clone(),
    };
    let (record, output) = run_sweep(&cfg, &opts)?;
    if record.outputs.is_empty() {
        // No output directory: the primary table goes to standard output.
        if let Some((_, content)) = output.files()?.into_iter().next() {
            print!("{content}");
        }
    }
    let failed = record.failed_points();
    eprintln!(
        "{} points ({} failed), {} solver calls{}",
        record.points.len(),
        failed,
        record.solver_calls,
        if record.cache_hit { ", from cache" } else { "" }
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
