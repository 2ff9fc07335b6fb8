use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ringlock_core::scenarios::{run_scenario, Scenario, ScenarioConfig};
use ringlock_core::Error;

/// Microring photon-pair source co-simulation.
#[derive(Parser)]
#[command(name = "ringlock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; unset fields take their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one leaf, e.g. `--set lock.deadband=3`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<scenario>]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward/reverse pump sweeps over a power ladder.
    Hysteresis(RunArgs),
    /// Locked ring under a square-wave thermal aggressor, feedback on and off.
    LockWithAggressor(RunArgs),
    /// Largest tolerable aggressor swing per lock target.
    LockRobustness(RunArgs),
    /// Twelve-ring chain with staggered lock acquisitions.
    Multiring(RunArgs),
    /// Pair rate, CAR and heralded g² against pump power.
    PowerLadder(RunArgs),
    /// Predicted pair rates and spreads over the die table.
    Variability(RunArgs),
    /// Heater DAC resolution and linearity.
    DacCharacterize(RunArgs),
    /// Source design-point evaluation.
    DesignPoint(RunArgs),
    /// Check a config and print the resolved document.
    ValidateConfig(ConfigArgs),
    /// Print the config JSON schema.
    Schema,
}

fn load(args: &ConfigArgs, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut overrides = args.overrides.clone();
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path, &overrides)?,
        None => ScenarioConfig::from_json_str("{}", &overrides)?,
    };
    Ok(cfg)
}

/// Print a line, treating a closed stdout (e.g. piped into `head`) as done.
fn emit(line: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(scenario: Scenario, args: &RunArgs) -> Result<()> {
    let cfg = load(&args.config, args.seed)?;
    log::info!("running {scenario} with seed {}", cfg.seed);
    let outputs = run_scenario(scenario, &cfg)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| Path::new("out").join(scenario.name()));
    let written = outputs
        .write_to(&dir)
        .with_context(|| format!("writing outputs to {}", dir.display()))?;
    for path in written {
        emit(&path.display().to_string())?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let (scenario, args) = match &cli.command {
        Command::Hysteresis(a) => (Scenario::Hysteresis, a),
        Command::LockWithAggressor(a) => (Scenario::LockWithAggressor, a),
        Command::LockRobustness(a) => (Scenario::LockRobustness, a),
        Command::Multiring(a) => (Scenario::Multiring, a),
        Command::PowerLadder(a) => (Scenario::PowerLadder, a),
        Command::Variability(a) => (Scenario::Variability, a),
        Command::DacCharacterize(a) => (Scenario::DacCharacterize, a),
        Command::DesignPoint(a) => (Scenario::DesignPoint, a),
        Command::ValidateConfig(a) => {
            let cfg = load(a, None)?;
            emit(&serde_json::to_string_pretty(&cfg)?)?;
            return Ok(());
        }
        Command::Schema => {
            emit(&serde_json::to_string_pretty(&ScenarioConfig::json_schema())?)?;
            return Ok(());
        }
    };
    run(scenario, args)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::Domain(_)) => 2,
        Some(Error::Divergence(_)) => 3,
        Some(Error::Fit(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
