//! `orbemu` command-line runner.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orbemu::harness::stream::{run_live, LiveOptions, StreamServer};
use orbemu::harness::{compute_metrics, load_config, run_scenario, Log, ScenarioConfig, Simulation};
use orbemu::ods::OrbitParams;
use orbemu::Error;

#[derive(Parser)]
#[command(name = "orbemu", version, about = "Emulated robot-in-the-loop orbital interaction runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its metrics as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the per-tick log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Serve telemetry and accept commands on host:port.
        #[arg(long, value_name = "HOST:PORT")]
        serve: Option<String>,
        /// Override the scenario duration, s.
        #[arg(long)]
        duration: Option<f64>,
        /// With --serve, run as fast as possible instead of in real time.
        #[arg(long)]
        headless: bool,
    },
    /// Summarize a logged run.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        /// Take the orbit (for the CW first integral) from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a config and list every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) => 2,
        Error::Numerical { .. } | Error::NonFinite(_) | Error::NotPositiveDefinite { .. } => 3,
        _ => 1,
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    load_config(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(vec![format!("{}: {io}", path.display())]),
        other => other,
    })
}

fn run(
    config: &PathBuf,
    log_path: Option<&PathBuf>,
    seed: Option<u64>,
    serve: Option<&str>,
    duration: Option<f64>,
    headless: bool,
) -> Result<(), Error> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration = Some(d);
    }
    cfg.validate()?;
    let orbit = cfg.orbit;
    let log = match serve {
        Some(addr) => {
            let server = StreamServer::bind(addr)?;
            eprintln!("serving on {}", server.local_addr());
            run_live(Simulation::new(cfg)?, &server, LiveOptions { headless })?
        }
        None => run_scenario(cfg)?,
    };
    if let Some(path) = log_path {
        log.save(path)?;
    }
    print_json(&compute_metrics(&log, &orbit));
    Ok(())
}

fn metrics(log: &PathBuf, config: Option<&PathBuf>) -> Result<(), Error> {
    let orbit = match config {
        Some(c) => load(c)?.orbit,
        None => OrbitParams::default(),
    };
    let log = Log::load(log)?;
    print_json(&compute_metrics(&log, &orbit));
    Ok(())
}

fn validate(config: &PathBuf) -> Result<(), Error> {
    let cfg = load(config)?;
    println!(
        "ok: {:?}, {} satellite(s), {} ticks at dt_sim {} s",
        cfg.scenario,
        cfg.satellites.len(),
        cfg.total_ticks(),
        cfg.dt_sim
    );
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("metrics serialize");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            log,
            seed,
            serve,
            duration,
            headless,
        } => run(config, log.as_ref(), *seed, serve.as_deref(), *duration, *headless),
        Command::Metrics { log, config } => metrics(log, config.as_ref()),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
