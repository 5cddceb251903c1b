//! `empc`: data generation, training, region building, simulation and the
//! plant bridge, driven by one TOML config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use empc_core::Error;

use commands::Done;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "empc", version, about = "Explicit MPC with input-convex neural network surrogates")]
struct Cli {
    /// TOML config file; omitted keys keep their defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set mpc.budget_secs=0.5 (repeatable, wins over the file).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Shorthand for --set out_dir=DIR.
    #[arg(short, long, value_name = "DIR", global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate open-loop trajectories and write one dataset per prediction step.
    GenData,
    /// Train the step models of every configured architecture.
    Train,
    /// Build the region tree for every trained architecture.
    BuildRegions,
    /// Closed-loop runs of `sim.controller` from every `sim.x0`.
    Simulate,
    /// Closed-loop comparison of `sim.stacks`.
    Compare,
    /// Serve the plant over TCP until a client says bye.
    Serve {
        /// host:port to listen on.
        #[arg(long, env = "EMPC_ENDPOINT")]
        endpoint: Option<String>,
    },
    /// Closed-loop runs against a plant served over TCP.
    BridgeRun {
        /// host:port of the plant server.
        #[arg(long, env = "EMPC_ENDPOINT")]
        endpoint: Option<String>,
    },
    /// Objective surface of the first-step model over the input box.
    Surface,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::BuildRegions => "build-regions",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Serve { .. } => "serve",
            Command::BridgeRun { .. } => "bridge-run",
            Command::Surface => "surface",
        }
    }
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;
const PROTOCOL_ERROR: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => CONFIG_ERROR,
        Error::Protocol(_) | Error::Timeout(_) | Error::Transport { .. } => PROTOCOL_ERROR,
        _ => RUNTIME_ERROR,
    }
}

fn run(cli: Cli) -> Result<Done, (u8, Error)> {
    let mut overrides = cli.overrides;
    if let Some(dir) = &cli.out_dir {
        overrides.push(format!("out_dir={:?}", dir.to_string_lossy()));
    }
    let config_err = |e: Error| (CONFIG_ERROR, e);
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides).map_err(config_err)?;
    cfg.resolve_paths();
    let name = cli.command.name();
    commands::require(&commands::inputs(&cfg, name)).map_err(config_err)?;
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            log::warn!("thread pool already set up: {e}");
        }
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| (RUNTIME_ERROR, Error::io(&cfg.out_dir, e)))?;
    let echo = cfg.out_dir.join(format!("{name}.config.toml"));
    let text = toml::to_string_pretty(&cfg).map_err(|e| (RUNTIME_ERROR, Error::InvalidConfig(e.to_string())))?;
    std::fs::write(&echo, text).map_err(|e| (RUNTIME_ERROR, Error::io(&echo, e)))?;
    let endpoint = |flag: Option<String>| flag.unwrap_or_else(|| cfg.bridge.endpoint.clone());
    let result = match cli.command {
        Command::GenData => commands::gen_data(&cfg),
        Command::Train => commands::train(&cfg),
        Command::BuildRegions => commands::build_regions(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Serve { endpoint: e } => commands::serve(&cfg, &endpoint(e)),
        Command::BridgeRun { endpoint: e } => commands::bridge_run(&cfg, &endpoint(e)),
        Command::Surface => commands::surface(&cfg),
    };
    result.map_err(|e| (exit_code(&e), e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let command = Cli::command().after_long_help(config::key_listing());
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::Halted) => {
            eprintln!("error: at least one run halted");
            ExitCode::from(RUNTIME_ERROR)
        }
        Err((code, e)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
