//! `donaldson`: runs the flow, heat and oracle studies from a JSON config.
//!
//! Exit status: 0 when every enabled check passes, 1 when a check fails or
//! an output cannot be written, 2 for configuration errors, 3 when the
//! integration aborts. `summary.json` is written in every case where the
//! output directory is known.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::{cmd_flow, cmd_heat, cmd_oracle, write_json, FlowSummary, HeatSummary, OracleSummary, Outcome};
use config::{Mode, RunConfig};

/// Every seed is expanded with `ChaCha8Rng::seed_from_u64` from `rand_chacha`.
const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3, seed_from_u64)";
const SUMMARY_SCHEMA: &str = "donaldson-summary/1";
const DEFAULT_OUTPUT: &str = "output";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Parser)]
#[command(name = "donaldson", version, about = "Parabolic Donaldson flow on flat complex tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for the spatial kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Integrate the flow and write diagnostics.csv and snapshots.
    Flow,
    /// Solve the linear heat equation along the flow and write heat.csv.
    Heat,
    /// Run the algebraic and discretization oracles.
    Oracle,
    /// Flow, then heat, then oracle.
    All,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Self::Flow => Mode::Flow,
            Self::Heat => Mode::Heat,
            Self::Oracle => Mode::Oracle,
            Self::All => Mode::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum Status {
    Pass,
    Fail,
    ConfigError,
    NumericalAbort,
    IoError,
}

impl Status {
    fn of(e: &CliError) -> Self {
        match e {
            CliError::Config(_) => Self::ConfigError,
            CliError::Numerical(_) => Self::NumericalAbort,
            CliError::Io(_) => Self::IoError,
        }
    }

    fn exit_code(self) -> u8 {
        match self {
            Self::Pass => 0,
            Self::Fail | Self::IoError => 1,
            Self::ConfigError => 2,
            Self::NumericalAbort => 3,
        }
    }
}

#[derive(Debug, Default, Serialize)]
struct Seeds {
    algorithm: &'static str,
    geometry: Option<u64>,
    heat_u0: Option<u64>,
    oracle: Option<u64>,
}

#[derive(Serialize)]
struct Summary {
    schema: &'static str,
    command: Mode,
    status: Status,
    message: Option<String>,
    seeds: Seeds,
    flow: Option<FlowSummary>,
    heat: Option<HeatSummary>,
    oracle: Option<OracleSummary>,
}

impl Summary {
    fn new(command: Mode) -> Self {
        Self {
            schema: SUMMARY_SCHEMA,
            command,
            status: Status::Pass,
            message: None,
            seeds: Seeds {
                algorithm: RNG_ALGORITHM,
                ..Seeds::default()
            },
            flow: None,
            heat: None,
            oracle: None,
        }
    }

    /// Records a command's outcome; returns false once the run must stop.
    fn absorb<S>(&mut self, outcome: Result<Outcome<S>, CliError>, slot: impl FnOnce(&mut Self, S)) -> bool {
        match outcome {
            Ok(o) => {
                if let Some(s) = o.summary {
                    slot(self, s);
                }
                if let Some(e) = o.error {
                    self.fail_with(e);
                    return false;
                }
                if !o.passed && self.status == Status::Pass {
                    self.status = Status::Fail;
                }
                true
            }
            Err(e) => {
                self.fail_with(e);
                false
            }
        }
    }

    fn fail_with(&mut self, e: CliError) {
        self.status = Status::of(&e);
        self.message = Some(e.to_string());
    }
}

fn load(cli: &Cli, mode: Mode) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    cfg.validate(mode)?;
    Ok(cfg)
}

fn execute(cfg: &RunConfig, mode: Mode, out: &Path, summary: &mut Summary) {
    summary.seeds.geometry = cfg.geometry.as_ref().and_then(|g| g.seed());
    summary.seeds.heat_u0 = cfg.heat.as_ref().and_then(|h| h.seed());
    summary.seeds.oracle = cfg.oracle.as_ref().map(|o| o.seed);
    if let Err(e) = fs::create_dir_all(out) {
        summary.fail_with(CliError::Io(format!("{}: {e}", out.display())));
        return;
    }
    if matches!(mode, Mode::Flow | Mode::All) {
        log::info!("running flow");
        if !summary.absorb(cmd_flow(cfg, out), |s, f| s.flow = Some(f)) {
            return;
        }
    }
    if matches!(mode, Mode::Heat | Mode::All) {
        log::info!("running heat");
        if !summary.absorb(cmd_heat(cfg, out), |s, h| s.heat = Some(h)) {
            return;
        }
    }
    if matches!(mode, Mode::Oracle | Mode::All) {
        log::info!("running oracles");
        summary.absorb(cmd_oracle(cfg, out), |s, o| s.oracle = Some(o));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mode = cli.command.mode();
    let mut summary = Summary::new(mode);

    let loaded = load(&cli, mode);
    let out = cli
        .output
        .clone()
        .or_else(|| loaded.as_ref().ok().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));

    match loaded {
        Ok(cfg) => {
            let pool = match cli.threads {
                Some(0) => Err(CliError::Config("--threads must be positive".into())),
                Some(k) => rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                    .map_err(|e| CliError::Config(e.to_string())),
                None => Ok(()),
            };
            match pool {
                Ok(()) => execute(&cfg, mode, &out, &mut summary),
                Err(e) => summary.fail_with(e),
            }
        }
        Err(e) => summary.fail_with(e),
    }

    if fs::create_dir_all(&out).is_ok() {
        if let Err(e) = write_json(&out.join("summary.json"), &summary) {
            eprintln!("{e}");
            if summary.status == Status::Pass {
                summary.status = Status::IoError;
            }
        }
    }
    if let Some(m) = &summary.message {
        eprintln!("{m}");
    }
    match summary.status {
        Status::Pass => log::info!("all checks passed"),
        Status::Fail => eprintln!("one or more checks failed; see {}", out.join("summary.json").display()),
        _ => {}
    }
    ExitCode::from(summary.status.exit_code())
}
