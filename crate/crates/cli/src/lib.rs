//! Command-line experiments on the flow-level α-fair bandwidth-sharing model.
//!
//! Every command reads a network from a JSON file (see [`config`]) and writes
//! either a CSV table or a JSON document. With `--out`, the data goes to the
//! named file and a sibling `<out>.manifest.json` records the tool version,
//! the config digest, every parameter, the seed, tolerances, wall-clock and
//! solver diagnostics. Without `--out`, the data goes to standard output.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "alphafair", version, about = "Weighted alpha-fair bandwidth sharing: allocation, fluid model, flow-level simulation and invariant manifold")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Network configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; a manifest is written next to it. Defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed of stochastic commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Allocator KKT tolerance.
    #[arg(long = "eps-kkt", global = true, default_value_t = 1e-9)]
    pub eps_kkt: f64,
    /// Euler step of the fluid model [default: 1e-3 / max service rate].
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Check tolerance of the command (monotonicity slack for `fluid`,
    /// invariance for `manifold`, membership for `cone`, stop tolerance
    /// for `lift`).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// α-fair allocation and prices at one state (JSON).
    Allocate {
        /// Flow counts, comma separated, one per route.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        state: Vec<f64>,
    },
    /// Fluid trajectory with Lyapunov diagnostics (CSV).
    Fluid {
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        n0: Vec<f64>,
        #[arg(long, default_value_t = 200.0)]
        horizon: f64,
        /// Spacing of output rows.
        #[arg(long = "sample-interval", default_value_t = 0.1)]
        sample_interval: f64,
    },
    /// One flow-level Markov chain path (CSV, one row per event).
    Simulate {
        #[arg(long, value_delimiter = ',', required = true)]
        n0: Vec<u32>,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        /// Give up (exit 4) if the path needs more events than this.
        #[arg(long = "max-events", default_value_t = alphafair_core::ctmc::DEFAULT_EVENT_CAP)]
        max_events: u64,
    },
    /// Rescaled chains against the fluid path, per scale and seed (CSV).
    Fluidlimit {
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        n0: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "20,100,500")]
        scales: Vec<f64>,
        /// Number of seeds per scale; run k uses `seed + k`.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Fluid-time horizon.
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Spacing of the comparison grid.
        #[arg(long = "grid-step", default_value_t = 0.1)]
        grid_step: f64,
    },
    /// Invariant state for a price vector `q`, or invariance checks of a state (JSON).
    Manifold {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "state", required_unless_present = "state")]
        q: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        state: Option<Vec<f64>>,
    },
    /// Lifting map: the F-minimal state with workload at least `w` (JSON).
    Lift {
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        w: Vec<f64>,
    },
    /// Workload cone membership on a square grid (CSV); needs two critical resources.
    Cone {
        /// Points per axis.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Upper end of each axis.
        #[arg(long, default_value_t = 3.0)]
        max: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Allocate { .. } => "allocate",
            Command::Fluid { .. } => "fluid",
            Command::Simulate { .. } => "simulate",
            Command::Fluidlimit { .. } => "fluidlimit",
            Command::Manifold { .. } => "manifold",
            Command::Lift { .. } => "lift",
            Command::Cone { .. } => "cone",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Command::Simulate { .. } | Command::Fluidlimit { .. })
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Errors are reported on standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("alphafair: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command: writes its data (and manifest, with `--out`), then
/// reports any invariant violation the run detected.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let started = manifest::Clock::start();
    let path = cli
        .common
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let loaded = config::load(path)?;
    let output = commands::execute(&loaded, &cli.common, &cli.command)?;

    match &cli.common.out {
        Some(out) => {
            std::fs::write(out, &output.data).map_err(|e| CliError::io(out, e))?;
            let record = manifest::RunManifest::new(cli, &loaded, &output, started);
            record.write(&manifest::manifest_path(out))?;
            if let Some(summary) = &output.summary {
                println!("{}", serde_json::to_string_pretty(summary).expect("summary serialises"));
            }
        }
        None => {
            use std::io::Write;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(&output.data)
                .and_then(|()| lock.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
    }
    match output.violation {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
