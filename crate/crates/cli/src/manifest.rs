//! The reproducibility record written next to every output file.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::commands::Output;
use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::{Cli, Command, CommonArgs};

/// `traj.csv` → `traj.csv.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Debug, Clone, Copy)]
pub struct Clock {
    unix: f64,
    instant: Instant,
}

impl Clock {
    pub fn start() -> Self {
        let unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            unix,
            instant: Instant::now(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct WallClock {
    pub started_unix_seconds: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct ConfigRecord {
    pub path: String,
    pub sha256: String,
    pub routes: Vec<String>,
    pub resources: Vec<String>,
    pub critical_resources: Vec<String>,
    pub alpha: f64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub output: String,
    pub config: ConfigRecord,
    /// Universal flags as given (`null` when defaulted per module).
    pub flags: CommonArgs,
    pub parameters: Command,
    pub seed: Option<u64>,
    /// Tolerances actually used, after per-module defaults.
    pub tolerances: Value,
    pub wall_clock: WallClock,
    pub diagnostics: Value,
}

impl RunManifest {
    pub fn new(cli: &Cli, loaded: &LoadedConfig, output: &Output, clock: Clock) -> Self {
        let names = |v: Vec<&str>| v.into_iter().map(String::from).collect();
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: cli.command.name(),
            output: cli.common.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            config: ConfigRecord {
                path: cli.common.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                sha256: loaded.digest.clone(),
                routes: names(loaded.route_names()),
                resources: names(loaded.resource_names()),
                critical_resources: names(loaded.critical_names()),
                alpha: loaded.config.alpha,
            },
            flags: cli.common.clone(),
            parameters: cli.command.clone(),
            seed: cli.command.is_stochastic().then_some(cli.common.seed),
            tolerances: output.tolerances.clone(),
            wall_clock: WallClock {
                started_unix_seconds: clock.unix,
                elapsed_seconds: clock.instant.elapsed().as_secs_f64(),
            },
            diagnostics: output.diagnostics.clone(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_next_to_the_output() {
        assert_eq!(manifest_path(Path::new("runs/traj.csv")), PathBuf::from("runs/traj.csv.manifest.json"));
        assert_eq!(manifest_path(Path::new("a.json")), PathBuf::from("a.json.manifest.json"));
    }
}
