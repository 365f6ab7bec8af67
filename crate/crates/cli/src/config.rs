//! Network configuration files.
//!
//! ```json
//! {
//!   "resources": [{"name": "left", "capacity": 1.0}, {"name": "right", "capacity": 1.0}],
//!   "routes": [
//!     {"name": "a", "resources": ["left"], "nu": 0.5, "mu": 1.0, "kappa": 1.0},
//!     {"name": "b", "resources": ["right"], "nu": 0.5, "mu": 1.0, "kappa": 1.0},
//!     {"name": "long", "resources": ["left", "right"], "nu": 0.5, "mu": 1.0, "kappa": 1.0}
//!   ],
//!   "alpha": 1.0
//! }
//! ```
//!
//! Route order fixes route indexing and resource order fixes resource
//! indexing. Every problem is reported against the field that caused it.

use std::collections::HashMap;
use std::path::Path;

use alphafair_core::{NetworkError, NetworkModel, Topology, TrafficParams, ValidationIssue};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub name: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub name: String,
    pub resources: Vec<String>,
    pub nu: f64,
    pub mu: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub resources: Vec<ResourceSpec>,
    pub routes: Vec<RouteSpec>,
    pub alpha: f64,
}

/// A validated configuration together with the model it describes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: NetworkConfig,
    pub model: NetworkModel,
    /// SHA-256 of the file bytes, lowercase hex.
    pub digest: String,
}

impl LoadedConfig {
    pub fn route_names(&self) -> Vec<&str> {
        self.config.routes.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn resource_names(&self) -> Vec<&str> {
        self.config.resources.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn critical_names(&self) -> Vec<&str> {
        self.model
            .critical_resources()
            .iter()
            .map(|&j| self.config.resources[j].name.as_str())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse(&bytes)
}

pub fn parse(bytes: &[u8]) -> Result<LoadedConfig, CliError> {
    let config: NetworkConfig =
        serde_json::from_slice(bytes).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
    let model = config.build()?;
    Ok(LoadedConfig {
        config,
        model,
        digest: sha256_hex(bytes),
    })
}

fn positive(field: String, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field} must be positive and finite (got {value})")))
    }
}

impl NetworkConfig {
    pub fn build(&self) -> Result<NetworkModel, CliError> {
        if self.resources.is_empty() {
            return Err(CliError::Config("resources: at least one resource is required".into()));
        }
        if self.routes.is_empty() {
            return Err(CliError::Config("routes: at least one route is required".into()));
        }
        positive("alpha".into(), self.alpha)?;

        let mut index = HashMap::new();
        for (j, r) in self.resources.iter().enumerate() {
            positive(format!("resources[{j}] ({:?}).capacity", r.name), r.capacity)?;
            if index.insert(r.name.as_str(), j).is_some() {
                return Err(CliError::Config(format!("resources[{j}].name: duplicate name {:?}", r.name)));
            }
        }
        let mut seen = HashMap::new();
        let mut used = Vec::with_capacity(self.routes.len());
        for (i, r) in self.routes.iter().enumerate() {
            if seen.insert(r.name.as_str(), i).is_some() {
                return Err(CliError::Config(format!("routes[{i}].name: duplicate name {:?}", r.name)));
            }
            let label = format!("routes[{i}] ({:?})", r.name);
            positive(format!("{label}.nu"), r.nu)?;
            positive(format!("{label}.mu"), r.mu)?;
            positive(format!("{label}.kappa"), r.kappa)?;
            if r.resources.is_empty() {
                return Err(CliError::Config(format!("{label}.resources: empty route, it uses no resource")));
            }
            let mut list = Vec::with_capacity(r.resources.len());
            for name in &r.resources {
                let j = *index
                    .get(name.as_str())
                    .ok_or_else(|| CliError::Config(format!("{label}.resources: unknown resource {name:?}")))?;
                if list.contains(&j) {
                    return Err(CliError::Config(format!("{label}.resources: {name:?} listed twice")));
                }
                list.push(j);
            }
            used.push(list);
        }

        let capacities = self.resources.iter().map(|r| r.capacity).collect();
        let topology = Topology::from_routes(capacities, &used).map_err(|e| self.describe(e))?;
        let traffic = TrafficParams {
            arrival_rates: self.routes.iter().map(|r| r.nu).collect(),
            service_rates: self.routes.iter().map(|r| r.mu).collect(),
            weights: self.routes.iter().map(|r| r.kappa).collect(),
            alpha: self.alpha,
        };
        NetworkModel::new(topology, traffic).map_err(|e| self.describe(e))
    }

    /// Rewrites index-based model errors in terms of the names in the file.
    fn describe(&self, err: NetworkError) -> CliError {
        let resource = |j: usize| format!("resource {:?}", self.resources[j].name);
        let message = match &err {
            NetworkError::Overloaded { resource: j, load, capacity } => {
                format!("{} is overloaded: offered load {load} exceeds capacity {capacity}", resource(*j))
            }
            NetworkError::Topology(report) => {
                let issues: Vec<String> = report
                    .issues
                    .iter()
                    .map(|issue| match issue {
                        ValidationIssue::RankDeficient { rank, required } => format!(
                            "routes: incidence matrix has rank {rank} but {required} resources; \
                             some resource constraint is implied by the others"
                        ),
                        ValidationIssue::BadCapacity { resource: j, value } => {
                            format!("{}: capacity {value} must be positive and finite", resource(*j))
                        }
                        other => other.to_string(),
                    })
                    .collect();
                issues.join("; ")
            }
            _ => err.to_string(),
        };
        CliError::Config(message)
    }
}
