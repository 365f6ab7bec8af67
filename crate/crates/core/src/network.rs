//! Network structure, traffic parameters and loads.
//!
//! A [`Topology`] is a `J×I` incidence matrix `A` (resource `j` lies on route
//! `i` iff `A_ji = 1`) together with the capacities `C_j`. A
//! [`NetworkModel`] adds the per-route arrival rates `ν`, service rates `μ`,
//! weights `κ` and the fairness parameter `α`. Construction of a model
//! rejects anything the downstream analysis cannot handle: invalid
//! topologies, non-positive parameters and overloaded resources.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

/// Relative tolerance `ε_crit` used to decide `Σ_i A_ji ρ_i = C_j`.
pub const CRITICAL_TOL: f64 = 1e-9;

/// Singular values below `RANK_TOL · σ_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("incidence matrix must have at least one resource and one route")]
    Empty,
    #[error("incidence row {row} has {found} entries, expected {expected}")]
    RaggedIncidence {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{found} capacities given for {expected} resources")]
    CapacityCount { found: usize, expected: usize },
    #[error("route {route} references resource {resource}, but only {count} exist")]
    UnknownResource {
        route: usize,
        resource: usize,
        count: usize,
    },
    #[error("invalid topology: {0}")]
    Topology(ValidationReport),
    #[error("{field} has {found} entries for {expected} routes")]
    ParamCount {
        field: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("{field}[{route}] must be positive and finite (got {value})")]
    NonPositive {
        field: &'static str,
        route: usize,
        value: f64,
    },
    #[error("alpha must be positive and finite (got {0})")]
    Alpha(f64),
    #[error("resource {resource} is overloaded: load {load} exceeds capacity {capacity}")]
    Overloaded {
        resource: usize,
        load: f64,
        capacity: f64,
    },
}

/// One violated structural assumption.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    NonBinary {
        resource: usize,
        route: usize,
        value: u8,
    },
    EmptyRoute {
        route: usize,
    },
    RankDeficient {
        rank: usize,
        required: usize,
    },
    BadCapacity {
        resource: usize,
        value: f64,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonBinary {
                resource,
                route,
                value,
            } => write!(f, "entry A[{resource}][{route}] = {value} is not 0 or 1"),
            Self::EmptyRoute { route } => write!(f, "empty route {route}: it uses no resource"),
            Self::RankDeficient { rank, required } => {
                write!(f, "rank deficient: rank {rank} < {required} resources")
            }
            Self::BadCapacity { resource, value } => write!(
                f,
                "capacity of resource {resource} must be positive and finite (got {value})"
            ),
        }
    }
}

/// Every structural violation found in a topology; empty means valid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("valid");
        }
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Incidence matrix and capacities. Only the shape is checked on
/// construction; call [`Topology::validate`] for the structural assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    resources: usize,
    routes: usize,
    /// Row-major `J×I`.
    incidence: Vec<u8>,
    capacities: Vec<f64>,
    route_resources: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from the rows of `A` (one row per resource).
    pub fn from_rows(rows: &[Vec<u8>], capacities: Vec<f64>) -> Result<Self, NetworkError> {
        let resources = rows.len();
        let routes = rows.first().map_or(0, Vec::len);
        if resources == 0 || routes == 0 {
            return Err(NetworkError::Empty);
        }
        if capacities.len() != resources {
            return Err(NetworkError::CapacityCount {
                found: capacities.len(),
                expected: resources,
            });
        }
        let mut incidence = Vec::with_capacity(resources * routes);
        for (row, entries) in rows.iter().enumerate() {
            if entries.len() != routes {
                return Err(NetworkError::RaggedIncidence {
                    row,
                    found: entries.len(),
                    expected: routes,
                });
            }
            incidence.extend_from_slice(entries);
        }
        let route_resources = (0..routes)
            .map(|i| {
                (0..resources)
                    .filter(|&j| incidence[j * routes + i] != 0)
                    .collect()
            })
            .collect();
        Ok(Self {
            resources,
            routes,
            incidence,
            capacities,
            route_resources,
        })
    }

    /// Builds a topology from the resource list of each route.
    pub fn from_routes(
        capacities: Vec<f64>,
        routes: &[Vec<usize>],
    ) -> Result<Self, NetworkError> {
        let resources = capacities.len();
        let mut rows = vec![vec![0u8; routes.len()]; resources];
        for (i, used) in routes.iter().enumerate() {
            for &j in used {
                if j >= resources {
                    return Err(NetworkError::UnknownResource {
                        route: i,
                        resource: j,
                        count: resources,
                    });
                }
                rows[j][i] = 1;
            }
        }
        Self::from_rows(&rows, capacities)
    }

    pub fn resource_count(&self) -> usize {
        self.resources
    }

    pub fn route_count(&self) -> usize {
        self.routes
    }

    /// Entry `A_ji`.
    pub fn entry(&self, resource: usize, route: usize) -> u8 {
        self.incidence[resource * self.routes + route]
    }

    pub fn uses(&self, resource: usize, route: usize) -> bool {
        self.entry(resource, route) != 0
    }

    pub fn capacity(&self, resource: usize) -> f64 {
        self.capacities[resource]
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    /// Resources on route `i`.
    pub fn resources_of(&self, route: usize) -> &[usize] {
        &self.route_resources[route]
    }

    /// `max_j C_j`, the uniform bound on any route's allocation.
    pub fn max_capacity(&self) -> f64 {
        self.capacities.iter().fold(0.0, |m, &c| m.max(c))
    }

    /// `(A x)_j` for every resource.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.resources];
        self.apply_into(x, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            for &j in &self.route_resources[i] {
                out[j] += xi;
            }
        }
    }

    /// Numerical rank of `A` (singular values above `RANK_TOL · σ_max`).
    pub fn rank(&self) -> usize {
        let a = DMatrix::from_fn(self.resources, self.routes, |j, i| {
            f64::from(self.entry(j, i))
        });
        let sv = a.singular_values();
        let top = sv.iter().fold(0.0f64, |m, &s| m.max(s));
        if top == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_TOL * top).count()
    }

    /// Checks the structural assumptions: binary entries, no empty route,
    /// full row rank and positive finite capacities.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        for j in 0..self.resources {
            for i in 0..self.routes {
                let value = self.entry(j, i);
                if value > 1 {
                    issues.push(ValidationIssue::NonBinary {
                        resource: j,
                        route: i,
                        value,
                    });
                }
            }
        }
        for (i, used) in self.route_resources.iter().enumerate() {
            if used.is_empty() {
                issues.push(ValidationIssue::EmptyRoute { route: i });
            }
        }
        let rank = self.rank();
        if rank < self.resources {
            issues.push(ValidationIssue::RankDeficient {
                rank,
                required: self.resources,
            });
        }
        for (j, &c) in self.capacities.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                issues.push(ValidationIssue::BadCapacity {
                    resource: j,
                    value: c,
                });
            }
        }
        ValidationReport { issues }
    }
}

/// Per-route traffic: arrival rates `ν`, service rates `μ` (inverse mean
/// document size), weights `κ`, and the fairness parameter `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficParams {
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
}

impl TrafficParams {
    fn check(&self, routes: usize) -> Result<(), NetworkError> {
        let fields = [
            ("nu", &self.arrival_rates),
            ("mu", &self.service_rates),
            ("kappa", &self.weights),
        ];
        for (field, values) in fields {
            if values.len() != routes {
                return Err(NetworkError::ParamCount {
                    field,
                    found: values.len(),
                    expected: routes,
                });
            }
            if let Some((route, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
            {
                return Err(NetworkError::NonPositive {
                    field,
                    route,
                    value,
                });
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(NetworkError::Alpha(self.alpha));
        }
        Ok(())
    }
}

/// A validated network with its loads and critical resources. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    topology: Topology,
    traffic: TrafficParams,
    loads: Vec<f64>,
    critical: Vec<usize>,
}

impl NetworkModel {
    pub fn new(topology: Topology, traffic: TrafficParams) -> Result<Self, NetworkError> {
        let report = topology.validate();
        if !report.is_valid() {
            return Err(NetworkError::Topology(report));
        }
        traffic.check(topology.route_count())?;
        let loads: Vec<f64> = traffic
            .arrival_rates
            .iter()
            .zip(&traffic.service_rates)
            .map(|(nu, mu)| nu / mu)
            .collect();
        let offered = topology.apply(&loads);
        let mut critical = Vec::new();
        for (j, (&load, &capacity)) in offered.iter().zip(topology.capacities()).enumerate() {
            let gap = load - capacity;
            if gap.abs() <= CRITICAL_TOL * capacity {
                critical.push(j);
            } else if gap > 0.0 {
                return Err(NetworkError::Overloaded {
                    resource: j,
                    load,
                    capacity,
                });
            }
        }
        Ok(Self {
            topology,
            traffic,
            loads,
            critical,
        })
    }

    /// The two-resource, three-route line: routes `{1}`, `{2}` and `{1,2}`
    /// with unit capacities and `κ = μ = 1`, so `ν` equals the loads.
    pub fn linear_network(arrival_rates: [f64; 3], alpha: f64) -> Result<Self, NetworkError> {
        let topology = Topology::from_routes(vec![1.0, 1.0], &[vec![0], vec![1], vec![0, 1]])?;
        Self::new(
            topology,
            TrafficParams {
                arrival_rates: arrival_rates.to_vec(),
                service_rates: vec![1.0; 3],
                weights: vec![1.0; 3],
                alpha,
            },
        )
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn traffic(&self) -> &TrafficParams {
        &self.traffic
    }

    pub fn route_count(&self) -> usize {
        self.topology.route_count()
    }

    pub fn resource_count(&self) -> usize {
        self.topology.resource_count()
    }

    pub fn alpha(&self) -> f64 {
        self.traffic.alpha
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.traffic.arrival_rates
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.traffic.service_rates
    }

    pub fn weights(&self) -> &[f64] {
        &self.traffic.weights
    }

    /// `ρ_i = ν_i / μ_i`.
    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    /// `(Σ_i A_ji ρ_i) / C_j` for every resource.
    pub fn load_ratios(&self) -> Vec<f64> {
        self.topology
            .apply(&self.loads)
            .into_iter()
            .zip(self.topology.capacities())
            .map(|(load, c)| load / c)
            .collect()
    }

    /// Resources whose load equals capacity within `ε_crit`, in index order.
    pub fn critical_resources(&self) -> &[usize] {
        &self.critical
    }

    /// True when no resource is saturated; the manifold machinery then
    /// degenerates to the origin.
    pub fn is_subcritical(&self) -> bool {
        self.critical.is_empty()
    }
}
