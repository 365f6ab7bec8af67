//! Flow-level bandwidth sharing under weighted α-fair allocation.
//!
//! The crate covers four layers of the same model:
//!
//! * [`network`]: incidence structure, capacities and traffic parameters,
//!   with the loads `ρ_i = ν_i/μ_i` and the set of critical resources.
//! * [`allocator`]: the α-fair allocation `Λ(n)` for a state `n`, solved on
//!   the dual with a projected Newton method (see [`dual`]).
//! * [`fluid`] and [`ctmc`]: the deterministic fluid model and the
//!   stochastic flow-count Markov chain, plus the law-of-large-numbers
//!   rescaling that connects them.
//! * [`manifold`]: the Lyapunov function, the workload map, the lifting map
//!   `Δ`, the gap function and the workload cone.
//!
//! Everything here is `no_std` + `alloc`; file formats and the CLI live in
//! the companion `alphafair` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod allocator;
pub mod compare;
pub mod ctmc;
pub mod dual;
pub mod fluid;
pub mod manifold;
pub mod network;

mod math;

pub use allocator::{allocate, kkt_residual, objective, AllocError, Allocation, Allocator};
pub use compare::{compare_trajectories, CompareError, TrajectoryDistance};
pub use ctmc::{
    fluid_limit_error, rescale, simulate, transition_rates, CtmcError, Event, EventPath,
    FluidLimitReport, ScaledPath, SimulationOptions,
};
pub use fluid::{
    drift, feasibility_margin, integrate, uniform_grid, FluidError, FluidOptions, FluidSample,
    FluidState, FluidTrajectory,
};
pub use manifold::{
    cone_closed_form_linear, cone_contains, dissipation_k, gap_h, invariant_from_q, is_invariant,
    lift_delta, linear_cone_closed_form, lyapunov_f, workload, InvarianceCheck, LiftResult,
    ManifoldError, ManifoldPoint,
};
pub use network::{
    NetworkError, NetworkModel, Topology, TrafficParams, ValidationIssue, ValidationReport,
};
