//! Flow-count Markov chain and its law-of-large-numbers rescaling.
//!
//! The chain jumps `N → N + e_i` at rate `ν_i` and `N → N − e_i` at rate
//! `μ_i Λ_i(N)` when `N_i ≥ 1`. Paths are built from the time-change
//! representation
//!
//! ```text
//! N_i(t) = N_i(0) + E_i(t) − S_i(T_i(t)),   T_i(t) = ∫_0^t Λ_i(N(s)) ds
//! ```
//!
//! where `E_i` is a Poisson process of rate `ν_i` and `S_i` one of rate
//! `μ_i` run on the cumulative-allocation clock `T_i`. Between events every
//! rate is constant, so the next event is the earliest of the pending
//! arrival times and the times at which some `T_i` reaches the next point of
//! `S_i`. This produces the same law as drawing an exponential holding time
//! with the total rate and choosing the event proportionally, and it keeps
//! `E` and `S` explicit.
//!
//! # Random streams
//!
//! Each run is keyed by a `u64` seed. Route `i` draws its arrival gaps from
//! ChaCha8 stream `2i` and its service amounts from stream `2i + 1` of that
//! key, so every (route, event type) pair has its own reproducible sequence
//! independent of how events interleave.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, Exp1};

use crate::allocator::{AllocError, Allocator, EPS_KKT};
use crate::compare::{compare_trajectories, CompareError};
use crate::network::NetworkModel;

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;
/// Allocations cached per run before the cache is flushed.
pub const DEFAULT_CACHE_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CtmcError {
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error("initial state has {found} entries for {expected} routes")]
    StateLength { found: usize, expected: usize },
    #[error("horizon must be nonnegative and finite (got {0})")]
    Horizon(f64),
    #[error("event cap of {0} exceeded")]
    EventCap(u64),
    #[error("path ends at {available}, but rescaling needs it up to {required}")]
    HorizonTooShort { required: f64, available: f64 },
    #[error("scale must be positive and finite (got {0})")]
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Event {
    Arrival(usize),
    Departure(usize),
}

impl Event {
    pub fn route(self) -> usize {
        match self {
            Self::Arrival(i) | Self::Departure(i) => i,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Arrival(_) => "arrival",
            Self::Departure(_) => "departure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub event_cap: u64,
    pub eps_kkt: f64,
    pub cache_limit: usize,
    /// Switches every arrival stream off (a test-only degenerate mode).
    pub arrivals: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
            eps_kkt: EPS_KKT,
            cache_limit: DEFAULT_CACHE_LIMIT,
            arrivals: true,
        }
    }
}

/// A simulated path. Node `0` is time 0; node `k ≥ 1` is the state right
/// after the `k`-th event. `T` and `U` are piecewise linear between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    routes: usize,
    resources: usize,
    pub seed: u64,
    pub horizon: f64,
    times: Vec<f64>,
    events: Vec<Event>,
    states: Vec<u32>,
    cumulative: Vec<f64>,
    unused: Vec<f64>,
    end_cumulative: Vec<f64>,
    end_unused: Vec<f64>,
    /// Allocation in force on each inter-event interval.
    rates: Vec<f64>,
}

impl EventPath {
    pub fn route_count(&self) -> usize {
        self.routes
    }

    pub fn resource_count(&self) -> usize {
        self.resources
    }

    /// Number of nodes (events + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times[1..]
    }

    pub fn node_time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn state(&self, k: usize) -> &[u32] {
        &self.states[k * self.routes..(k + 1) * self.routes]
    }

    pub fn initial_state(&self) -> &[u32] {
        self.state(0)
    }

    pub fn final_state(&self) -> &[u32] {
        self.state(self.len() - 1)
    }

    /// `T(t_k)`.
    pub fn cumulative_allocation(&self, k: usize) -> &[f64] {
        &self.cumulative[k * self.routes..(k + 1) * self.routes]
    }

    /// `U(t_k) = C t_k − A T(t_k)`, accumulated interval by interval.
    pub fn unused_capacity(&self, k: usize) -> &[f64] {
        &self.unused[k * self.resources..(k + 1) * self.resources]
    }

    /// `Λ(N)` on the interval that starts at node `k`.
    pub fn allocation(&self, k: usize) -> &[f64] {
        &self.rates[k * self.routes..(k + 1) * self.routes]
    }

    pub fn cumulative_at_horizon(&self) -> &[f64] {
        &self.end_cumulative
    }

    pub fn unused_at_horizon(&self) -> &[f64] {
        &self.end_unused
    }

    /// Index of the node in force just before `t` (left limit).
    fn node_before(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t).saturating_sub(1)
    }

    /// `N(t−)`, or `N(0)` at `t = 0`.
    pub fn state_before(&self, t: f64) -> &[u32] {
        self.state(self.node_before(t))
    }

    fn interpolate(&self, t: f64, values: &[f64], end: &[f64], width: usize, out: &mut [f64]) {
        let k = self.node_before(t);
        let t0 = self.times[k];
        let (t1, next) = if k + 1 < self.len() {
            (self.times[k + 1], &values[(k + 1) * width..(k + 2) * width])
        } else {
            (self.horizon, end)
        };
        let here = &values[k * width..(k + 1) * width];
        let theta = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        for (o, (a, b)) in out.iter_mut().zip(here.iter().zip(next)) {
            *o = a + theta * (b - a);
        }
    }

    pub fn cumulative_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.routes];
        self.interpolate(t, &self.cumulative, &self.end_cumulative, self.routes, &mut out);
        out
    }

    pub fn unused_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.resources];
        self.interpolate(t, &self.unused, &self.end_unused, self.resources, &mut out);
        out
    }

    /// Arrivals and departures per route over the whole path.
    pub fn event_counts(&self) -> (Vec<u64>, Vec<u64>) {
        let mut arrivals = vec![0; self.routes];
        let mut departures = vec![0; self.routes];
        for e in &self.events {
            match *e {
                Event::Arrival(i) => arrivals[i] += 1,
                Event::Departure(i) => departures[i] += 1,
            }
        }
        (arrivals, departures)
    }

    /// Time-weighted mean of `N_i` over `[0, horizon]`.
    pub fn time_average(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.routes];
        for k in 0..self.len() {
            let end = if k + 1 < self.len() {
                self.times[k + 1]
            } else {
                self.horizon
            };
            let width = end - self.times[k];
            for (a, &n) in acc.iter_mut().zip(self.state(k)) {
                *a += width * f64::from(n);
            }
        }
        if self.horizon > 0.0 {
            acc.iter_mut().for_each(|a| *a /= self.horizon);
        }
        acc
    }
}

/// Outgoing transitions of the chain at state `n`.
pub fn transition_rates(model: &NetworkModel, n: &[u32]) -> Result<Vec<(Event, f64)>, CtmcError> {
    if n.len() != model.route_count() {
        return Err(CtmcError::StateLength {
            found: n.len(),
            expected: model.route_count(),
        });
    }
    let state: Vec<f64> = n.iter().map(|&x| f64::from(x)).collect();
    let allocation = Allocator::new(model).allocate(&state)?;
    let mut out: Vec<(Event, f64)> = model
        .arrival_rates()
        .iter()
        .enumerate()
        .map(|(i, &nu)| (Event::Arrival(i), nu))
        .collect();
    for i in 0..n.len() {
        if n[i] >= 1 {
            out.push((
                Event::Departure(i),
                model.service_rates()[i] * allocation.lambda[i],
            ));
        }
    }
    Ok(out)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

struct AllocationCache<'m> {
    allocator: Allocator<'m>,
    map: BTreeMap<Vec<u32>, Vec<f64>>,
    limit: usize,
    prices: Option<Vec<f64>>,
    scratch: Vec<f64>,
}

impl<'m> AllocationCache<'m> {
    fn lookup(&mut self, n: &[u32]) -> Result<&[f64], AllocError> {
        if !self.map.contains_key(n) {
            self.scratch.clear();
            self.scratch.extend(n.iter().map(|&x| f64::from(x)));
            let allocation = self
                .allocator
                .allocate_warm(&self.scratch, self.prices.as_deref())?;
            if self.map.len() >= self.limit {
                self.map.clear();
            }
            if n.iter().any(|&x| x > 0) {
                self.prices = Some(allocation.prices);
            }
            self.map.insert(n.to_vec(), allocation.lambda);
        }
        Ok(&self.map[n])
    }
}

/// Simulates the chain from `n0` on `[0, horizon]`.
pub fn simulate(
    model: &NetworkModel,
    n0: &[u32],
    horizon: f64,
    seed: u64,
    options: SimulationOptions,
) -> Result<EventPath, CtmcError> {
    let routes = model.route_count();
    let resources = model.resource_count();
    if n0.len() != routes {
        return Err(CtmcError::StateLength {
            found: n0.len(),
            expected: routes,
        });
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(CtmcError::Horizon(horizon));
    }
    let topo = model.topology();
    let (nu, mu) = (model.arrival_rates(), model.service_rates());

    let mut arrival_rng: Vec<ChaCha8Rng> = (0..routes).map(|i| stream(seed, 2 * i as u64)).collect();
    let mut service_rng: Vec<ChaCha8Rng> =
        (0..routes).map(|i| stream(seed, 2 * i as u64 + 1)).collect();
    let mut next_arrival: Vec<f64> = (0..routes)
        .map(|i| {
            if options.arrivals {
                exponential(&mut arrival_rng[i], nu[i])
            } else {
                f64::INFINITY
            }
        })
        .collect();
    // next point of S_i, measured on the T_i clock
    let mut next_service: Vec<f64> = (0..routes)
        .map(|i| exponential(&mut service_rng[i], mu[i]))
        .collect();

    let mut cache = AllocationCache {
        allocator: Allocator::new(model).with_tolerance(options.eps_kkt),
        map: BTreeMap::new(),
        limit: options.cache_limit.max(1),
        prices: None,
        scratch: Vec::with_capacity(routes),
    };

    let mut path = EventPath {
        routes,
        resources,
        seed,
        horizon,
        times: vec![0.0],
        events: Vec::new(),
        states: n0.to_vec(),
        cumulative: vec![0.0; routes],
        unused: vec![0.0; resources],
        end_cumulative: Vec::new(),
        end_unused: Vec::new(),
        rates: Vec::new(),
    };
    let mut n = n0.to_vec();
    let mut clock = vec![0.0; routes];
    let mut unused = vec![0.0; resources];
    let mut slack = vec![0.0; resources];
    let mut t = 0.0;

    loop {
        let lambda = cache.lookup(&n)?.to_vec();
        path.rates.extend_from_slice(&lambda);
        topo.apply_into(&lambda, &mut slack);
        for (s, &c) in slack.iter_mut().zip(topo.capacities()) {
            // rounding must not make U decrease
            *s = (c - *s).max(0.0);
        }

        let mut next_time = f64::INFINITY;
        let mut next_event = None;
        for i in 0..routes {
            if next_arrival[i] < next_time {
                next_time = next_arrival[i];
                next_event = Some(Event::Arrival(i));
            }
            if n[i] > 0 && lambda[i] > 0.0 {
                let due = t + (next_service[i] - clock[i]).max(0.0) / lambda[i];
                if due < next_time {
                    next_time = due;
                    next_event = Some(Event::Departure(i));
                }
            }
        }

        let (stop, until) = match next_event {
            Some(_) if next_time <= horizon => (false, next_time),
            _ => (true, horizon),
        };
        let width = until - t;
        for i in 0..routes {
            clock[i] += lambda[i] * width;
        }
        for j in 0..resources {
            unused[j] += slack[j] * width;
        }
        t = until;
        if stop {
            path.end_cumulative = clock;
            path.end_unused = unused;
            return Ok(path);
        }

        let event = next_event.expect("event scheduled");
        match event {
            Event::Arrival(i) => {
                n[i] += 1;
                next_arrival[i] += exponential(&mut arrival_rng[i], nu[i]);
            }
            Event::Departure(i) => {
                n[i] -= 1;
                clock[i] = next_service[i];
                next_service[i] += exponential(&mut service_rng[i], mu[i]);
            }
        }
        if path.events.len() as u64 >= options.event_cap {
            return Err(CtmcError::EventCap(options.event_cap));
        }
        path.events.push(event);
        path.times.push(t);
        path.states.extend_from_slice(&n);
        path.cumulative.extend_from_slice(&clock);
        path.unused.extend_from_slice(&unused);
    }
}

/// A path under law-of-large-numbers scaling, sampled on a grid:
/// `N̄(t) = N(rt−)/r`, `T̄(t) = T(rt)/r`, `Ū(t) = U(rt)/r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPath {
    pub scale: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub cumulative: Vec<Vec<f64>>,
    pub unused: Vec<Vec<f64>>,
}

pub fn rescale(path: &EventPath, scale: f64, grid: &[f64]) -> Result<ScaledPath, CtmcError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CtmcError::Scale(scale));
    }
    let required = grid.iter().fold(0.0f64, |m, &t| m.max(t)) * scale;
    if required > path.horizon * (1.0 + 1e-12) {
        return Err(CtmcError::HorizonTooShort {
            required,
            available: path.horizon,
        });
    }
    let mut out = ScaledPath {
        scale,
        times: grid.to_vec(),
        states: Vec::with_capacity(grid.len()),
        cumulative: Vec::with_capacity(grid.len()),
        unused: Vec::with_capacity(grid.len()),
    };
    for &t in grid {
        let real = (t * scale).min(path.horizon);
        out.states.push(
            path.state_before(real)
                .iter()
                .map(|&x| f64::from(x) / scale)
                .collect(),
        );
        out.cumulative
            .push(path.cumulative_at(real).into_iter().map(|x| x / scale).collect());
        out.unused
            .push(path.unused_at(real).into_iter().map(|x| x / scale).collect());
    }
    Ok(out)
}

/// `round(r·n0)`.
pub fn scaled_initial_state(n0: &[f64], scale: f64) -> Vec<u32> {
    n0.iter().map(|&x| (x * scale).round().max(0.0) as u32).collect()
}

/// One run of the fluid-limit experiment: simulate from `round(r·n0)` up to
/// `r·max(grid)`, rescale, and return `sup_t ‖N̄^r(t) − n(t)‖` against the
/// fluid path `fluid` sampled on the same grid.
pub fn fluid_limit_error(
    model: &NetworkModel,
    n0: &[f64],
    scale: f64,
    seed: u64,
    grid: &[f64],
    fluid: &[Vec<f64>],
    options: SimulationOptions,
) -> Result<f64, CtmcError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CtmcError::Scale(scale));
    }
    let horizon = grid.iter().fold(0.0f64, |m, &t| m.max(t)) * scale;
    let start = scaled_initial_state(n0, scale);
    let path = simulate(model, &start, horizon, seed, options)?;
    let scaled = rescale(&path, scale, grid)?;
    let distance = compare_trajectories(grid, &scaled.states, grid, fluid, grid)?;
    Ok(distance.sup)
}

/// Sup-norm errors of the fluid-limit experiment, per scale and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidLimitReport {
    pub scales: Vec<f64>,
    pub seeds: Vec<u64>,
    /// `errors[k][s]` for scale `k` and seed `s`.
    pub errors: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

impl FluidLimitReport {
    pub fn new(scales: Vec<f64>, seeds: Vec<u64>, errors: Vec<Vec<f64>>) -> Self {
        let medians = errors.iter().map(|e| median(e)).collect();
        Self {
            scales,
            seeds,
            errors,
            medians,
        }
    }

    /// Medians strictly decrease as the scale increases.
    pub fn medians_decreasing(&self) -> bool {
        let mut order: Vec<usize> = (0..self.scales.len()).collect();
        order.sort_by(|&a, &b| self.scales[a].total_cmp(&self.scales[b]));
        order
            .windows(2)
            .all(|w| self.medians[w[1]] < self.medians[w[0]])
    }
}

/// Runs every (scale, seed) pair sequentially against one fluid path.
pub fn fluid_limit_experiment(
    model: &NetworkModel,
    n0: &[f64],
    scales: &[f64],
    seeds: &[u64],
    grid: &[f64],
    fluid: &[Vec<f64>],
    options: SimulationOptions,
) -> Result<FluidLimitReport, CtmcError> {
    let errors = scales
        .iter()
        .map(|&r| {
            seeds
                .iter()
                .map(|&seed| fluid_limit_error(model, n0, r, seed, grid, fluid, options))
                .collect::<Result<Vec<f64>, CtmcError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FluidLimitReport::new(scales.to_vec(), seeds.to_vec(), errors))
}
