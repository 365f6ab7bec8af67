//! Critical fluid model: `dn_i/dt = ν_i − μ_i Λ_i(n)` while `n_i > 0`,
//! and `dn_i/dt = 0` while `n_i = 0`.
//!
//! The integrator is explicit Euler with exact zero-crossing handling: the
//! drift is constant over an Euler step, so the first time a component
//! reaches zero is `n_i / |drift_i|`. The step is cut there, the component
//! is set to exactly zero and frozen. It stays frozen as long as the
//! nonempty routes leave room for its offered load on every resource it
//! uses; otherwise it refills from zero at rate `ν_i`.
//!
//! Alongside the path the integrator records `F`, `K`, `H`, the workload and
//! the capacity margins at every output time, plus the time average of `K`
//! since the previous output time, so that `ΔF/Δt` can be checked against it.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::allocator::{AllocError, Allocation, Allocator, EPS_KKT};
use crate::manifold::{self, dissipation_with, lyapunov_f, workload_unchecked, ManifoldError};
use crate::math::euclidean_distance;
use crate::network::NetworkModel;

/// Components at or below this value count as empty.
pub const N_FLOOR: f64 = 1e-12;

/// Largest relative growth of a small component in one step. Near zero the
/// allocation of a route rises steeply with its own state, so a component
/// filling up from (near) empty is stepped on its own timescale rather than
/// on `dt`; starting from exactly zero the first step is `GROWTH_LIMIT²·dt`.
const GROWTH_LIMIT: f64 = 0.05;

/// Crossing steps shorter than this are taken as immediate.
const CROSSING_RESOLUTION: f64 = 1e-12;


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FluidError {
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error("time step must be positive and finite (got {0})")]
    Step(f64),
    #[error("horizon must be nonnegative and finite (got {0})")]
    Horizon(f64),
    #[error("output grid must be increasing and lie in [0, horizon]")]
    Grid,
    #[error("H increased by {increase} (tolerance {tolerance}) between t = {from} and t = {to}")]
    GapIncrease {
        from: f64,
        to: f64,
        increase: f64,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidOptions {
    /// Euler step.
    pub dt: f64,
    /// Allocator tolerance.
    pub eps_kkt: f64,
    /// Constant part of the monotonicity tolerance.
    pub tol_mono_base: f64,
    /// Fail with [`FluidError::GapIncrease`] when `H` rises between samples.
    pub enforce_gap_monotone: bool,
}

impl FluidOptions {
    /// `dt = 10⁻³ · min_i 1/μ_i`.
    pub fn for_model(model: &NetworkModel) -> Self {
        let fastest = model.service_rates().iter().fold(0.0f64, |m, &mu| m.max(mu));
        Self {
            dt: 1e-3 / fastest,
            eps_kkt: EPS_KKT,
            tol_mono_base: 1e-6,
            enforce_gap_monotone: true,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// A point of a fluid path.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    pub n: Vec<f64>,
}

/// Diagnostics at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidSample {
    pub t: f64,
    pub n: Vec<f64>,
    pub drift: Vec<f64>,
    pub f: f64,
    pub k: f64,
    /// `None` for subcritical models.
    pub h: Option<f64>,
    /// `‖n − Δ(w(n))‖`; `None` for subcritical models.
    pub lift_distance: Option<f64>,
    /// Workload on the critical resources (empty when subcritical).
    pub w: Vec<f64>,
    /// Capacity margin per resource, see [`feasibility_margin`].
    pub feasibility: Vec<f64>,
    pub kkt_residual: f64,
    /// Time average of `K` since the previous sample (`K` itself at the
    /// first sample).
    pub k_average: f64,
}

impl FluidSample {
    pub fn state(&self) -> FluidState {
        FluidState {
            t: self.t,
            n: self.n.clone(),
        }
    }
}

/// Worst monotonicity defects along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monotonicity {
    /// Largest increase of `F` between consecutive samples.
    pub f_increase: f64,
    /// Largest increase of `H` between consecutive samples.
    pub h_increase: f64,
    /// Largest decrease of any critical workload between samples.
    pub w_decrease: f64,
    /// Largest `|ΔF/Δt − K̄|` between consecutive samples, with `K̄` the
    /// time average of `K` over the interval.
    pub secant_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidTrajectory {
    pub samples: Vec<FluidSample>,
    pub dt: f64,
    pub steps: usize,
    /// `max |K|` over every internal step.
    pub max_abs_k: f64,
    pub max_kkt_residual: f64,
    pub tol_mono_base: f64,
}

impl FluidTrajectory {
    /// `tol_mono = base + 10·dt·max|K|`.
    pub fn tol_mono(&self) -> f64 {
        self.tol_mono_base + 10.0 * self.dt * self.max_abs_k
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.n.clone()).collect()
    }

    pub fn last(&self) -> Option<&FluidSample> {
        self.samples.last()
    }

    pub fn monotonicity(&self) -> Monotonicity {
        let mut f_increase = 0.0f64;
        let mut h_increase = 0.0f64;
        let mut w_decrease = 0.0f64;
        let mut secant_error = 0.0f64;
        for pair in self.samples.windows(2) {
            f_increase = f_increase.max(pair[1].f - pair[0].f);
            let span = pair[1].t - pair[0].t;
            if span > 0.0 {
                let secant = (pair[1].f - pair[0].f) / span;
                secant_error = secant_error.max((secant - pair[1].k_average).abs());
            }
            if let (Some(a), Some(b)) = (pair[0].h, pair[1].h) {
                h_increase = h_increase.max(b - a);
            }
            for (a, b) in pair[0].w.iter().zip(&pair[1].w) {
                w_decrease = w_decrease.max(a - b);
            }
        }
        Monotonicity {
            f_increase,
            h_increase,
            w_decrease,
            secant_error,
        }
    }

    /// Most negative capacity margin seen at any sample (zero if none).
    pub fn max_feasibility_violation(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.feasibility.iter())
            .fold(0.0f64, |m, &x| m.max(-x))
    }
}

fn clean(n: &[f64]) -> Vec<f64> {
    n.iter().map(|&x| if x <= N_FLOOR { 0.0 } else { x }).collect()
}

fn drift_with(model: &NetworkModel, n: &[f64], lambda: &[f64], out: &mut [f64]) {
    let (nu, mu) = (model.arrival_rates(), model.service_rates());
    for i in 0..n.len() {
        out[i] = if n[i] > N_FLOOR {
            nu[i] - mu[i] * lambda[i]
        } else {
            0.0
        };
    }
}

/// Fluid drift at `n`: `ν_i − μ_i Λ_i(n)` on positive components, 0 on
/// components at or below [`N_FLOOR`].
pub fn drift(model: &NetworkModel, n: &[f64]) -> Result<Vec<f64>, AllocError> {
    let n = clean(n);
    let allocation = Allocator::new(model).allocate(&n)?;
    let mut out = vec![0.0; n.len()];
    drift_with(model, &n, &allocation.lambda, &mut out);
    Ok(out)
}

/// Capacity margins charging empty routes their load. When `held` is given,
/// only the empty routes it marks are charged; the others are refilling and
/// are charged what they actually receive, which is nothing.
fn margin_with(model: &NetworkModel, n: &[f64], lambda: &[f64], held: Option<&[bool]>) -> Vec<f64> {
    let effective: Vec<f64> = (0..n.len())
        .map(|i| {
            if n[i] > N_FLOOR {
                lambda[i]
            } else if held.is_some_and(|h| !h[i]) {
                0.0
            } else {
                model.loads()[i]
            }
        })
        .collect();
    model
        .topology()
        .apply(&effective)
        .into_iter()
        .zip(model.topology().capacities())
        .map(|(used, c)| c - used)
        .collect()
}

/// `C_j − (Σ_{n_i>0} A_ji Λ_i(n) + Σ_{n_i=0} A_ji ρ_i)`: empty routes are
/// charged their load. A legal fluid state has every margin ≥ 0.
pub fn feasibility_margin(model: &NetworkModel, n: &[f64]) -> Result<Vec<f64>, AllocError> {
    let n = clean(n);
    let allocation = Allocator::new(model).allocate(&n)?;
    Ok(margin_with(model, &n, &allocation.lambda, None))
}

/// `0, interval, 2·interval, …, horizon` (the horizon is always included).
pub fn uniform_grid(horizon: f64, interval: f64) -> Vec<f64> {
    if !(horizon > 0.0) || !(interval > 0.0) {
        return vec![0.0];
    }
    let count = (horizon / interval - 1e-9).ceil() as usize;
    let mut grid: Vec<f64> = (0..count).map(|k| k as f64 * interval).collect();
    grid.push(horizon);
    grid
}

/// Unfreezes empty routes that cross a resource on which the remaining
/// routes leave less than the empty routes' load. An empty route can only
/// stay empty while it is carried at its offered load `ρ_i`; where the
/// allocation among nonempty routes takes that capacity, holding the route
/// at zero would break the capacity constraint, and it fills up instead.
fn release_overloaded(model: &NetworkModel, n: &[f64], lambda: &[f64], tol: f64, frozen: &mut [bool]) {
    if !frozen.iter().any(|&f| f) {
        return;
    }
    let topo = model.topology();
    let margin = margin_with(model, n, lambda, None);
    for (i, f) in frozen.iter_mut().enumerate() {
        if *f && topo.resources_of(i).iter().any(|&j| margin[j] < -tol) {
            *f = false;
        }
    }
}

struct Sampler<'a> {
    model: &'a NetworkModel,
    critical: bool,
}

impl Sampler<'_> {
    fn sample(
        &self,
        t: f64,
        n: &[f64],
        held: &[bool],
        allocation: &Allocation,
        drift: &[f64],
    ) -> Result<FluidSample, ManifoldError> {
        let model = self.model;
        let f = lyapunov_f(model, n);
        let (h, lift_distance, w) = if self.critical {
            let w = workload_unchecked(model, n);
            let lift = manifold::lift_delta(model, &w)?;
            (
                Some((f - lift.f_lower).max(0.0)),
                Some(euclidean_distance(n, &lift.n)),
                w,
            )
        } else {
            (None, None, Vec::new())
        };
        let k = dissipation_with(model, n, &allocation.lambda);
        Ok(FluidSample {
            t,
            n: n.to_vec(),
            drift: drift.to_vec(),
            f,
            k,
            k_average: k,
            h,
            lift_distance,
            w,
            feasibility: margin_with(model, n, &allocation.lambda, Some(held)),
            kkt_residual: allocation.kkt_residual,
        })
    }
}

/// Integrates the fluid model from `n0` up to `horizon`, recording a sample
/// at every time in `grid` (increasing, within `[0, horizon]`).
pub fn integrate(
    model: &NetworkModel,
    n0: &[f64],
    horizon: f64,
    grid: &[f64],
    options: FluidOptions,
) -> Result<FluidTrajectory, FluidError> {
    crate::allocator::check_state(model, n0)?;
    let dt = options.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(FluidError::Step(dt));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(FluidError::Horizon(horizon));
    }
    let grid_ok = grid.windows(2).all(|w| w[0] < w[1])
        && grid.first().map_or(true, |&t| t >= 0.0)
        && grid.last().map_or(true, |&t| t <= horizon);
    if !grid_ok {
        return Err(FluidError::Grid);
    }

    let routes = model.route_count();
    let sampler = Sampler {
        model,
        critical: !model.is_subcritical(),
    };
    let mut allocator = Allocator::new(model).with_tolerance(options.eps_kkt);
    let feas_tol = 10.0 * options.eps_kkt;
    let mut n = clean(n0);
    let mut frozen: Vec<bool> = n.iter().map(|&x| x == 0.0).collect();
    let mut f_dot = vec![0.0; routes];
    let mut traj = FluidTrajectory {
        samples: Vec::with_capacity(grid.len()),
        dt,
        steps: 0,
        max_abs_k: 0.0,
        max_kkt_residual: 0.0,
        tol_mono_base: options.tol_mono_base,
    };
    let mut next_sample = 0;
    let mut t = 0.0;
    let mut prices: Option<Vec<f64>> = None;
    let (mut last_sample_t, mut k_integral) = (0.0, 0.0);

    loop {
        let allocation = allocator.allocate_warm(&n, prices.as_deref())?;
        traj.max_kkt_residual = traj.max_kkt_residual.max(allocation.kkt_residual);
        drift_with(model, &n, &allocation.lambda, &mut f_dot);
        release_overloaded(model, &n, &allocation.lambda, feas_tol, &mut frozen);
        for i in 0..routes {
            if frozen[i] {
                f_dot[i] = 0.0;
            } else if n[i] == 0.0 {
                // released: no flows yet, so no service
                f_dot[i] = model.arrival_rates()[i];
            }
        }
        let k = dissipation_with(model, &n, &allocation.lambda);
        traj.max_abs_k = traj.max_abs_k.max(k.abs());

        if next_sample < grid.len() && t >= grid[next_sample] {
            let mut sample = sampler.sample(t, &n, &frozen, &allocation, &f_dot)?;
            let span = t - last_sample_t;
            if span > 0.0 {
                sample.k_average = k_integral / span;
            }
            traj.samples.push(sample);
            (last_sample_t, k_integral) = (t, 0.0);
            next_sample += 1;
        }
        if t >= horizon {
            break;
        }
        prices = Some(allocation.prices);

        let target = match grid.get(next_sample) {
            Some(&ts) => (t + dt).min(ts),
            None => (t + dt).min(horizon),
        };
        let mut step = target - t;
        for i in 0..routes {
            if !frozen[i] && f_dot[i] > 0.0 {
                let room = GROWTH_LIMIT * n[i].max(GROWTH_LIMIT * dt * f_dot[i]);
                step = step.min(room / f_dot[i]);
            }
        }
        let mut crossing = false;
        for i in 0..routes {
            if !frozen[i] && f_dot[i] < 0.0 {
                let tau = n[i] / -f_dot[i];
                if tau <= step {
                    step = tau;
                    crossing = true;
                }
            }
        }
        for i in 0..routes {
            if frozen[i] {
                continue;
            }
            let next = n[i] + step * f_dot[i];
            let hits_zero = f_dot[i] < 0.0 && n[i] / -f_dot[i] <= step + CROSSING_RESOLUTION;
            if next <= N_FLOOR || (crossing && hits_zero) {
                n[i] = 0.0;
                frozen[i] = true;
            } else {
                n[i] = next;
            }
        }
        k_integral += step * k;
        t = if crossing || step < target - t { t + step } else { target };
        traj.steps += 1;
    }

    if options.enforce_gap_monotone {
        let tolerance = traj.tol_mono();
        for pair in traj.samples.windows(2) {
            if let (Some(a), Some(b)) = (pair[0].h, pair[1].h) {
                if b - a > tolerance {
                    return Err(FluidError::GapIncrease {
                        from: pair[0].t,
                        to: pair[1].t,
                        increase: b - a,
                        tolerance,
                    });
                }
            }
        }
    }
    Ok(traj)
}
