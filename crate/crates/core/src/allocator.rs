//! Weighted α-fair bandwidth allocation.
//!
//! For a state `n ≥ 0`, routes with `n_i > 0` share capacity by maximising
//!
//! ```text
//! G_n(Λ) = Σ κ_i n_i^α Λ_i^{1−α} / (1−α)     (α ≠ 1)
//!        = Σ κ_i n_i log Λ_i                 (α = 1)
//! ```
//!
//! subject to `A Λ ≤ C`; routes with `n_i = 0` get nothing. Given prices
//! `p ≥ 0` the maximiser is explicit, `Λ_i = n_i (κ_i / Σ_j p_j A_ji)^{1/α}`,
//! so the solver searches over prices (see [`crate::dual`]) and reads the
//! allocation off the closed form.
//!
//! The allocation is invariant under `n → r n`, so the solver works on
//! `n / max_i n_i` and rescales the prices by `(max_i n_i)^α` afterwards.
//! The convergence test is applied to that normalised problem; the returned
//! [`Allocation::kkt_residual`] is always in the caller's units.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::dual::{DualProgram, DualSolver, SolverSettings};
use crate::math::is_log_branch;
use crate::network::NetworkModel;

/// Default stopping tolerance `ε_kkt`.
pub const EPS_KKT: f64 = 1e-9;
/// Default iteration cap.
pub const MAX_ITERS: usize = 100_000;
/// Extra solves allowed when unscaling leaves the residual above target.
const REFINEMENTS: usize = 3;
/// Relative capacity slack attributed to rounding in the inner solve.
const SLACK_ROUNDING: f64 = 16.0 * f64::EPSILON;
/// Smallest initial price.
const PRICE_FLOOR: f64 = 1e-8;

/// An allocation `Λ(n)` with the prices that certify it.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub lambda: Vec<f64>,
    pub prices: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl Allocation {
    fn zero(routes: usize, resources: usize) -> Self {
        Self {
            lambda: vec![0.0; routes],
            prices: vec![0.0; resources],
            kkt_residual: 0.0,
            iterations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocError {
    #[error("state has {found} entries for {expected} routes")]
    StateLength { found: usize, expected: usize },
    #[error("state entry n[{route}] = {value} is not a nonnegative finite number")]
    InvalidState { route: usize, value: f64 },
    #[error("utility is undefined for the zero state")]
    EmptyState,
    #[error("{found} allocations given for {expected} positive routes")]
    AllocationLength { found: usize, expected: usize },
    #[error(
        "allocation did not converge after {} iterations (KKT residual {})",
        best.iterations,
        best.kkt_residual
    )]
    NonConvergence { best: Allocation },
}

pub(crate) fn check_state(model: &NetworkModel, n: &[f64]) -> Result<(), AllocError> {
    if n.len() != model.route_count() {
        return Err(AllocError::StateLength {
            found: n.len(),
            expected: model.route_count(),
        });
    }
    match n.iter().enumerate().find(|(_, &v)| !(v >= 0.0 && v.is_finite())) {
        Some((route, &value)) => Err(AllocError::InvalidState { route, value }),
        None => Ok(()),
    }
}

/// `G_n(Λ⁺)`, where `lambda_pos` lists the allocation of each route with
/// `n_i > 0` in route order. Zero allocations give `−∞` when `α ≥ 1`.
pub fn objective(model: &NetworkModel, n: &[f64], lambda_pos: &[f64]) -> Result<f64, AllocError> {
    check_state(model, n)?;
    let positive: Vec<usize> = (0..n.len()).filter(|&i| n[i] > 0.0).collect();
    if positive.is_empty() {
        return Err(AllocError::EmptyState);
    }
    if lambda_pos.len() != positive.len() {
        return Err(AllocError::AllocationLength {
            found: lambda_pos.len(),
            expected: positive.len(),
        });
    }
    let alpha = model.alpha();
    let kappa = model.weights();
    let mut total = 0.0;
    for (&i, &lam) in positive.iter().zip(lambda_pos) {
        if is_log_branch(alpha) {
            if lam <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += kappa[i] * n[i] * lam.ln();
        } else {
            if lam <= 0.0 && alpha > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += kappa[i] * n[i].powf(alpha) * lam.max(0.0).powf(1.0 - alpha) / (1.0 - alpha);
        }
    }
    Ok(total)
}

/// Largest violation of the optimality conditions for `(Λ, p)` at `n`:
/// primal infeasibility `(AΛ − C)⁺`, complementary slackness
/// `|p_j (C_j − (AΛ)_j)|`, and stationarity
/// `|κ_i n_i^α Λ_i^{−α} − Σ_j p_j A_ji|` on routes with `n_i > 0`.
/// Nonzero allocations to empty routes count as infeasibility.
pub fn kkt_residual(model: &NetworkModel, n: &[f64], lambda: &[f64], prices: &[f64]) -> f64 {
    let topo = model.topology();
    let alpha = model.alpha();
    let kappa = model.weights();
    let load = topo.apply(lambda);
    let mut worst = 0.0f64;
    for j in 0..topo.resource_count() {
        let slack = topo.capacity(j) - load[j];
        worst = worst.max((-slack).max(0.0));
        worst = worst.max((prices[j] * slack).abs());
    }
    for i in 0..n.len() {
        if n[i] > 0.0 {
            let s: f64 = topo.resources_of(i).iter().map(|&j| prices[j]).sum();
            let marginal = if lambda[i] > 0.0 {
                kappa[i] * (n[i] / lambda[i]).powf(alpha)
            } else {
                f64::INFINITY
            };
            worst = worst.max((marginal - s).abs());
        } else {
            worst = worst.max(lambda[i].abs());
        }
    }
    worst
}

/// Solves for `Λ(n)` with default settings.
pub fn allocate(model: &NetworkModel, n: &[f64]) -> Result<Allocation, AllocError> {
    Allocator::new(model).allocate(n)
}

/// One route of the reduced (positive-state) program.
#[derive(Debug, Clone, Default)]
struct RouteTerm {
    route: usize,
    /// Normalised state `n_i / max n`.
    state: f64,
    kappa: f64,
    /// `κ_i^{1/α}`
    kappa_root: f64,
    /// Indices into the reduced resource list.
    resources: Vec<usize>,
}

/// The dual of the allocation problem restricted to positive routes and the
/// resources they use: `D(p) = Σ_j p_j C_j + Σ_i sup_Λ [u_i(Λ) − Λ s_i]`
/// with `s_i = Σ_j p_j A_ji`.
#[derive(Debug, Clone, Default)]
struct AllocationProgram {
    alpha: f64,
    log_branch: bool,
    terms: Vec<RouteTerm>,
    capacities: Vec<f64>,
    lambda: Vec<f64>,
    load: Vec<f64>,
}

impl AllocationProgram {
    fn rate(&self, term: &RouteTerm, s: f64) -> f64 {
        term.state * term.kappa_root * s.powf(-1.0 / self.alpha)
    }

    /// Fills `lambda` and `load`; `None` if some route has zero price.
    fn primal(&mut self, p: &[f64]) -> Option<()> {
        self.load.iter_mut().for_each(|l| *l = 0.0);
        for k in 0..self.terms.len() {
            let term = &self.terms[k];
            let s: f64 = term.resources.iter().map(|&j| p[j]).sum();
            if !(s > 0.0) {
                return None;
            }
            let lam = self.rate(term, s);
            for &j in &term.resources {
                self.load[j] += lam;
            }
            self.lambda[k] = lam;
        }
        Some(())
    }
}

impl DualProgram for AllocationProgram {
    fn dim(&self) -> usize {
        self.capacities.len()
    }

    fn evaluate(&mut self, p: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let m = self.dim();
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut value: f64 = p.iter().zip(&self.capacities).map(|(a, b)| a * b).sum();
        for (j, g) in grad.iter_mut().enumerate() {
            *g = self.capacities[j];
        }
        for term in &self.terms {
            let s: f64 = term.resources.iter().map(|&j| p[j]).sum();
            if !(s > 0.0) {
                return None;
            }
            let lam = self.rate(term, s);
            value += if self.log_branch {
                term.kappa * term.state * ((term.kappa * term.state / s).ln() - 1.0)
            } else {
                self.alpha / (1.0 - self.alpha) * lam * s
            };
            let curvature = lam / (self.alpha * s);
            for &a in &term.resources {
                grad[a] -= lam;
                for &b in &term.resources {
                    hess[a * m + b] += curvature;
                }
            }
        }
        Some(value)
    }

    fn residual(&mut self, p: &[f64]) -> f64 {
        if self.primal(p).is_none() {
            return f64::INFINITY;
        }
        // an overloaded point is later shrunk by its worst load ratio, which
        // shifts every marginal utility by about α times that relative excess
        let top_price = self
            .terms
            .iter()
            .map(|t| t.resources.iter().map(|&j| p[j]).sum::<f64>())
            .fold(0.0f64, f64::max);
        let shrink_cost = (self.alpha * top_price).max(1.0);
        self.capacities
            .iter()
            .zip(&self.load)
            .zip(p)
            .fold(0.0f64, |worst, ((&c, &l), &pj)| {
                // slack below the rounding of the load sum is treated as
                // zero, or large prices could never certify convergence
                let slack = c - l;
                let slack = if slack.abs() <= SLACK_ROUNDING * c { 0.0 } else { slack };
                let excess = (-slack / c).max(0.0) * shrink_cost;
                worst.max(excess).max(-slack).max((pj * slack).abs())
            })
    }
}

/// Reusable allocation solver bound to one model. Keeps scratch space and
/// accepts warm-start prices, which makes repeated solves along a trajectory
/// cheap.
#[derive(Debug, Clone)]
pub struct Allocator<'m> {
    model: &'m NetworkModel,
    settings: SolverSettings,
    solver: DualSolver,
    program: AllocationProgram,
    local: Vec<Option<usize>>,
    resources: Vec<usize>,
}

impl<'m> Allocator<'m> {
    pub fn new(model: &'m NetworkModel) -> Self {
        Self {
            model,
            settings: SolverSettings {
                tolerance: EPS_KKT,
                max_iters: MAX_ITERS,
            },
            solver: DualSolver::new(),
            program: AllocationProgram::default(),
            local: vec![None; model.resource_count()],
            resources: Vec::new(),
        }
    }

    pub fn with_tolerance(mut self, eps_kkt: f64) -> Self {
        self.settings.tolerance = eps_kkt;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.settings.max_iters = max_iters;
        self
    }

    pub fn model(&self) -> &'m NetworkModel {
        self.model
    }

    pub fn tolerance(&self) -> f64 {
        self.settings.tolerance
    }

    pub fn allocate(&mut self, n: &[f64]) -> Result<Allocation, AllocError> {
        self.allocate_warm(n, None)
    }

    /// Like [`Allocator::allocate`], starting the price search from `warm`
    /// (prices in the caller's units, e.g. from a nearby state).
    pub fn allocate_warm(
        &mut self,
        n: &[f64],
        warm: Option<&[f64]>,
    ) -> Result<Allocation, AllocError> {
        let model = self.model;
        check_state(model, n)?;
        let topo = model.topology();
        let scale = n.iter().fold(0.0f64, |m, &x| m.max(x));
        if scale == 0.0 {
            return Ok(Allocation::zero(model.route_count(), model.resource_count()));
        }
        let alpha = model.alpha();
        let price_scale = scale.powf(alpha);

        // reduce to positive routes and the resources they touch
        self.local.iter_mut().for_each(|l| *l = None);
        self.resources.clear();
        let prog = &mut self.program;
        prog.alpha = alpha;
        prog.log_branch = is_log_branch(alpha);
        prog.capacities.clear();
        let mut used = 0;
        for i in 0..n.len() {
            if n[i] <= 0.0 {
                continue;
            }
            if used == prog.terms.len() {
                prog.terms.push(RouteTerm::default());
            }
            let term = &mut prog.terms[used];
            used += 1;
            term.route = i;
            term.state = n[i] / scale;
            term.kappa = model.weights()[i];
            term.kappa_root = term.kappa.powf(1.0 / alpha);
            term.resources.clear();
            for &j in topo.resources_of(i) {
                let local = *self.local[j].get_or_insert_with(|| {
                    self.resources.push(j);
                    prog.capacities.push(topo.capacity(j));
                    self.resources.len() - 1
                });
                term.resources.push(local);
            }
        }
        prog.terms.truncate(used);
        prog.lambda.resize(used, 0.0);
        prog.load.resize(self.resources.len(), 0.0);

        // complementary slackness scales with the prices, so the normalised
        // program has to be solved to a correspondingly tighter tolerance
        let mut settings = self.settings;
        settings.tolerance = self.settings.tolerance / price_scale.max(1.0);
        let mut start = self.initial_prices(warm, price_scale);
        let mut iterations = 0;
        let mut attempt = 0;
        let mut previous: Option<Allocation> = None;
        loop {
            let sol = self.solver.minimize(&mut self.program, &start, settings);
            iterations += sol.iterations;
            let allocation = self.unscale(n, &sol.prices, price_scale, iterations);
            let tight_enough = allocation.kkt_residual <= self.settings.tolerance;
            if sol.converged && (tight_enough || attempt == REFINEMENTS) {
                return Ok(allocation);
            }
            if !sol.converged {
                // a refinement that stalls at rounding level keeps the
                // converged solve it started from
                return match previous {
                    Some(done) => Ok(done),
                    None => Err(AllocError::NonConvergence { best: allocation }),
                };
            }
            // rounding in the unscaling left the residual just above the
            // target: tighten and continue from where the solver stopped
            let ratio = allocation.kkt_residual / self.settings.tolerance;
            settings.tolerance /= 2.0 * ratio.min(1e6);
            start = sol.prices;
            previous = Some(allocation);
            attempt += 1;
        }
    }

    /// Maps a solution of the normalised program back to the original
    /// units and pulls it inside the capacity region.
    fn unscale(&mut self, n: &[f64], reduced: &[f64], price_scale: f64, iterations: usize) -> Allocation {
        let model = self.model;
        let topo = model.topology();
        let mut lambda = vec![0.0; model.route_count()];
        let mut prices = vec![0.0; model.resource_count()];
        for (local, &j) in self.resources.iter().enumerate() {
            prices[j] = reduced[local] * price_scale;
        }
        if self.program.primal(reduced).is_some() {
            for term_idx in 0..self.program.terms.len() {
                lambda[self.program.terms[term_idx].route] = self.program.lambda[term_idx];
            }
        }
        let load = topo.apply(&lambda);
        let excess = load
            .iter()
            .zip(topo.capacities())
            .fold(1.0f64, |m, (l, c)| m.max(l / c));
        if excess > 1.0 {
            // a few ulps extra so the rounded loads land inside as well
            let shrink = excess * (1.0 + 4.0 * f64::EPSILON);
            lambda.iter_mut().for_each(|l| *l /= shrink);
        }
        // no route can take more than its tightest resource offers
        for (i, l) in lambda.iter_mut().enumerate() {
            let tightest = topo.resources_of(i).iter().fold(f64::INFINITY, |m, &j| m.min(topo.capacity(j)));
            *l = l.min(tightest);
        }
        Allocation {
            kkt_residual: kkt_residual(model, n, &lambda, &prices),
            lambda,
            prices,
            iterations,
        }
    }

    fn initial_prices(&self, warm: Option<&[f64]>, price_scale: f64) -> Vec<f64> {
        let prog = &self.program;
        if let Some(warm) = warm {
            let start: Vec<f64> = self
                .resources
                .iter()
                .map(|&j| warm.get(j).copied().unwrap_or(0.0) / price_scale)
                .collect();
            let reachable = prog
                .terms
                .iter()
                .all(|t| t.resources.iter().map(|&j| start[j]).sum::<f64>() > 0.0);
            if reachable && start.iter().all(|p| p.is_finite()) {
                return start;
            }
        }
        // stationarity magnitude: a lone route on resource j would see
        // p_j = κ n^α / C_j^α
        let mut start = vec![0.0; self.resources.len()];
        for term in &prog.terms {
            let push = term.kappa * term.state.powf(prog.alpha);
            for &j in &term.resources {
                start[j] += push;
            }
        }
        for (p, c) in start.iter_mut().zip(&prog.capacities) {
            *p = (*p / c.powf(prog.alpha)).max(PRICE_FLOOR);
        }
        start
    }
}
