//! Invariant states, the Lyapunov function and the workload cone.
//!
//! * `F(n) = (1/(α+1)) Σ_i ν_i κ_i μ_i^{α−1} (n_i/ν_i)^{α+1}` decreases
//!   along fluid paths at rate `K(n) ≤ 0`, which vanishes exactly on the
//!   invariant states.
//! * The workload `w_j(n) = Σ_i A_ji n_i/μ_i` over critical resources never
//!   decreases along fluid paths.
//! * The lifting map `Δ(w)` is the state of least `F` carrying at least
//!   workload `w`. Its optimality conditions put `Δ(w)` in the form
//!   `n_i = ρ_i (Σ_{j∈J*} p_j A_ji / κ_i)^{1/α}`, which is exactly the
//!   parametrisation of invariant states by `q ≥ 0`. A state is invariant
//!   iff `n = Δ(w(n))`, and `H(n) = F(n) − F(Δ(w(n)))` measures how far
//!   it is from that.
//!
//! All functions here need at least one critical resource; subcritical
//! models report [`ManifoldError::Subcritical`].

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::allocator::{check_state, AllocError, Allocator};
use crate::dual::{DualProgram, DualSolution, DualSolver, SolverSettings};
use crate::math::euclidean_distance;
use crate::network::NetworkModel;

/// Default relative tolerance for [`cone_contains`].
pub const CONE_TOL: f64 = 1e-6;

/// Default stopping tolerance of the lifting program.
pub const LIFT_EPS: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifoldError {
    #[error("no resource is critical: the invariant manifold is just the origin")]
    Subcritical,
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("{what} has {found} entries, expected {expected}")]
    Length {
        what: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("{what}[{index}] = {value} must be nonnegative and finite")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error(
        "lifting program did not converge after {} iterations (KKT residual {})",
        best.iterations,
        best.kkt_residual
    )]
    LiftNonConvergence { best: LiftResult },
    #[error("not the two-resource linear network: {0}")]
    TopologyMismatch(&'static str),
}

fn check_nonnegative(what: &'static str, v: &[f64], expected: usize) -> Result<(), ManifoldError> {
    if v.len() != expected {
        return Err(ManifoldError::Length {
            what,
            found: v.len(),
            expected,
        });
    }
    match v.iter().enumerate().find(|(_, &x)| !(x >= 0.0 && x.is_finite())) {
        Some((index, &value)) => Err(ManifoldError::Negative { what, index, value }),
        None => Ok(()),
    }
}

fn require_critical(model: &NetworkModel) -> Result<&[usize], ManifoldError> {
    if model.is_subcritical() {
        Err(ManifoldError::Subcritical)
    } else {
        Ok(model.critical_resources())
    }
}

/// The Lyapunov function `F(n)`.
pub fn lyapunov_f(model: &NetworkModel, n: &[f64]) -> f64 {
    let alpha = model.alpha();
    let (nu, mu, kappa) = (model.arrival_rates(), model.service_rates(), model.weights());
    n.iter()
        .enumerate()
        .map(|(i, &ni)| nu[i] * kappa[i] * mu[i].powf(alpha - 1.0) * (ni / nu[i]).powf(alpha + 1.0))
        .sum::<f64>()
        / (alpha + 1.0)
}

/// `K(n) = Σ_{n_i>0} κ_i (μ_i n_i/ν_i)^α (ρ_i − Λ_i)` for a known allocation.
pub fn dissipation_with(model: &NetworkModel, n: &[f64], lambda: &[f64]) -> f64 {
    let alpha = model.alpha();
    let (nu, mu, kappa, rho) = (
        model.arrival_rates(),
        model.service_rates(),
        model.weights(),
        model.loads(),
    );
    (0..n.len())
        .filter(|&i| n[i] > 0.0)
        .map(|i| kappa[i] * (mu[i] * n[i] / nu[i]).powf(alpha) * (rho[i] - lambda[i]))
        .sum()
}

/// The dissipation `K(n)`: the derivative of `F` along the fluid path.
pub fn dissipation_k(model: &NetworkModel, n: &[f64]) -> Result<f64, AllocError> {
    let allocation = Allocator::new(model).allocate(n)?;
    Ok(dissipation_with(model, n, &allocation.lambda))
}

pub(crate) fn workload_unchecked(model: &NetworkModel, n: &[f64]) -> Vec<f64> {
    let topo = model.topology();
    let mu = model.service_rates();
    model
        .critical_resources()
        .iter()
        .map(|&j| {
            (0..n.len())
                .filter(|&i| topo.uses(j, i))
                .map(|i| n[i] / mu[i])
                .sum()
        })
        .collect()
}

/// `w_j(n) = Σ_i A_ji n_i/μ_i` for each critical resource, in index order.
pub fn workload(model: &NetworkModel, n: &[f64]) -> Result<Vec<f64>, ManifoldError> {
    require_critical(model)?;
    check_nonnegative("state", n, model.route_count())?;
    Ok(workload_unchecked(model, n))
}

/// Solution of the lifting program.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftResult {
    /// `Δ(w)`
    pub n: Vec<f64>,
    /// Multipliers, one per critical resource.
    pub prices: Vec<f64>,
    /// `F̲(w) = F(Δ(w))`
    pub f_lower: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
struct LiftTerm {
    mu: f64,
    /// `ρ_i κ_i^{−1/α}`
    coeff: f64,
    resources: Vec<usize>,
}

/// Negated dual of `min F(n) s.t. Σ_i A_ji n_i/μ_i ≥ w_j (j ∈ J*), n ≥ 0`:
/// `φ(p) = −Σ_j p_j w_j + (α/(α+1)) Σ_i n_i(p) s_i/μ_i`
/// with `n_i(p) = ρ_i (s_i/κ_i)^{1/α}`, `s_i = Σ_j p_j A_ji`.
#[derive(Debug, Clone)]
struct LiftProgram {
    alpha: f64,
    terms: Vec<LiftTerm>,
    target: Vec<f64>,
    state: Vec<f64>,
    load: Vec<f64>,
}

impl LiftProgram {
    fn new(model: &NetworkModel, target: Vec<f64>) -> Self {
        let alpha = model.alpha();
        let critical = model.critical_resources();
        let topo = model.topology();
        let terms = (0..model.route_count())
            .map(|i| LiftTerm {
                mu: model.service_rates()[i],
                coeff: model.loads()[i] * model.weights()[i].powf(-1.0 / alpha),
                resources: critical
                    .iter()
                    .enumerate()
                    .filter(|(_, &j)| topo.uses(j, i))
                    .map(|(local, _)| local)
                    .collect(),
            })
            .collect();
        let dim = critical.len();
        Self {
            alpha,
            terms,
            target,
            state: vec![0.0; model.route_count()],
            load: vec![0.0; dim],
        }
    }

    fn primal(&mut self, p: &[f64]) {
        self.load.iter_mut().for_each(|l| *l = 0.0);
        for (i, term) in self.terms.iter().enumerate() {
            let s: f64 = term.resources.iter().map(|&j| p[j]).sum();
            let n = if s > 0.0 {
                term.coeff * s.powf(1.0 / self.alpha)
            } else {
                0.0
            };
            self.state[i] = n;
            for &j in &term.resources {
                self.load[j] += n / term.mu;
            }
        }
    }
}

impl DualProgram for LiftProgram {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn evaluate(&mut self, p: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
        let m = self.dim();
        let alpha = self.alpha;
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut value = 0.0;
        for j in 0..m {
            grad[j] = -self.target[j];
            value -= p[j] * self.target[j];
        }
        for term in &self.terms {
            if term.resources.is_empty() {
                continue;
            }
            let s: f64 = term.resources.iter().map(|&j| p[j]).sum();
            if s < 0.0 {
                return None;
            }
            let n = if s > 0.0 {
                term.coeff * s.powf(1.0 / alpha)
            } else {
                0.0
            };
            value += alpha / (alpha + 1.0) * n * s / term.mu;
            // dn/ds, which is unbounded at s = 0 when α > 1
            let slope = if s > 0.0 {
                n / (alpha * s)
            } else if alpha < 1.0 {
                0.0
            } else if alpha == 1.0 {
                term.coeff
            } else {
                term.coeff * 1e-12f64.powf(1.0 / alpha - 1.0) / alpha
            };
            let curvature = slope / term.mu;
            for &a in &term.resources {
                grad[a] += n / term.mu;
                for &b in &term.resources {
                    hess[a * m + b] += curvature;
                }
            }
        }
        Some(value)
    }

    fn residual(&mut self, p: &[f64]) -> f64 {
        self.primal(p);
        self.target
            .iter()
            .zip(&self.load)
            .zip(p)
            .fold(0.0f64, |worst, ((&w, &l), &pj)| {
                worst.max(w - l).max((pj * (l - w)).abs())
            })
    }
}

/// KKT residual of `(n, p)` for the lifting program at workload `w`.
fn lift_residual(model: &NetworkModel, w: &[f64], n: &[f64], prices: &[f64]) -> f64 {
    let load = workload_unchecked(model, n);
    let topo = model.topology();
    let critical = model.critical_resources();
    let alpha = model.alpha();
    let mut worst = 0.0f64;
    for j in 0..w.len() {
        worst = worst.max(w[j] - load[j]).max((prices[j] * (load[j] - w[j])).abs());
    }
    for i in 0..n.len() {
        let s: f64 = critical
            .iter()
            .enumerate()
            .filter(|(_, &j)| topo.uses(j, i))
            .map(|(local, _)| prices[local])
            .sum();
        let expected = model.loads()[i] * (s / model.weights()[i]).powf(1.0 / alpha);
        worst = worst.max((expected - n[i]).abs());
    }
    worst
}

/// A price is retried at zero when, on its own, it would put at most this
/// much (normalised) state on any route. A residual of ε can hide a state
/// error of order ε^{1/(α+1)}, about 1e-3 at α = 2.
const DEGENERATE_STATE: f64 = 1e-2;

fn normalised_f(program: &mut LiftProgram, p: &[f64]) -> f64 {
    program.primal(p);
    let exponent = program.alpha + 1.0;
    program
        .terms
        .iter()
        .zip(&program.state)
        .map(|(term, &n)| n.powf(exponent) / (term.coeff.powf(program.alpha) * term.mu))
        .sum()
}

/// A workload constraint that is tight with a zero multiplier (a face of
/// the cone, or an invariant state with `q_j = 0`) leaves the residual
/// almost flat in `p_j`, while `n` moves like `p_j^{1/α}`. Prices whose
/// effect on the state is small are therefore retried at exactly zero, and the re-converged point is kept
/// when it does not raise `F`.
fn polish_degenerate_prices(
    solver: &mut DualSolver,
    program: &mut LiftProgram,
    mut best: DualSolution,
    settings: SolverSettings,
) -> DualSolution {
    let inv_alpha = 1.0 / program.alpha;
    let reach = |j: usize, p: f64| {
        program
            .terms
            .iter()
            .filter(|t| t.resources.contains(&j))
            .fold(0.0f64, |m, t| m.max(t.coeff * p.powf(inv_alpha)))
    };
    let mut candidates: Vec<usize> = (0..best.prices.len())
        .filter(|&j| best.prices[j] > 0.0 && reach(j, best.prices[j]) <= DEGENERATE_STATE)
        .collect();
    candidates.sort_by(|&a, &b| best.prices[a].total_cmp(&best.prices[b]));
    let mut best_f = normalised_f(program, &best.prices);
    for j in candidates {
        let mut start = best.prices.clone();
        start[j] = 0.0;
        let trial = solver.minimize(program, &start, settings);
        if !trial.converged {
            continue;
        }
        let f = normalised_f(program, &trial.prices);
        if f <= best_f {
            best_f = f;
            best = trial;
        }
    }
    best
}

/// `Δ(w)`: the unique minimiser of `F` subject to workload at least `w`.
pub fn lift_delta(model: &NetworkModel, w: &[f64]) -> Result<LiftResult, ManifoldError> {
    lift_delta_with(model, w, SolverSettings {
        tolerance: LIFT_EPS,
        max_iters: crate::allocator::MAX_ITERS,
    })
}

pub fn lift_delta_with(
    model: &NetworkModel,
    w: &[f64],
    settings: SolverSettings,
) -> Result<LiftResult, ManifoldError> {
    let critical = require_critical(model)?;
    check_nonnegative("workload", w, critical.len())?;
    let alpha = model.alpha();
    let scale = w.iter().fold(0.0f64, |m, &x| m.max(x));
    if scale == 0.0 {
        return Ok(LiftResult {
            n: vec![0.0; model.route_count()],
            prices: vec![0.0; critical.len()],
            f_lower: 0.0,
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let target: Vec<f64> = w.iter().map(|x| x / scale).collect();
    let mut program = LiftProgram::new(model, target);

    // uniform prices give workload L_j; workload grows like p^{1/α}
    let ones = vec![1.0; critical.len()];
    program.primal(&ones);
    let start: Vec<f64> = program
        .target
        .iter()
        .zip(&program.load)
        .map(|(&t, &l)| {
            if t == 0.0 {
                // nothing to carry: the multiplier is exactly zero
                0.0
            } else if l > 0.0 {
                (t / l).powf(alpha).max(1e-8)
            } else {
                1.0
            }
        })
        .collect();

    let mut solver = DualSolver::new();
    let mut sol = solver.minimize(&mut program, &start, settings);
    if sol.converged {
        sol = polish_degenerate_prices(&mut solver, &mut program, sol, settings);
    }
    program.primal(&sol.prices);
    let n: Vec<f64> = program.state.iter().map(|x| x * scale).collect();
    let price_scale = scale.powf(alpha);
    let prices: Vec<f64> = sol.prices.iter().map(|p| p * price_scale).collect();
    let result = LiftResult {
        f_lower: lyapunov_f(model, &n),
        kkt_residual: lift_residual(model, w, &n, &prices),
        n,
        prices,
        iterations: sol.iterations,
    };
    if sol.converged {
        Ok(result)
    } else {
        Err(ManifoldError::LiftNonConvergence { best: result })
    }
}

/// `H(n) = F(n) − F̲(w(n))`; rounding below zero is clamped.
pub fn gap_h(model: &NetworkModel, n: &[f64]) -> Result<f64, ManifoldError> {
    let w = workload(model, n)?;
    let lift = lift_delta(model, &w)?;
    Ok((lyapunov_f(model, n) - lift.f_lower).max(0.0))
}

/// An invariant state built from multipliers `q ≥ 0` on the critical
/// resources.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub q: Vec<f64>,
    pub n: Vec<f64>,
    pub w: Vec<f64>,
    /// `max_{n_i>0} |Λ_i(n) − ρ_i|`, zero on the manifold.
    pub allocation_gap: f64,
}

/// `n_i = ρ_i (Σ_{j∈J*} q_j A_ji / κ_i)^{1/α}`, checked against the allocator.
pub fn invariant_from_q(model: &NetworkModel, q: &[f64]) -> Result<ManifoldPoint, ManifoldError> {
    let critical = require_critical(model)?;
    check_nonnegative("q", q, critical.len())?;
    let topo = model.topology();
    let alpha = model.alpha();
    let n: Vec<f64> = (0..model.route_count())
        .map(|i| {
            let s: f64 = critical
                .iter()
                .zip(q)
                .filter(|(&j, _)| topo.uses(j, i))
                .map(|(_, &qj)| qj)
                .sum();
            model.loads()[i] * (s / model.weights()[i]).powf(1.0 / alpha)
        })
        .collect();
    let allocation = Allocator::new(model).allocate(&n)?;
    let allocation_gap = (0..n.len())
        .filter(|&i| n[i] > 0.0)
        .map(|i| (allocation.lambda[i] - model.loads()[i]).abs())
        .fold(0.0, f64::max);
    Ok(ManifoldPoint {
        q: q.to_vec(),
        w: workload_unchecked(model, &n),
        n,
        allocation_gap,
    })
}

/// Outcome of [`is_invariant`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceCheck {
    pub invariant: bool,
    /// `‖n − Δ(w(n))‖`
    pub residual: f64,
    pub gap_h: f64,
    pub dissipation_k: f64,
    pub lift: LiftResult,
}

/// Decides `n = Δ(w(n))` within `tol` (Euclidean norm).
pub fn is_invariant(model: &NetworkModel, n: &[f64], tol: f64) -> Result<InvarianceCheck, ManifoldError> {
    let w = workload(model, n)?;
    check_state(model, n)?;
    let lift = lift_delta(model, &w)?;
    let residual = euclidean_distance(n, &lift.n);
    let dissipation_k = dissipation_k(model, n)?;
    Ok(InvarianceCheck {
        invariant: residual <= tol,
        residual,
        gap_h: (lyapunov_f(model, n) - lift.f_lower).max(0.0),
        dissipation_k,
        lift,
    })
}

/// Membership of `w` in the workload cone: `w` is the workload of its own
/// lift exactly when it lies in the cone (off the cone some constraint of
/// the lifting program is slack). `tol` is relative to `‖w‖ + 1`.
pub fn cone_contains(model: &NetworkModel, w: &[f64], tol: f64) -> Result<bool, ManifoldError> {
    let lift = lift_delta(model, w)?;
    let image = workload_unchecked(model, &lift.n);
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(euclidean_distance(&image, w) <= tol * (norm + 1.0))
}

/// The closed-form cone of the two-resource line:
/// `w_1 ≥ 0` and `w_1 ρ_3 ≤ w_2 ≤ w_1 / ρ_3`.
pub fn linear_cone_closed_form(rho3: f64, w: [f64; 2]) -> bool {
    w[0] >= 0.0 && w[0] * rho3 <= w[1] && w[1] <= w[0] / rho3
}

/// [`linear_cone_closed_form`] for a model, after checking that it is the
/// critical two-resource line with unit capacities and `κ = μ = 1`.
pub fn cone_closed_form_linear(model: &NetworkModel, w: &[f64]) -> Result<bool, ManifoldError> {
    let topo = model.topology();
    if topo.resource_count() != 2 || topo.route_count() != 3 {
        return Err(ManifoldError::TopologyMismatch("expected 2 resources and 3 routes"));
    }
    let pattern = [[1u8, 0, 1], [0, 1, 1]];
    for (j, row) in pattern.iter().enumerate() {
        for (i, &a) in row.iter().enumerate() {
            if topo.entry(j, i) != a {
                return Err(ManifoldError::TopologyMismatch("routes must be {1}, {2}, {1,2}"));
            }
        }
    }
    if topo.capacities() != [1.0, 1.0] {
        return Err(ManifoldError::TopologyMismatch("capacities must be 1"));
    }
    if model.weights().iter().chain(model.service_rates()).any(|&x| x != 1.0) {
        return Err(ManifoldError::TopologyMismatch("kappa and mu must be 1"));
    }
    if model.critical_resources() != [0, 1] {
        return Err(ManifoldError::TopologyMismatch("both resources must be critical"));
    }
    if w.len() != 2 {
        return Err(ManifoldError::Length {
            what: "workload",
            found: w.len(),
            expected: 2,
        });
    }
    Ok(linear_cone_closed_form(model.loads()[2], [w[0], w[1]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear(alpha: f64) -> NetworkModel {
        NetworkModel::linear_network([0.5; 3], alpha).unwrap()
    }

    #[test]
    fn lyapunov_values() {
        let m = linear(1.0);
        assert_eq!(lyapunov_f(&m, &[0.0; 3]), 0.0);
        assert_abs_diff_eq!(lyapunov_f(&m, &[0.5, 0.5, 1.0]), 1.5, epsilon = 1e-15);
        for alpha in [0.5, 1.0, 2.0] {
            let m = linear(alpha);
            let n = [0.3, 1.2, 0.7];
            let doubled: Vec<f64> = n.iter().map(|x| 2.0 * x).collect();
            assert_abs_diff_eq!(
                lyapunov_f(&m, &doubled),
                2f64.powf(alpha + 1.0) * lyapunov_f(&m, &n),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn dissipation_values() {
        let m = linear(1.0);
        assert!(dissipation_k(&m, &[0.5, 0.5, 1.0]).unwrap().abs() < 1e-8);
        assert_abs_diff_eq!(dissipation_k(&m, &[1.0; 3]).unwrap(), -1.0 / 3.0, epsilon = 1e-8);
        assert_eq!(dissipation_k(&m, &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn workload_values() {
        let m = linear(1.0);
        assert_eq!(workload(&m, &[0.5, 0.5, 1.0]).unwrap(), vec![1.5, 1.5]);
        assert_eq!(workload(&m, &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
        let fast = NetworkModel::new(
            m.topology().clone(),
            crate::TrafficParams {
                arrival_rates: vec![1.0; 3],
                service_rates: vec![2.0; 3],
                weights: vec![1.0; 3],
                alpha: 1.0,
            },
        )
        .unwrap();
        assert_eq!(workload(&fast, &[1.0; 3]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn subcritical_is_degenerate() {
        let m = NetworkModel::linear_network([0.3, 0.4, 0.5], 1.0).unwrap();
        assert_eq!(workload(&m, &[1.0; 3]), Err(ManifoldError::Subcritical));
        assert_eq!(lift_delta(&m, &[]).unwrap_err(), ManifoldError::Subcritical);
        assert_eq!(gap_h(&m, &[1.0; 3]).unwrap_err(), ManifoldError::Subcritical);
    }

    #[test]
    fn lift_of_zero_and_interior_point() {
        let m = linear(1.0);
        let zero = lift_delta(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(zero.n, vec![0.0; 3]);
        assert_eq!(zero.f_lower, 0.0);

        let lift = lift_delta(&m, &[1.5, 1.5]).unwrap();
        for (a, b) in lift.n.iter().zip([0.5, 0.5, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
        assert!(lift.kkt_residual <= 1e-8);
    }

    #[test]
    fn lift_on_cone_boundary_empties_route_two() {
        let m = linear(1.0);
        let lift = lift_delta(&m, &[2.0, 1.0]).unwrap();
        for (a, b) in lift.n.iter().zip([1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
        assert!(lift.prices[1].abs() < 1e-8);
    }

    #[test]
    fn q_parametrisation() {
        let m = linear(1.0);
        let origin = invariant_from_q(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(origin.n, vec![0.0; 3]);
        let p = invariant_from_q(&m, &[1.0, 1.0]).unwrap();
        assert_eq!(p.n, vec![0.5, 0.5, 1.0]);
        assert!(p.allocation_gap < 1e-8);

        let m2 = linear(2.0);
        let p = invariant_from_q(&m2, &[1.0, 0.0]).unwrap();
        assert_eq!(p.n, vec![0.5, 0.0, 0.5]);
        assert!(p.allocation_gap < 1e-8);
    }

    #[test]
    fn invariance_and_gap() {
        let m = linear(1.0);
        let on = is_invariant(&m, &[0.5, 0.5, 1.0], 1e-6).unwrap();
        assert!(on.invariant);
        assert!(on.gap_h < 1e-8);
        let off = is_invariant(&m, &[1.0; 3], 1e-6).unwrap();
        assert!(!off.invariant);
        assert!(off.residual > 0.1);
        assert!(off.gap_h > 0.0);
        assert!(is_invariant(&m, &[0.0; 3], 1e-6).unwrap().invariant);
        assert_eq!(gap_h(&m, &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn cone_membership_matches_closed_form() {
        let m = linear(1.0);
        for (w, inside) in [([1.0, 1.0], true), ([2.0, 0.5], false), ([2.0, 1.0], true)] {
            assert_eq!(cone_contains(&m, &w, CONE_TOL).unwrap(), inside, "{w:?}");
            assert_eq!(cone_closed_form_linear(&m, &w).unwrap(), inside, "{w:?}");
        }
    }

    #[test]
    fn closed_form_rejects_other_topologies() {
        let m = NetworkModel::linear_network([0.3, 0.5, 0.5], 1.0).unwrap();
        assert!(matches!(
            cone_closed_form_linear(&m, &[1.0, 1.0]),
            Err(ManifoldError::TopologyMismatch(_))
        ));
    }
}
