//! Projected Newton descent for the dual of a separable convex program.
//!
//! Both the allocation problem and the lifting program have a closed-form
//! primal for any vector of prices `p ≥ 0`, so the solver works entirely in
//! price space: it minimises a smooth convex dual function over the
//! nonnegative orthant. Each iteration
//!
//! 1. fixes prices that sit at zero with a positive gradient,
//! 2. takes a (regularised) Newton step in the remaining coordinates,
//! 3. projects onto `p ≥ 0` and backtracks until the Armijo condition
//!    holds along the projection arc.
//!
//! The step falls back to a projected gradient step when the Newton
//! direction fails to give descent. Termination is decided by the
//! program's own KKT residual, never by the step size.

use alloc::vec::Vec;

use crate::math::{cholesky_in_place, cholesky_solve};

/// A convex function of nonnegative prices together with its KKT residual.
pub trait DualProgram {
    fn dim(&self) -> usize;

    /// Writes the gradient and the row-major Hessian at `p` and returns the
    /// value, or `None` when `p` lies outside the function's domain.
    fn evaluate(&mut self, p: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64>;

    /// KKT residual of the primal recovered from `p`.
    fn residual(&mut self, p: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub prices: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
/// Bound on the width of the "at zero" band used to pick fixed coordinates.
const ACTIVE_BAND: f64 = 1e-12;

/// Reusable buffers for [`DualSolver::minimize`].
#[derive(Debug, Default, Clone)]
pub struct DualSolver {
    grad: Vec<f64>,
    hess: Vec<f64>,
    trial_grad: Vec<f64>,
    trial_hess: Vec<f64>,
    factor: Vec<f64>,
    rhs: Vec<f64>,
    direction: Vec<f64>,
    trial: Vec<f64>,
    trial_value: f64,
    free: Vec<usize>,
}

impl DualSolver {
    pub fn new() -> Self {
        Self::default()
    }

    fn resize(&mut self, m: usize) {
        self.grad.resize(m, 0.0);
        self.hess.resize(m * m, 0.0);
        self.trial_grad.resize(m, 0.0);
        self.trial_hess.resize(m * m, 0.0);
        self.factor.resize(m * m, 0.0);
        self.rhs.resize(m, 0.0);
        self.direction.resize(m, 0.0);
        self.trial.resize(m, 0.0);
    }

    /// Minimises `program` over `p ≥ 0` starting from `start` (which must lie
    /// in the domain after clamping to the orthant).
    pub fn minimize<P: DualProgram>(
        &mut self,
        program: &mut P,
        start: &[f64],
        settings: SolverSettings,
    ) -> DualSolution {
        let m = program.dim();
        self.resize(m);
        let mut p: Vec<f64> = start.iter().map(|&x| x.max(0.0)).collect();
        let mut best = DualSolution {
            prices: p.clone(),
            residual: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
        if m == 0 {
            best.residual = program.residual(&p);
            best.converged = best.residual <= settings.tolerance;
            return best;
        }

        let Some(mut value) = program.evaluate(&p, &mut self.grad, &mut self.hess) else {
            return best;
        };
        for iter in 0..=settings.max_iters {
            let residual = program.residual(&p);
            if residual < best.residual {
                best.prices.copy_from_slice(&p);
                best.residual = residual;
            }
            best.iterations = iter;
            if residual <= settings.tolerance {
                best.converged = true;
                return best;
            }
            if iter == settings.max_iters {
                break;
            }

            let pg = projected_gradient_norm(&p, &self.grad);
            self.newton_direction(&p);
            let accepted = self.line_search(program, &p, value, pg)
                || self.gradient_step(program, &p, value, pg);
            if !accepted {
                break;
            }
            p.copy_from_slice(&self.trial);
            self.grad.copy_from_slice(&self.trial_grad);
            self.hess.copy_from_slice(&self.trial_hess);
            value = self.trial_value;
        }
        best
    }

    fn newton_direction(&mut self, p: &[f64]) {
        let m = p.len();
        let band = ACTIVE_BAND.min(projected_gradient_norm(p, &self.grad));
        self.free.clear();
        for j in 0..m {
            if p[j] <= band && self.grad[j] > 0.0 {
                // pinned at zero
                self.direction[j] = -p[j];
            } else {
                self.free.push(j);
            }
        }
        let nf = self.free.len();
        if nf == 0 {
            return;
        }
        let scale = self
            .free
            .iter()
            .fold(0.0f64, |s, &j| s.max(self.hess[j * m + j].abs()))
            .max(f64::MIN_POSITIVE);
        let mut shift = 0.0;
        loop {
            for (a, &ja) in self.free.iter().enumerate() {
                for (b, &jb) in self.free.iter().enumerate() {
                    self.factor[a * nf + b] = self.hess[ja * m + jb];
                }
                self.factor[a * nf + a] += shift;
            }
            if cholesky_in_place(&mut self.factor, nf, nf) {
                break;
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
            if shift > 1e12 * scale {
                // hopeless curvature; use the scaled gradient
                for &j in &self.free {
                    self.direction[j] = -self.grad[j] / scale;
                }
                return;
            }
        }
        for (a, &j) in self.free.iter().enumerate() {
            self.rhs[a] = -self.grad[j];
        }
        cholesky_solve(&self.factor, nf, nf, &mut self.rhs[..nf]);
        for (a, &j) in self.free.iter().enumerate() {
            self.direction[j] = self.rhs[a];
        }
    }

    fn line_search<P: DualProgram>(
        &mut self,
        program: &mut P,
        p: &[f64],
        value: f64,
        pg: f64,
    ) -> bool {
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACK {
            for j in 0..p.len() {
                self.trial[j] = (p[j] + t * self.direction[j]).max(0.0);
            }
            if self.try_trial(program, p, value, pg, t == 1.0) {
                return true;
            }
            t *= 0.5;
        }
        false
    }

    fn gradient_step<P: DualProgram>(
        &mut self,
        program: &mut P,
        p: &[f64],
        value: f64,
        pg: f64,
    ) -> bool {
        let m = p.len();
        let curvature = (0..m)
            .map(|j| self.hess[j * m + j].abs())
            .fold(0.0f64, f64::max);
        let mut step = if curvature > 0.0 { 1.0 / curvature } else { 1.0 };
        for _ in 0..MAX_BACKTRACK {
            for j in 0..m {
                self.trial[j] = (p[j] - step * self.grad[j]).max(0.0);
            }
            if self.try_trial(program, p, value, pg, false) {
                return true;
            }
            step *= 0.5;
        }
        false
    }

    fn try_trial<P: DualProgram>(
        &mut self,
        program: &mut P,
        p: &[f64],
        value: f64,
        pg: f64,
        full_step: bool,
    ) -> bool {
        let Some(trial_value) =
            program.evaluate(&self.trial, &mut self.trial_grad, &mut self.trial_hess)
        else {
            return false;
        };
        if !trial_value.is_finite() {
            return false;
        }
        let predicted: f64 = self
            .grad
            .iter()
            .zip(self.trial.iter().zip(p))
            .map(|(g, (x, y))| g * (x - y))
            .sum();
        let ok = trial_value <= value + ARMIJO * predicted
            // near the optimum the decrease drops below the rounding of the
            // value itself; accept a full step that shrinks the gradient
            || (full_step
                && (trial_value - value).abs() <= 1e-12 * value.abs().max(1.0)
                && projected_gradient_norm(&self.trial, &self.trial_grad) < pg);
        if ok {
            self.trial_value = trial_value;
        }
        ok
    }
}

/// `‖p − [p − ∇]⁺‖₁`, zero exactly at a minimiser over the orthant.
pub fn projected_gradient_norm(p: &[f64], grad: &[f64]) -> f64 {
    p.iter()
        .zip(grad)
        .map(|(&x, &g)| (x - (x - g).max(0.0)).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// `½ (p − c)ᵀ D (p − c)` with diagonal `D`; the minimiser over `p ≥ 0`
    /// is `max(c, 0)`.
    struct Quadratic {
        centre: Vec<f64>,
        diag: Vec<f64>,
    }

    impl DualProgram for Quadratic {
        fn dim(&self) -> usize {
            self.centre.len()
        }

        fn evaluate(&mut self, p: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Option<f64> {
            let m = self.dim();
            hess.iter_mut().for_each(|h| *h = 0.0);
            let mut v = 0.0;
            for j in 0..m {
                let d = p[j] - self.centre[j];
                grad[j] = self.diag[j] * d;
                hess[j * m + j] = self.diag[j];
                v += 0.5 * self.diag[j] * d * d;
            }
            Some(v)
        }

        fn residual(&mut self, p: &[f64]) -> f64 {
            let mut g = vec![0.0; self.dim()];
            let mut h = vec![0.0; self.dim() * self.dim()];
            self.evaluate(p, &mut g, &mut h);
            projected_gradient_norm(p, &g)
        }
    }

    #[test]
    fn quadratic_with_active_bound() {
        let mut q = Quadratic {
            centre: vec![2.0, -1.0, 0.5],
            diag: vec![1.0, 3.0, 1e-3],
        };
        let sol = DualSolver::new().minimize(&mut q, &[1.0, 1.0, 1.0], SolverSettings::default());
        assert!(sol.converged);
        assert!((sol.prices[0] - 2.0).abs() < 1e-12);
        assert_eq!(sol.prices[1], 0.0);
        assert!((sol.prices[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_dimensional_program() {
        let mut q = Quadratic {
            centre: vec![],
            diag: vec![],
        };
        let sol = DualSolver::new().minimize(&mut q, &[], SolverSettings::default());
        assert!(sol.converged);
        assert!(sol.prices.is_empty());
    }
}
