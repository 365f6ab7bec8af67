#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

/// `|α − 1|` below this selects the logarithmic utility branch.
pub(crate) const LOG_BRANCH_TOL: f64 = 1e-12;

pub(crate) fn is_log_branch(alpha: f64) -> bool {
    (alpha - 1.0).abs() < LOG_BRANCH_TOL
}

pub(crate) fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// In-place Cholesky factorisation of the leading `n×n` block of a
/// row-major matrix with leading dimension `ld`. Returns `false` when the
/// block is not numerically positive definite.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize, ld: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * ld + j];
        for k in 0..j {
            d -= a[j * ld + k] * a[j * ld + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * ld + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * ld + j];
            for k in 0..j {
                s -= a[i * ld + k] * a[j * ld + k];
            }
            a[i * ld + j] = s / d;
        }
    }
    true
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky_in_place`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, ld: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * ld + k] * b[k];
        }
        b[i] = s / l[i * ld + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * ld + i] * b[k];
        }
        b[i] = s / l[i * ld + i];
    }
}
