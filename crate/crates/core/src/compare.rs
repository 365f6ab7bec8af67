//! Distances between sampled paths.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompareError {
    #[error("path has no samples")]
    Empty,
    #[error("path has {times} times but {states} states")]
    Mismatch { times: usize, states: usize },
    #[error("paths have dimensions {left} and {right}")]
    Dimension { left: usize, right: usize },
    #[error("grid time {0} is outside the sampled range")]
    Coverage(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDistance {
    /// `sup_t ‖a(t) − b(t)‖` over the grid (Euclidean norm).
    pub sup: f64,
    /// Grid time where the supremum is attained.
    pub at: f64,
    /// `sup_t |a_i(t) − b_i(t)|` per component.
    pub per_component: Vec<f64>,
}

/// Value of a sampled path at `t`, interpolating linearly between samples.
fn evaluate(times: &[f64], states: &[Vec<f64>], t: f64, out: &mut [f64]) -> Result<(), CompareError> {
    let first = times[0];
    let last = times[times.len() - 1];
    if t < first || t > last {
        return Err(CompareError::Coverage(t));
    }
    let k = times.partition_point(|&s| s <= t);
    if k == 0 || times[k - 1] == t || k == times.len() {
        out.copy_from_slice(&states[k.saturating_sub(1)]);
        return Ok(());
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let theta = (t - t0) / (t1 - t0);
    for (o, (a, b)) in out.iter_mut().zip(states[k - 1].iter().zip(&states[k])) {
        *o = a + theta * (b - a);
    }
    Ok(())
}

fn check(times: &[f64], states: &[Vec<f64>]) -> Result<usize, CompareError> {
    if times.is_empty() {
        return Err(CompareError::Empty);
    }
    if times.len() != states.len() {
        return Err(CompareError::Mismatch {
            times: times.len(),
            states: states.len(),
        });
    }
    Ok(states[0].len())
}

/// Compares two sampled paths at each time in `grid`. Paths are evaluated by
/// linear interpolation between their samples, so paths sampled on the grid
/// itself are compared exactly.
pub fn compare_trajectories(
    a_times: &[f64],
    a_states: &[Vec<f64>],
    b_times: &[f64],
    b_states: &[Vec<f64>],
    grid: &[f64],
) -> Result<TrajectoryDistance, CompareError> {
    let left = check(a_times, a_states)?;
    let right = check(b_times, b_states)?;
    if left != right {
        return Err(CompareError::Dimension { left, right });
    }
    let mut va = vec![0.0; left];
    let mut vb = vec![0.0; left];
    let mut result = TrajectoryDistance {
        sup: 0.0,
        at: grid.first().copied().unwrap_or(0.0),
        per_component: vec![0.0; left],
    };
    for &t in grid {
        evaluate(a_times, a_states, t, &mut va)?;
        evaluate(b_times, b_states, t, &mut vb)?;
        let mut sq = 0.0;
        for i in 0..left {
            let d = (va[i] - vb[i]).abs();
            result.per_component[i] = result.per_component[i].max(d);
            sq += d * d;
        }
        let dist = sq.sqrt();
        if dist > result.sup {
            result.sup = dist;
            result.at = t;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_paths_are_at_distance_zero() {
        let t = [0.0, 1.0, 2.0];
        let s = vec![vec![1.0, 2.0], vec![0.5, 1.0], vec![0.0, 3.0]];
        let d = compare_trajectories(&t, &s, &t, &s, &t).unwrap();
        assert_eq!(d.sup, 0.0);
        assert_eq!(d.per_component, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_paths() {
        let t = [0.0, 5.0];
        let a = vec![vec![1.0, 1.0]; 2];
        let b = vec![vec![4.0, 5.0]; 2];
        let d = compare_trajectories(&t, &a, &t, &b, &[0.0, 2.5, 5.0]).unwrap();
        assert_eq!(d.sup, 5.0);
        assert_eq!(d.per_component, vec![3.0, 4.0]);
    }

    #[test]
    fn interpolates_between_samples() {
        let a = compare_trajectories(
            &[0.0, 2.0],
            &[vec![0.0], vec![2.0]],
            &[0.0, 1.0, 2.0],
            &[vec![0.0], vec![0.0], vec![2.0]],
            &[1.0],
        )
        .unwrap();
        assert_eq!(a.sup, 1.0);
        assert_eq!(a.at, 1.0);
    }

    #[test]
    fn coverage_is_checked() {
        let t = [0.0, 1.0];
        let s = vec![vec![0.0]; 2];
        assert_eq!(
            compare_trajectories(&t, &s, &t, &s, &[1.5]).unwrap_err(),
            CompareError::Coverage(1.5)
        );
        assert!(matches!(
            compare_trajectories(&t, &s, &t, &vec![vec![0.0, 0.0]; 2], &[0.5]),
            Err(CompareError::Dimension { .. })
        ));
    }
}
