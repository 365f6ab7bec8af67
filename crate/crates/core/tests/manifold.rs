mod common;

use alphafair_core::{
    allocate, cone_closed_form_linear, cone_contains, dissipation_k, gap_h, invariant_from_q,
    is_invariant, lift_delta, lyapunov_f, workload, NetworkModel,
};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn linear(alpha: f64) -> NetworkModel {
    NetworkModel::linear_network([0.5; 3], alpha).unwrap()
}

#[test]
fn lift_matches_grid_search_inside_the_cone() {
    let model = linear(1.0);
    let lift = lift_delta(&model, &[1.5, 1.5]).unwrap();
    let oracle = grid_lift_linear(&model, [1.5, 1.5], 1e-3);
    assert!(max_diff(&lift.n, &oracle) <= 1e-3, "{oracle:?}");
    assert!(max_diff(&lift.n, &[0.5, 0.5, 1.0]) <= 1e-6);
    assert_abs_diff_eq!(lift.f_lower, lyapunov(&model, &lift.n), epsilon = 1e-12);
}

#[test]
fn lift_matches_grid_search_on_the_cone_boundary() {
    let model = linear(1.0);
    let lift = lift_delta(&model, &[2.0, 1.0]).unwrap();
    let oracle = grid_lift_linear(&model, [2.0, 1.0], 1e-3);
    assert!(max_diff(&lift.n, &oracle) <= 1e-3, "{oracle:?}");
    assert!(max_diff(&lift.n, &[1.0, 0.0, 1.0]) <= 1e-6);
    assert!(lift.prices[1].abs() <= 1e-6);
}

#[test]
fn lift_matches_grid_search_for_every_alpha() {
    let mut rng = rng(5);
    for alpha in ALPHAS {
        let model = linear(alpha);
        for _ in 0..20 {
            let w = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let lift = lift_delta(&model, &w).unwrap();
            let oracle = grid_lift_linear(&model, w, 1e-4);
            assert!(
                max_diff(&lift.n, &oracle) <= 2e-4,
                "alpha {alpha}, w {w:?}: {:?} vs {oracle:?}",
                lift.n
            );
            let (fl, fo) = (lyapunov(&model, &lift.n), lyapunov(&model, &oracle));
            assert!(fl <= fo * (1.0 + 1e-8) + 1e-12, "alpha {alpha}, w {w:?}: {fl} vs {fo}; {:?} vs {oracle:?}", lift.n);
        }
    }
}

#[test]
fn gap_off_the_manifold_uses_both_terms() {
    let model = linear(1.0);
    let n = [1.0, 1.0, 1.0];
    let oracle = grid_lift_linear(&model, [2.0, 2.0], 1e-4);
    let expected = lyapunov(&model, &n) - lyapunov(&model, &oracle);
    let h = gap_h(&model, &n).unwrap();
    assert!(h > 0.1);
    assert_abs_diff_eq!(h, expected, epsilon = 1e-6);
    assert_abs_diff_eq!(dissipation_k(&model, &n).unwrap(), -1.0 / 3.0, epsilon = 1e-8);
}

#[test]
fn linear_cone_is_alpha_independent_on_a_coarse_grid() {
    for alpha in ALPHAS {
        let model = linear(alpha);
        for a in 0..=30 {
            for b in 0..=30 {
                let w = [0.1 * a as f64, 0.1 * b as f64];
                let near_face = (w[1] - 0.5 * w[0]).abs() < 1e-4 || (w[0] - 0.5 * w[1]).abs() < 1e-4;
                if near_face {
                    continue;
                }
                assert_eq!(
                    cone_contains(&model, &w, 1e-6).unwrap(),
                    cone_closed_form_linear(&model, &w).unwrap(),
                    "alpha {alpha}, w {w:?}"
                );
            }
        }
    }
}

fn critical_model() -> impl Strategy<Value = NetworkModel> {
    (any::<u64>(), 0usize..3, any::<bool>()).prop_map(|(seed, a, linear_net)| {
        if linear_net {
            linear(ALPHAS[a])
        } else {
            let mut rng = rng(seed);
            let resources = rng.random_range(1..=3);
            let routes = rng.random_range(resources..=resources + 2);
            random_critical_model(&mut rng, resources, routes, ALPHAS[a])
        }
    })
}

fn q_vector(model: &NetworkModel, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    model
        .critical_resources()
        .iter()
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dissipation_is_nonpositive_and_detects_invariance(model in critical_model(), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = random_state(&mut rng, model.route_count(), 4.0, 0.2);
        let k = dissipation_k(&model, &n).unwrap();
        prop_assert!(k <= 1e-9);
        let check = is_invariant(&model, &n, 1e-6).unwrap();
        // K vanishes quadratically at the manifold, so detection is stated
        // against the squared distance to the lift
        if check.residual > 1e-3 {
            prop_assert!(k < -1e-3 * check.residual * check.residual, "K = {k}, residual {}", check.residual);
        }
        if check.residual > 1e-1 {
            prop_assert!(k < -1e-6, "K = {k}, residual {}", check.residual);
        }
    }

    #[test]
    fn gap_is_nonnegative_and_vanishes_on_the_manifold(model in critical_model(), seed in any::<u64>()) {
        let q = q_vector(&model, seed);
        let point = invariant_from_q(&model, &q).unwrap();
        let h = gap_h(&model, &point.n).unwrap();
        prop_assert!(h <= 1e-8, "H {h:e}, F {:e}, q {q:?}, n {:?}, alpha {}", lyapunov_f(&model, &point.n), point.n, model.alpha());
        let check = is_invariant(&model, &point.n, 1e-6).unwrap();
        prop_assert!(check.invariant, "q {q:?} n {:?} lift {:?} residual {}", point.n, check.lift, check.residual);

        let mut rng = rng(seed ^ 1);
        let n = random_state(&mut rng, model.route_count(), 4.0, 0.2);
        prop_assert!(gap_h(&model, &n).unwrap() >= 0.0);
    }

    #[test]
    fn lift_of_a_manifold_point_is_itself(model in critical_model(), seed in any::<u64>()) {
        let q = q_vector(&model, seed);
        let point = invariant_from_q(&model, &q).unwrap();
        let w = workload(&model, &point.n).unwrap();
        let lift = lift_delta(&model, &w).unwrap();
        let scale = point.n.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(distance(&lift.n, &point.n) <= 1e-6 * scale, "{:?} vs {:?}", lift.n, point.n);
        // invariant states are where the allocation reproduces the loads
        let a = allocate(&model, &point.n).unwrap();
        for i in 0..point.n.len() {
            if point.n[i] > 0.0 {
                prop_assert!((a.lambda[i] - model.loads()[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn lower_envelope_is_monotone(model in critical_model(), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let size = model.critical_resources().len();
        let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.0..3.0)).collect();
        let bigger: Vec<f64> = w.iter().map(|x| x + rng.random_range(0.0..1.0)).collect();
        let low = lift_delta(&model, &w).unwrap().f_lower;
        let high = lift_delta(&model, &bigger).unwrap().f_lower;
        prop_assert!(low <= high + 1e-9 * high.max(1.0));
    }

    #[test]
    fn lift_is_continuous(model in critical_model(), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let size = model.critical_resources().len();
        let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.1..3.0)).collect();
        let base = lift_delta(&model, &w).unwrap().n;
        let direction: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut moves = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let moved: Vec<f64> = w.iter().zip(&direction).map(|(a, d)| (a + eps * d).max(0.0)).collect();
            moves.push(distance(&lift_delta(&model, &moved).unwrap().n, &base));
        }
        prop_assert!(moves[2] <= moves[0] + 1e-9);
        prop_assert!(moves[2] < 1e-2);
    }

    #[test]
    fn manifold_scales_with_q(model in critical_model(), seed in any::<u64>(), c in 0.1f64..10.0) {
        let q = q_vector(&model, seed);
        let base = invariant_from_q(&model, &q).unwrap();
        let cq: Vec<f64> = q.iter().map(|x| c * x).collect();
        let scaled = invariant_from_q(&model, &cq).unwrap();
        let factor = c.powf(1.0 / model.alpha());
        for (a, b) in scaled.n.iter().zip(&base.n) {
            prop_assert!((a - factor * b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn lyapunov_is_homogeneous(model in critical_model(), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let n = random_state(&mut rng, model.route_count(), 4.0, 0.2);
        let doubled: Vec<f64> = n.iter().map(|x| 2.0 * x).collect();
        let f = lyapunov_f(&model, &n);
        prop_assert!((lyapunov_f(&model, &doubled) - 2f64.powf(model.alpha() + 1.0) * f).abs() <= 1e-12 * f.max(1.0));
        prop_assert!((f - lyapunov(&model, &n)).abs() <= 1e-12 * f.max(1.0));
    }
}
