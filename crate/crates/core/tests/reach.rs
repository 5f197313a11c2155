//! Trained controls on `ẋ = u`, `x(0) = 0`, target 1, against the closed-form
//! optimum of the continuous problem.

use sparse_node::analysis::sparsity_report;
use sparse_node::{
    train, AffineField, DynamicsSpec, Labels, LossKind, ObjectiveSpec, OutputMap, Scheme, TimeGrid,
    TrainConfig,
};

/// Full speed until the residual is `r`, then rest. Returns `(r, J)` minimising
/// `(1 − r³)/(3M) + r²(T − (1 − r)/M) + (1 − r)` over `r ∈ [0, 1]` with `(1 − r)/M ≤ T`.
fn continuous_optimum(horizon: f64, bound: f64) -> (f64, f64) {
    let cost = |r: f64| {
        let t1 = (1.0 - r) / bound;
        (1.0 - r.powi(3)) / (3.0 * bound) + r * r * (horizon - t1) + (1.0 - r)
    };
    let lo = (1.0 - bound * horizon).max(0.0);
    (0..=100_000)
        .map(|i| lo + (1.0 - lo) * i as f64 / 100_000.0)
        .map(|r| (r, cost(r)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn solve(horizon: f64, bound: f64) -> (f64, f64, f64) {
    let spec = DynamicsSpec::driftless(
        1,
        1,
        vec![AffineField {
            a: vec![vec![0.0]],
            c: vec![1.0],
        }],
    )
    .unwrap();
    let obj = ObjectiveSpec::new(
        LossKind::LeastSquares,
        OutputMap::identity(1),
        Labels::Targets(vec![vec![1.0]]),
        bound,
    )
    .unwrap();
    let grid = TimeGrid::new(horizon, (horizon * 40.0).round() as usize).unwrap();
    let cfg = TrainConfig {
        lr: 0.05,
        iters: 5000,
        scheme: Scheme::Euler,
        ..Default::default()
    };
    let res = train(&spec, &[0.0], &obj, grid, &cfg).unwrap();
    let rep = sparsity_report(&res.traj, &res.ctrl, &obj, 0.05, 1e-3).unwrap();
    (res.final_cost().total, rep.error_at_tstar, rep.tstar)
}

#[test]
fn trained_cost_matches_continuous_optimum() {
    for (horizon, bound) in [(1.0, 8.0), (4.0, 8.0), (4.0, 2.0), (2.0, 4.0)] {
        let (r, j_opt) = continuous_optimum(horizon, bound);
        let (j, e_star, tstar) = solve(horizon, bound);
        let rel = (j - j_opt).abs() / j_opt;
        assert!(
            rel < 0.03,
            "T = {horizon}, M = {bound}: J = {j}, optimum {j_opt} ({rel:.3})"
        );
        assert!(
            (e_star - r * r).abs() < 0.15 * r * r,
            "E(T*) = {e_star}, r² = {}",
            r * r
        );
        let t1 = (1.0 - r) / bound;
        assert!((tstar - t1).abs() <= 0.05, "T* = {tstar}, switch at {t1}");
    }
}

#[test]
fn optimal_residual_scales_like_one_over_t() {
    // Large T: stationarity gives 2rT ≈ 1, so E(T*)·T ≈ 1/(4T) keeps shrinking.
    for horizon in [4.0, 8.0, 16.0] {
        let (r, _) = continuous_optimum(horizon, 8.0);
        assert!(
            (2.0 * r * horizon - 1.0).abs() < 0.1,
            "T = {horizon}: r = {r}"
        );
    }
}
