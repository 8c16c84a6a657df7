use approx::assert_relative_eq;
use lsp_lab::density::DensityError;
use lsp_lab::solver::{
    find_x1, finite_horizon_optimize, log_recurrence_residual, optimize_horizon,
    recurrence_residual, solve, SolverError,
};
use lsp_lab::verify::objective_value;
use lsp_lab::{DensityModel, SolverConfig, TurningSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_models() -> Vec<DensityModel> {
    vec![
        DensityModel::exponential(1.0).unwrap(),
        DensityModel::triangular(),
        DensityModel::lomax(3.0).unwrap(),
    ]
}

#[test]
fn solve_prefix_matches_longer_oracle() {
    let cfg = SolverConfig::with_k_max(20);
    for m in reference_models() {
        let s = solve(&m, &cfg).unwrap();
        let o = finite_horizon_optimize(&m, 40, &SolverConfig::default()).unwrap();
        for k in 1..=10 {
            let (a, b) = (s.point(k), o.point(k));
            assert!(
                (a - b).abs() <= 1e-3 * b,
                "{} k={k}: {a} vs {b}",
                m.spec_string()
            );
            // chart coordinates resolve points that round to 1
            let (ua, ub) = (s.coords()[k], o.coords()[k]);
            assert!(
                (ua - ub).abs() <= 1e-3 * ub,
                "{} k={k}: {ua} vs {ub}",
                m.spec_string()
            );
        }
    }
}

fn perturb(model: &DensityModel, seq: &TurningSequence, rng: &mut ChaCha8Rng) -> TurningSequence {
    let n = seq.len() - 1;
    let mut u = seq.coords().to_vec();
    for k in 1..n {
        let lo = u[k - 1];
        let hi = if u[k + 1].is_finite() {
            u[k + 1]
        } else {
            u[k] * 2.0
        };
        let t = u[k] + 0.2 * (rng.random::<f64>() - 0.5) * (hi - lo);
        u[k] = t.clamp(lo + 1e-3 * (u[k] - lo), hi - 1e-3 * (hi - u[k]));
    }
    TurningSequence::from_coords(model, u, seq.terminated()).unwrap()
}

#[test]
fn oracle_beats_random_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for m in reference_models() {
        let best = finite_horizon_optimize(&m, 30, &SolverConfig::default()).unwrap();
        let j_best = objective_value(&m, &best).value;
        for _ in 0..50 {
            let other = perturb(&m, &best, &mut rng);
            let j = objective_value(&m, &other).value;
            assert!(j_best <= j, "{}: {j_best} > {j}", m.spec_string());
        }
    }
}

#[test]
fn solve_uniform_visits_endpoints() {
    let m = DensityModel::uniform();
    let s = solve(&m, &SolverConfig::with_k_max(10)).unwrap();
    assert_eq!(s.points(), vec![0.0, 1.0]);
    assert!(s.terminated());
}

#[test]
fn solve_exponential_has_growing_increments() {
    let m = DensityModel::exponential(1.0).unwrap();
    let s = solve(&m, &SolverConfig::with_k_max(200)).unwrap();
    assert_eq!(s.len(), 201);
    let d = s.increments();
    assert!(d.iter().all(|&v| v > 0.0));
    assert!(d[10..].windows(2).all(|w| w[1] > w[0]));
    for r in log_recurrence_residual(&m, &s) {
        assert!(r.abs() < 1e-8, "{r}");
    }
}

#[test]
fn solve_triangular_never_terminates() {
    let m = DensityModel::triangular();
    let s = solve(&m, &SolverConfig::with_k_max(20)).unwrap();
    assert_eq!(s.len(), 21);
    assert!(!s.terminated());
    let eps: Vec<f64> = (1..s.len()).map(|k| s.residual(k)).collect();
    assert!(eps.iter().all(|&e| e >= 0.0));
    assert!(s.coords().iter().all(|u| u.is_finite()));
    assert!(eps.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn infinite_mean_is_unsolvable() {
    let m = DensityModel::lomax(0.8).unwrap();
    let err = solve(&m, &SolverConfig::default()).unwrap_err();
    assert!(
        matches!(err, SolverError::Density(DensityError::InfiniteMean(_))),
        "{err:?}"
    );
}

#[test]
fn oracle_rejects_empty_horizon() {
    let m = DensityModel::exponential(1.0).unwrap();
    assert!(matches!(
        optimize_horizon(&m, 0, 1, &SolverConfig::default()),
        Err(SolverError::Config(_))
    ));
}

#[test]
fn lomax_shooting_yields_doubling_ratios() {
    let m = DensityModel::lomax(3.0).unwrap();
    let x1 = find_x1(&m, &SolverConfig::with_k_max(40)).unwrap();
    let o = finite_horizon_optimize(&m, 40, &SolverConfig::default()).unwrap();
    assert_relative_eq!(x1, o.point(1), max_relative = 1e-4);
    let s = solve(&m, &SolverConfig::with_k_max(40)).unwrap();
    for k in 15..40 {
        assert_relative_eq!(s.point(k + 1) / s.point(k), 2.0, max_relative = 1e-3);
    }
}

#[test]
fn oracle_residuals_certify_optimality() {
    for m in reference_models() {
        let o = finite_horizon_optimize(&m, 40, &SolverConfig::default()).unwrap();
        for r in recurrence_residual(&m, &o) {
            assert!(r.abs() <= 1e-8, "{}: {r}", m.spec_string());
        }
    }
}

#[test]
fn sequences_serialise_with_model_and_points() {
    let m = DensityModel::exponential(1.0).unwrap();
    let s = solve(&m, &SolverConfig::with_k_max(5)).unwrap();
    let v = serde_json::to_value(&s).unwrap();
    assert_eq!(v["model"], "exponential:1");
    assert_eq!(v["terminated"], false);
}
