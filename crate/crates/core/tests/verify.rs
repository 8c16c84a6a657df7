use lsp_lab::asymptotics::{predict_for_sequence, Law};
use lsp_lab::solver::solve;
use lsp_lab::verify::{
    check_growth_bounds, compare, expected_search_time_mc, expected_search_time_mc_with_threads,
    hazard_lower_bound_violation, objective_value, CompareConfig, Verdict, VerifyError,
};
use lsp_lab::{DensityModel, SolverConfig, TurningSequence};

fn solved(m: &DensityModel, k_max: usize) -> TurningSequence {
    solve(m, &SolverConfig::with_k_max(k_max)).unwrap()
}

fn verdict(m: &DensityModel, k_max: usize, law: Law, window: (usize, usize), tol: f64) -> Verdict {
    let seq = solved(m, k_max);
    let ks: Vec<usize> = (window.0..=window.1).collect();
    let pred = predict_for_sequence(m, &law, &seq, &ks).unwrap();
    compare(
        &seq,
        &pred,
        window,
        &CompareConfig {
            tol,
            ..Default::default()
        },
    )
    .unwrap()
    .verdict
}

#[test]
fn exponential_increments_converge() {
    let m = DensityModel::exponential(1.0).unwrap();
    assert_eq!(
        verdict(&m, 200, Law::IncrementFormula, (50, 200), 0.05),
        Verdict::Converging
    );
}

#[test]
fn lomax_ratios_converge() {
    let m = DensityModel::lomax(3.0).unwrap();
    assert_eq!(
        verdict(&m, 80, Law::ParetoRate, (20, 60), 0.01),
        Verdict::Converging
    );
}

#[test]
fn triangular_log_residual_ratios_converge() {
    let m = DensityModel::triangular();
    assert_eq!(
        verdict(&m, 24, Law::CompactDoubleExp, (5, 18), 0.02),
        Verdict::Converging
    );
}

#[test]
fn wrong_rate_diverges() {
    let m = DensityModel::lomax(2.0).unwrap();
    let seq = solved(&m, 80);
    let ks: Vec<usize> = (20..=60).collect();
    let mut pred = predict_for_sequence(&m, &Law::ParetoRate, &seq, &ks).unwrap();
    for v in pred.values.values_mut() {
        *v = 2.0;
    }
    let rep = compare(
        &seq,
        &pred,
        (20, 60),
        &CompareConfig {
            tol: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    assert_ne!(rep.verdict, Verdict::Converging);
}

#[test]
fn short_window_is_rejected() {
    let m = DensityModel::exponential(1.0).unwrap();
    let seq = solved(&m, 40);
    let ks: Vec<usize> = (10..=15).collect();
    let pred = predict_for_sequence(&m, &Law::IncrementFormula, &seq, &ks).unwrap();
    assert!(matches!(
        compare(&seq, &pred, (10, 15), &CompareConfig::default()),
        Err(VerifyError::WindowTooShort { .. })
    ));
}

#[test]
fn growth_bounds_by_class() {
    let e = DensityModel::exponential(1.0).unwrap();
    let g = check_growth_bounds(&solved(&e, 100), &e.classify_tail().unwrap()).unwrap();
    assert!(g.bounded);
    assert_eq!(g.tends_to_one, Some(true));

    let l = DensityModel::lomax(3.0).unwrap();
    let g = check_growth_bounds(&solved(&l, 60), &l.classify_tail().unwrap()).unwrap();
    assert!(g.bounded);
    let last = g.sup_by_burn_in.last().unwrap().1;
    assert!((last - 2.0).abs() < 0.01, "{last}");

    let t = DensityModel::triangular();
    let seq = solved(&t, 24);
    let g = check_growth_bounds(&seq, &t.classify_tail().unwrap()).unwrap();
    assert!(g.bounded);
    assert_eq!(g.tends_to_one, Some(true));
}

#[test]
fn short_sequences_are_rejected_by_growth_check() {
    let e = DensityModel::exponential(1.0).unwrap();
    assert!(check_growth_bounds(&solved(&e, 10), &e.classify_tail().unwrap()).is_err());
}

#[test]
fn optima_satisfy_hazard_lower_bound() {
    for m in [
        DensityModel::exponential(1.0).unwrap(),
        DensityModel::stretched_exp(1.0, 1.0).unwrap(),
        DensityModel::lomax(3.0).unwrap(),
        DensityModel::triangular(),
    ] {
        let seq = solved(&m, 40);
        assert_eq!(
            hazard_lower_bound_violation(&m, &seq, 3),
            None,
            "{}",
            m.spec_string()
        );
    }
}

#[test]
fn objective_matches_direct_sum() {
    let m = DensityModel::exponential(1.0).unwrap();
    let e = std::f64::consts::E;
    let s = TurningSequence::from_points(&m, &[0.0, 1.0, e], false).unwrap();
    let j = objective_value(&m, &s);
    let direct = 1.0 * ((-1f64).exp() + 1.0) + e * ((-e).exp() + (-1f64).exp());
    assert!((j.value - direct).abs() <= 1e-14 * direct);
    assert!(j.tail_bound > 0.0);
}

#[test]
fn monte_carlo_matches_moment_plus_objective() {
    for (m, k_max) in [
        (DensityModel::uniform(), 10),
        (DensityModel::exponential(1.0).unwrap(), 100),
        (DensityModel::triangular(), 24),
    ] {
        let seq = solved(&m, k_max);
        let target = m.first_abs_moment().unwrap() + objective_value(&m, &seq).value;
        let est = expected_search_time_mc(&m, &seq, 1_000_000, 3);
        assert!(
            (est.mean - target).abs() <= 3.0 * est.half_width_95,
            "{}: {} vs {target}",
            m.spec_string(),
            est.mean
        );
    }
}

#[test]
fn monte_carlo_is_thread_count_invariant() {
    let m = DensityModel::triangular();
    let seq = solved(&m, 24);
    let a = expected_search_time_mc_with_threads(&m, &seq, 50_000, 9, 1);
    let b = expected_search_time_mc_with_threads(&m, &seq, 50_000, 9, 3);
    let c = expected_search_time_mc_with_threads(&m, &seq, 50_000, 9, 8);
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn verdict_strings_are_stable() {
    assert_eq!(
        serde_json::to_value(Verdict::Converging).unwrap(),
        "converging"
    );
    assert_eq!(
        serde_json::to_value(Verdict::Inconclusive).unwrap(),
        "inconclusive"
    );
    assert_eq!(
        serde_json::to_value(Verdict::Diverging).unwrap(),
        "diverging"
    );
}
