//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use lsp_lab::asymptotics::{self, Law};
use lsp_lab::numerics::{integrate, linear_fit};
use lsp_lab::solver::{self, find_x1, finite_horizon_optimize, recurrence_residual, SolverConfig};
use lsp_lab::verify::{self, check_growth_bounds, compare, CompareConfig, Verdict};
use lsp_lab::{DensityModel, TurningSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn solve(model: &DensityModel, k_max: usize) -> TurningSequence {
    solver::solve(model, &SolverConfig::with_k_max(k_max)).expect("solver")
}

// 1
fn uniform_endpoints() -> Outcome {
    let m = DensityModel::uniform();
    let seq = solve(&m, 10);
    let j = verify::objective_value(&m, &seq).value;
    let mc = verify::expected_search_time_mc(&m, &seq, 1_000_000, 1);
    let points_ok = seq.points() == vec![0.0, 1.0] && seq.terminated();
    let mc_ok = (mc.mean - 1.5).abs() <= 3.0 * mc.std_error;
    check(
        points_ok && j == 1.0 && mc_ok,
        format!(
            "points {:?} terminated {} J {j} MC {:.5} +- {:.1e}",
            seq.points(),
            seq.terminated(),
            mc.mean,
            mc.std_error
        ),
    )
}

// 2
fn pareto_rate() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (a, r) in [(3.0, 2.0), (2.0, 1.0 + 2f64.sqrt())] {
        let m = DensityModel::lomax(a).unwrap();
        let seq = solve(&m, 80);
        let pred = asymptotics::predict_for_sequence(
            &m,
            &Law::ParetoRate,
            &seq,
            &(20..=60).collect::<Vec<_>>(),
        )
        .unwrap();
        let cfg = CompareConfig {
            tol: 0.01,
            ..Default::default()
        };
        let rep = compare(&seq, &pred, (20, 60), &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for k in 20..=60 {
            worst = worst.max((seq.point(k + 1) / seq.point(k) / r - 1.0).abs());
        }
        ok &=
            rep.verdict == Verdict::Converging && (rep.summary.tail_mean_ratio - 1.0).abs() <= 0.01;
        details.push(format!(
            "lomax:{a} tail mean ratio/r {:.5} worst {:.4} verdict {}",
            rep.summary.tail_mean_ratio,
            worst,
            rep.verdict.as_str()
        ));
    }
    check(ok, details.join("; "))
}

// 3
fn exponential_increments() -> Outcome {
    let m = DensityModel::exponential(1.0).unwrap();
    let seq = solve(&m, 200);
    let mut worst: f64 = 0.0;
    for k in 50..=200 {
        let x = seq.point(k);
        let h = m.hazard(x).unwrap();
        let pred = (2.0 * x * h).ln() / h;
        worst = worst.max((seq.increment(k) / pred - 1.0).abs());
    }
    check(
        worst <= 0.05,
        format!("max |ratio - 1| over k in [50,200] = {worst:.4}"),
    )
}

fn log_ratio_slope(ks: &[usize], ratios: &[f64]) -> f64 {
    let lx: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ly: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    linear_fit(&lx, &ly).expect("fit").1
}

// 4
fn normal_type_leading_order() -> Outcome {
    let started = Instant::now();
    let m = DensityModel::stretched_exp(1.0, 1.0).unwrap();
    let seq = solve(&m, 300);
    let ks: Vec<usize> = (100..=300).collect();
    let ratios: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let k = k as f64;
            seq.point(k as usize) / (2.0 * k * k.ln()).sqrt()
        })
        .collect();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
            (a.min(r), b.max(r))
        });
    let slope = log_ratio_slope(&ks, &ratios);
    let slope_first = log_ratio_slope(&ks[..101], &ratios[..101]);
    let slope_second = log_ratio_slope(&ks[100..], &ratios[100..]);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = lo >= 0.85
        && hi <= 1.15
        && slope < 0.0
        && slope_second.abs() < slope_first.abs()
        && elapsed <= 120.0;
    check(
        ok,
        format!(
            "ratio range [{lo:.4}, {hi:.4}] slope {slope:.4} (halves {slope_first:.4}, {slope_second:.4}) in {elapsed:.1}s"
        ),
    )
}

// 5
fn increment_trichotomy() -> Outcome {
    let tail_increments = |seq: &TurningSequence, a: usize, b: usize| -> Vec<f64> {
        (a..=b).map(|k| seq.increment(k)).collect()
    };
    let exp = solve(&DensityModel::exponential(1.0).unwrap(), 200);
    let d_exp = tail_increments(&exp, 100, 200);
    let exp_up = d_exp.windows(2).all(|w| w[1] > w[0]);

    let se = solve(&DensityModel::stretched_exp(1.0, 1.0).unwrap(), 200);
    let d_se = tail_increments(&se, 100, 200);
    let se_down = d_se.windows(2).all(|w| w[1] < w[0]);
    let ks: Vec<f64> = (100..=200).map(|k| (k as f64).ln()).collect();
    let se_slope = linear_fit(&ks, &d_se.iter().map(|d| d.ln()).collect::<Vec<_>>())
        .expect("fit")
        .1;

    let lb = solve(&DensityModel::log_boundary(2.0).unwrap(), 200);
    let d_lb = tail_increments(&lb, 100, 200);
    let (lo, hi) = d_lb
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
            (a.min(r), b.max(r))
        });
    let lb_ok = lo >= 0.4 && hi <= 0.6;
    check(
        exp_up && se_down && se_slope < 0.0 && lb_ok,
        format!(
            "exponential increasing {exp_up} ({:.3} -> {:.3}); stretchedexp decreasing {se_down} ({:.4} -> {:.4}, log-log slope {se_slope:.3}); logboundary:2 range [{lo:.4}, {hi:.4}]",
            d_exp[0],
            d_exp[d_exp.len() - 1],
            d_se[0],
            d_se[d_se.len() - 1]
        ),
    )
}

// 6
fn triangular_double_exponential() -> Outcome {
    let m = DensityModel::triangular();
    let seq = solve(&m, 24);
    let l = |k: usize| seq.coords()[k];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 8..=16 {
        let r = l(k + 1) / l(k);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let fit = asymptotics::fit_double_exp(&seq, 2.0).unwrap();
    check(
        lo >= 1.98 && hi <= 2.02 && fit.stability <= 0.05,
        format!(
            "L ratio range [{lo:.5}, {hi:.5}] A {:.6} stability {:.2e}",
            fit.a, fit.stability
        ),
    )
}

// 7
fn compact_fast_residuals() -> Outcome {
    let m = DensityModel::compact_fast(1.0, 1.0).unwrap();
    let seq = solve(&m, 150);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 50..=150 {
        let v = seq.residual(k) * 2.0 * k as f64;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    check(
        lo >= 0.9 && hi <= 1.1,
        format!("(1 - x_k) 2k over k in [50,150] spans [{lo:.4}, {hi:.4}]"),
    )
}

// 8
fn oracle_equivalence() -> Outcome {
    let cfg = SolverConfig::default();
    let mut ok = true;
    let mut details = Vec::new();
    for m in [
        DensityModel::exponential(1.0).unwrap(),
        DensityModel::triangular(),
        DensityModel::lomax(3.0).unwrap(),
    ] {
        let shooting = find_x1(&m, &SolverConfig::with_k_max(cfg.horizon_n)).unwrap();
        let oracle = finite_horizon_optimize(&m, cfg.horizon_n, &cfg).unwrap();
        let rel = (shooting / oracle.point(1) - 1.0).abs();
        let worst = recurrence_residual(&m, &oracle)
            .iter()
            .fold(0f64, |a, r| a.max(r.abs()));
        ok &= rel <= 1e-4 && worst <= 1e-8;
        details.push(format!(
            "{} x1 rel diff {rel:.1e} residual {worst:.1e}",
            m.spec_string()
        ));
    }
    check(ok, details.join("; "))
}

fn perturbed(model: &DensityModel, seq: &TurningSequence, seed: u64) -> TurningSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0];
    for k in 1..seq.len() {
        let scale = 1.0 + 0.3 * (2.0 * rng.random::<f64>() - 1.0);
        x.push(x[k - 1] + seq.increment(k) * scale);
    }
    TurningSequence::from_points(model, &x, false).unwrap()
}

// 9
fn objective_identity() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (m, k_max) in [
        (DensityModel::exponential(1.0).unwrap(), 100),
        (DensityModel::triangular(), 24),
    ] {
        let seq = solve(&m, k_max);
        let m1 = m.first_abs_moment().unwrap();
        let j = verify::objective_value(&m, &seq).value;
        let mc = verify::expected_search_time_mc(&m, &seq, 1_000_000, 11);
        let gap = (mc.mean - (m1 + j)).abs() / mc.std_error;
        ok &= gap <= 3.0 && mc.n_rejected == 0;
        details.push(format!(
            "{} |MC - (m1 + J)| = {gap:.2} sigma",
            m.spec_string()
        ));
    }
    let m = DensityModel::exponential(1.0).unwrap();
    let base = solve(&m, 100);
    let (a, b) = (perturbed(&m, &base, 5), perturbed(&m, &base, 6));
    let (ja, jb) = (
        verify::objective_value(&m, &a).value,
        verify::objective_value(&m, &b).value,
    );
    let (ea, eb) = (
        verify::expected_search_time_mc(&m, &a, 1_000_000, 21),
        verify::expected_search_time_mc(&m, &b, 1_000_000, 22),
    );
    let sigma = (ea.std_error.powi(2) + eb.std_error.powi(2)).sqrt();
    let gap = ((ea.mean - eb.mean) - (ja - jb)).abs() / sigma;
    ok &= gap <= 3.0;
    details.push(format!("strategy difference gap {gap:.2} sigma"));
    check(ok, details.join("; "))
}

// 10
fn property_suites() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    let models = [
        DensityModel::exponential(1.0).unwrap(),
        DensityModel::stretched_exp(1.0, 1.0).unwrap(),
        DensityModel::lomax(3.0).unwrap(),
        DensityModel::gumbel(1.0).unwrap(),
        DensityModel::lognormal(1.0).unwrap(),
        DensityModel::triangular(),
        DensityModel::compact_power(3.0).unwrap(),
        DensityModel::uniform(),
    ];
    for m in &models {
        let seq = solve(m, 40);
        let coords = seq.coords();
        let monotone = coords.windows(2).all(|w| w[1] > w[0]);
        ok &= monotone;
        if !monotone {
            details.push(format!("{} not monotone", m.spec_string()));
        }
        if seq.len() >= 20 {
            let class = m.classify_tail().unwrap();
            let g = check_growth_bounds(&seq, &class).unwrap();
            ok &= g.bounded && g.tends_to_one != Some(false);
            if !(g.bounded && g.tends_to_one != Some(false)) {
                details.push(format!("{} growth {:?}", m.spec_string(), g));
            }
            if let Some(k) = verify::hazard_lower_bound_violation(m, &seq, 5) {
                ok = false;
                details.push(format!("{} x h(x) <= 1 at k = {k}", m.spec_string()));
            }
        }
        let top = if m.is_compact() {
            0.999
        } else {
            5.0 * m.scale()
        };
        for i in 1..=10 {
            let x = top * i as f64 / 10.0;
            let int = integrate(|t| m.hazard(t).unwrap(), 0.0, x, 1e-12, 1e-300).unwrap();
            let g = m.survival(x).unwrap();
            if ((-int).exp() - g).abs() > 1e-6 * g.max(1e-300) {
                ok = false;
                details.push(format!("{} survival identity at {x}", m.spec_string()));
            }
        }
        if let Ok(x_low) = asymptotics::default_x_low(m) {
            for i in 1..=10 {
                let x = if m.is_compact() {
                    x_low + (1.0 - x_low) * (1.0 - 0.5f64.powi(i))
                } else {
                    x_low * (1.0 + i as f64)
                };
                let k = asymptotics::index_integral(m, x, x_low).unwrap();
                let back = asymptotics::invert_index(m, k, x_low).unwrap();
                if ((back - x) / x).abs() > 1e-6 {
                    ok = false;
                    details.push(format!("{} index inversion at {x}", m.spec_string()));
                }
            }
        }
    }
    if details.is_empty() {
        details.push(format!("{} families checked", models.len()));
    }
    check(ok, details.join("; "))
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 uniform endpoint optimality", uniform_endpoints),
        ("2 pareto rate", pareto_rate),
        ("3 exponential increment law", exponential_increments),
        ("4 normal-type leading order", normal_type_leading_order),
        ("5 increment trichotomy", increment_trichotomy),
        (
            "6 compact double exponential",
            triangular_double_exponential,
        ),
        ("7 compact fast family", compact_fast_residuals),
        ("8 oracle equivalence", oracle_equivalence),
        ("9 objective and Monte-Carlo identity", objective_identity),
        ("10 property suites", property_suites),
    ];
    let results: Vec<(Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
                        let msg = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_default();
                        Err(format!("panicked: {msg}"))
                    });
                    (r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("criterion thread"))
            .collect()
    });
    let mut failed = 0;
    for ((name, _), (r, secs)) in criteria.iter().zip(&results) {
        match r {
            Ok(d) => println!("PASS criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
