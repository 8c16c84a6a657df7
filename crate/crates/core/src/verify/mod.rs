//! Objective evaluation, comparison of computed sequences against
//! asymptotic predictions, and Monte-Carlo validation of the objective.

mod montecarlo;

use serde::Serialize;
use thiserror::Error;

use crate::asymptotics::AsymptoticPrediction;
use crate::density::{DensityModel, Support, TailClass};
use crate::numerics;
use crate::solver::TurningSequence;

pub use montecarlo::{
    expected_search_time_mc, expected_search_time_mc_with_threads, MonteCarloEstimate,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("window {lo}:{hi} holds {points} usable points; at least {min} are needed")]
    WindowTooShort {
        lo: usize,
        hi: usize,
        points: usize,
        min: usize,
    },
    #[error("sequence has {len} points; at least {min} are needed")]
    SequenceTooShort { len: usize, min: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveValue {
    /// `sum_k x_k (G(x_k) + G(x_{k-1}))` over the available points.
    pub value: f64,
    /// Upper bound on the cost of the best continuation beyond the last point.
    pub tail_bound: f64,
}

/// The search objective of a strategy (the expected search time minus the
/// mean target distance).
pub fn objective_value(model: &DensityModel, seq: &TurningSequence) -> ObjectiveValue {
    let u = seq.coords();
    let g = |v: f64| (-model.cum_hazard_u(v)).exp();
    let terms: Vec<f64> = (1..u.len())
        .map(|k| seq.point(k) * (g(u[k]) + g(u[k - 1])))
        .collect();
    let value = numerics::pairwise_sum(&terms);
    let last = *u.last().expect("sequence starts at the origin");
    let tail_bound = if seq.terminated() {
        0.0
    } else {
        match model.support() {
            // going straight to the boundary costs at most 1 * G(x_last)
            Support::UnitInterval => g(last),
            Support::HalfLine => half_line_tail_bound(model, last),
        }
    };
    ObjectiveValue { value, tail_bound }
}

/// Cost of the geometric competitor `y_j = x_N r^j`, `r = 2^(1/c)`, using
/// `G(u) <= G(v) (u/v)^-c` with local `c = x h(x)`.
fn half_line_tail_bound(model: &DensityModel, u: f64) -> f64 {
    if u <= 0.0 {
        return f64::INFINITY;
    }
    let g = (-model.cum_hazard_u(u)).exp();
    if g == 0.0 {
        return 0.0;
    }
    let c = (u.ln() + model.ln_hazard_u(u)).exp();
    if !(c > 1.0) {
        return f64::INFINITY;
    }
    let r = 2f64.powf(1.0 / c);
    let q = r.powf(1.0 - c);
    3.0 * u * g * q / (1.0 - q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converging,
    Inconclusive,
    Diverging,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converging => "converging",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Diverging => "diverging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareConfig {
    /// Band `[1 - tol, 1 + tol]` for the tail-window mean ratio.
    pub tol: f64,
    /// Bound on `|d ln(ratio) / d ln k|` over the window.
    pub slope_tol: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            tol: 0.05,
            slope_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub k: usize,
    pub numeric: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    /// Mean of numeric/predicted over the second half of the window.
    pub tail_mean_ratio: f64,
    /// Least-squares slope of `ln(ratio)` against `ln k` over the window.
    pub log_ratio_slope: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub tol: f64,
    pub slope_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub model: String,
    pub law: String,
    pub quantity: String,
    pub window: (usize, usize),
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
    pub verdict: Verdict,
}

pub const MIN_WINDOW_POINTS: usize = 10;

/// Ratio statistics of `seq` against `prediction` for `k` in `lo..=hi`.
pub fn compare(
    seq: &TurningSequence,
    prediction: &AsymptoticPrediction,
    window: (usize, usize),
    config: &CompareConfig,
) -> Result<ComparisonReport, VerifyError> {
    let (lo, hi) = window;
    if lo > hi {
        return Err(VerifyError::Invalid(format!("empty window {lo}:{hi}")));
    }
    let mut rows = Vec::new();
    for k in lo..=hi {
        let (Some(numeric), Some(&predicted)) = (
            prediction.quantity.measure(seq, k),
            prediction.values.get(&k),
        ) else {
            continue;
        };
        rows.push(ComparisonRow {
            k,
            numeric,
            predicted,
            ratio: numeric / predicted,
        });
    }
    if rows.len() < MIN_WINDOW_POINTS {
        return Err(VerifyError::WindowTooShort {
            lo,
            hi,
            points: rows.len(),
            min: MIN_WINDOW_POINTS,
        });
    }
    let tail = &rows[rows.len() / 2..];
    let tail_mean_ratio = tail.iter().map(|r| r.ratio).sum::<f64>() / tail.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| (r.k as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let log_ratio_slope = numerics::linear_fit(&xs, &ys)
        .map(|(_, s)| s)
        .unwrap_or(f64::NAN);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let in_band = (tail_mean_ratio - 1.0).abs() <= config.tol;
    let verdict = if !tail_mean_ratio.is_finite() || !log_ratio_slope.is_finite() {
        Verdict::Inconclusive
    } else if in_band && log_ratio_slope.abs() < config.slope_tol {
        Verdict::Converging
    } else if !in_band && log_ratio_slope * tail_mean_ratio.ln() > 0.0 {
        // outside the band and still moving away from 1
        Verdict::Diverging
    } else {
        Verdict::Inconclusive
    };
    Ok(ComparisonReport {
        model: prediction.model.clone(),
        law: prediction.law.name().to_string(),
        quantity: prediction.quantity.name().to_string(),
        window,
        rows,
        summary: ComparisonSummary {
            tail_mean_ratio,
            log_ratio_slope,
            min_ratio,
            max_ratio,
            tol: config.tol,
            slope_tol: config.slope_tol,
        },
        verdict,
    })
}

/// Sup of the ratios `x_{k+1}/x_k` over `k >= K` for several burn-ins `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub sup_by_burn_in: Vec<(usize, f64)>,
    /// Exponential growth bound `3 / (2^(1 - 1/L) - 1)` for `x h(x) -> L`.
    pub bound: Option<f64>,
    pub bounded: bool,
    /// Whether the tail sup decreases towards 1 (only for `h = omega(1/x)`).
    pub tends_to_one: Option<bool>,
}

/// Checks the "no faster than exponential" growth of turning points and,
/// when the hazard is `omega(1/x)`, the convergence of the ratios to 1.
pub fn check_growth_bounds(
    seq: &TurningSequence,
    class: &TailClass,
) -> Result<GrowthReport, VerifyError> {
    if seq.len() < 20 {
        return Err(VerifyError::SequenceTooShort {
            len: seq.len(),
            min: 20,
        });
    }
    let finite = (1..seq.len())
        .filter(|&k| seq.coords()[k].is_finite())
        .count();
    // x_{k+1}/x_k - 1, from residuals on the unit interval
    let excess: Vec<f64> = (1..finite)
        .map(|k| match seq.support() {
            Support::HalfLine => seq.increment(k + 1) / seq.point(k),
            Support::UnitInterval => (seq.residual(k) - seq.residual(k + 1)) / seq.point(k),
        })
        .collect();
    let n = excess.len();
    let burn_ins: Vec<usize> = [n / 4, n / 2, 3 * n / 4, n.saturating_sub(3)]
        .into_iter()
        .filter(|&k| k < n)
        .collect();
    let sup_excess: Vec<f64> = burn_ins
        .iter()
        .map(|&b| {
            excess[b..]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let sup_by_burn_in: Vec<(usize, f64)> = burn_ins
        .iter()
        .zip(&sup_excess)
        .map(|(&b, &e)| (b + 1, 1.0 + e))
        .collect();
    let bound = match class {
        TailClass::PowerLawTail { a } => Some(3.0 / (2f64.powf(1.0 - 1.0 / a) - 1.0)),
        _ => None,
    };
    let bounded = match bound {
        Some(m) => sup_by_burn_in.iter().all(|&(_, s)| s <= m),
        None => sup_by_burn_in.iter().all(|&(_, s)| s.is_finite()),
    };
    let tends_to_one = match class {
        TailClass::PowerLawTail { .. } => None,
        _ => {
            let non_increasing = sup_excess.windows(2).all(|w| w[1] <= w[0]);
            let first = sup_excess[0];
            let last = sup_excess[sup_excess.len() - 1];
            Some(non_increasing && last >= 0.0 && (last < first || last == 0.0))
        }
    };
    Ok(GrowthReport {
        sup_by_burn_in,
        bound,
        bounded,
        tends_to_one,
    })
}

/// `x_k h(x_k) > 1` for every `k >= burn_in`, the lower bound on
/// the hazard along an optimum. Returns the first offending `k`.
pub fn hazard_lower_bound_violation(
    model: &DensityModel,
    seq: &TurningSequence,
    burn_in: usize,
) -> Option<usize> {
    (burn_in.max(1)..seq.len())
        .filter(|&k| seq.coords()[k].is_finite())
        .find(|&k| !(seq.point(k).ln() + model.ln_hazard_u(seq.coords()[k]) > 0.0))
}
