//! Finite-horizon minimisation of the truncated objective
//! `J_n = sum_{k=1..n} x_k (G(x_k) + G(x_{k-1}))` by cyclic coordinate descent.
//!
//! Sweeps visit `k = 1, 2, ..., n-1` in that order. Each coordinate is
//! minimised exactly by locating a sign change of [`stationarity`], which
//! has the sign of `dJ/dx_k`. On the unit interval the terminal point is the
//! boundary; on the half-line it is pinned far enough out that moving it
//! further no longer changes the leading points.

use serde::Serialize;

use super::{stationarity, SolverConfig, SolverError, TurningSequence};
use crate::density::{DensityModel, Support, TailClass};
use crate::numerics::brent_root;

/// Chart coordinate standing in for the boundary of `[0, 1)` (`e^-800 = 0`).
const COMPACT_U_CAP: f64 = 1e300;
const OBJECTIVE_TOL: f64 = 1e-12;
const COORD_TOL: f64 = 1e-12;
const PIN_GROWTH: f64 = 8.0;
const PIN_STABILITY: f64 = 1e-10;
const MAX_PIN_ROUNDS: usize = 100;
const COLLAPSE_TOL: f64 = 1e-9;
const MAX_STRETCH_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRun {
    pub sequence: TurningSequence,
    pub sweeps: usize,
    pub objective: f64,
    /// Terminal position `x_n` (1 on the unit interval).
    pub pin: f64,
}

/// Minimises the `n`-leg truncated objective. For the half-line the
/// terminal pin is grown until the first half of the points is stable.
pub fn finite_horizon_optimize(
    model: &DensityModel,
    n: usize,
    config: &SolverConfig,
) -> Result<TurningSequence, SolverError> {
    optimize_horizon(model, n, n / 2 + 1, config).map(|r| r.sequence)
}

/// As [`finite_horizon_optimize`], requiring the first `keep` points to be
/// insensitive to the half-line pin.
pub fn optimize_horizon(
    model: &DensityModel,
    n: usize,
    keep: usize,
    config: &SolverConfig,
) -> Result<OracleRun, SolverError> {
    config.validate()?;
    if n < 1 {
        return Err(SolverError::Config("horizon must be at least 1".into()));
    }
    let terminating = matches!(model.classify_tail(), Ok(TailClass::CompactTerminating));
    match model.support() {
        Support::UnitInterval => {
            let l0 = model.inv_cum_hazard(1e4).min(50.0);
            let mut u: Vec<f64> = (0..=n).map(|k| l0 * (1.0 + k as f64 / n as f64)).collect();
            u[0] = 0.0;
            u[n] = f64::INFINITY;
            let (u, sweeps) = descend(model, u, terminating, config.max_sweeps)?;
            finish(model, u, sweeps, true)
        }
        Support::HalfLine => {
            let cap_point = model.inv_cum_hazard(-(1.0 - config.quantile_cap).ln());
            let mut pin = cap_point;
            let geometric = matches!(model.classify_tail(), Ok(TailClass::PowerLawTail { .. }));
            let mut u: Vec<f64> = (0..=n)
                .map(|k| {
                    let f = k as f64 / n as f64;
                    if geometric {
                        (pin.ln_1p() * f).exp_m1()
                    } else {
                        pin * f
                    }
                })
                .collect();
            let keep = keep.min(n);
            let mut total_sweeps = 0;
            let mut previous: Option<Vec<f64>> = None;
            let mut first_free: Option<Vec<f64>> = None;
            let mut free_rounds = 0;
            for _ in 0..MAX_PIN_ROUNDS {
                u[n] = pin;
                let (sol, sweeps) = descend(model, u, false, config.max_sweeps)?;
                total_sweeps += sweeps;
                let collapsed = collapsed_legs(model, &sol);
                if !collapsed.is_empty() {
                    // more legs than the pin distance needs: drop them and extend outwards
                    log::debug!(
                        "{}: {} collapsed legs at pin {pin}",
                        model.spec_string(),
                        collapsed.len()
                    );
                    let steps = collapsed.len().div_ceil(8).min(4) as i32;
                    pin *= PIN_GROWTH.powi(steps);
                    u = extend_without(&sol, &collapsed, pin);
                    previous = None;
                    first_free = None;
                    free_rounds = 0;
                    continue;
                }
                let change = previous.as_ref().map(|p| {
                    (1..keep).fold(0f64, |m, k| m.max((sol[k] - p[k]).abs() / sol[k].abs()))
                });
                let stable = keep <= 1 || change.is_some_and(|c| c <= PIN_STABILITY);
                if stable {
                    return finish(model, sol, total_sweeps, false);
                }
                let first = first_free.get_or_insert_with(|| sol.clone());
                free_rounds += 1;
                if free_rounds > MAX_STRETCH_ROUNDS {
                    log::warn!(
                        "{}: leading points still move by {:.1e} per pin step; keeping the smallest collapse-free pin",
                        model.spec_string(),
                        change.unwrap_or(f64::NAN)
                    );
                    let first = first.clone();
                    return finish(model, first, total_sweeps, false);
                }
                let next_pin = pin * PIN_GROWTH;
                if !next_pin.is_finite() {
                    log::warn!(
                        "{}: pin growth overflowed; keeping pin {pin}",
                        model.spec_string()
                    );
                    return finish(model, sol, total_sweeps, false);
                }
                log::debug!(
                    "{}: pin {pin} not yet stable, trying {next_pin}",
                    model.spec_string()
                );
                previous = Some(sol.clone());
                u = sol;
                pin = next_pin;
            }
            Err(SolverError::Config(format!(
                "terminal pin did not stabilise after {MAX_PIN_ROUNDS} rounds"
            )))
        }
    }
}

/// Interior legs of (relatively) zero length.
fn collapsed_legs(model: &DensityModel, u: &[f64]) -> Vec<usize> {
    let floor = COLLAPSE_TOL * model.scale();
    (1..u.len() - 1)
        .filter(|&k| u[k] - u[k - 1] <= COLLAPSE_TOL * u[k].abs().max(floor))
        .collect()
}

/// Removes the `dropped` points and refills as many between the old pin
/// and `new_pin`, spaced geometrically.
fn extend_without(u: &[f64], dropped: &[usize], new_pin: f64) -> Vec<f64> {
    let n = u.len() - 1;
    let old_pin = u[n];
    let mut out: Vec<f64> = (0..=n)
        .filter(|k| !dropped.contains(k))
        .map(|k| u[k])
        .collect();
    let c = dropped.len();
    let ratio = new_pin / old_pin;
    out.extend((1..=c).map(|j| old_pin * ratio.powf(j as f64 / c as f64)));
    out
}

fn finish(
    model: &DensityModel,
    u: Vec<f64>,
    sweeps: usize,
    terminated: bool,
) -> Result<OracleRun, SolverError> {
    let objective = objective(model, &u);
    let pin = model.x_of(*u.last().expect("non-empty"));
    let sequence = TurningSequence::from_coords(model, u, terminated)?;
    Ok(OracleRun {
        sequence,
        sweeps,
        objective,
        pin,
    })
}

fn survival_u(model: &DensityModel, u: f64) -> f64 {
    (-model.cum_hazard_u(u)).exp()
}

fn objective(model: &DensityModel, u: &[f64]) -> f64 {
    let mut j = 0.0;
    for k in 1..u.len() {
        j += model.x_of(u[k]) * (survival_u(model, u[k]) + survival_u(model, u[k - 1]));
    }
    j
}

/// Runs sweeps until both the objective decrease and the largest relative
/// coordinate move are negligible.
fn descend(
    model: &DensityModel,
    mut u: Vec<f64>,
    terminating: bool,
    max_sweeps: usize,
) -> Result<(Vec<f64>, usize), SolverError> {
    let n = u.len() - 1;
    let mut j_prev = objective(model, &u);
    let mut last_decrease = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut max_move: f64 = 0.0;
        for k in 1..n {
            let new = coordinate_min(model, u[k - 1], u[k], u[k + 1], terminating);
            let scale = new.abs().max(1e-300);
            max_move = max_move.max((new - u[k]).abs() / scale);
            u[k] = new;
        }
        let j = objective(model, &u);
        last_decrease = j_prev - j;
        j_prev = j;
        if last_decrease.abs() < OBJECTIVE_TOL * j.abs().max(1.0) && max_move < COORD_TOL {
            return Ok((u, sweep));
        }
    }
    let last = TurningSequence::from_coords(model, u, model.is_compact())
        .map_err(|_| SolverError::NotIncreasing(0))?;
    Err(SolverError::NotConverged {
        sweeps: max_sweeps,
        last_decrease,
        last: Box::new(last),
    })
}

/// Coordinate objective `[x (G + G_a) + x_b G] / G_a` up to a constant.
fn coordinate_objective(model: &DensityModel, a: f64, t: f64, b: f64) -> f64 {
    let r = (-model.hazard_integral(a, t)).exp();
    let xb = if b.is_infinite() { 1.0 } else { model.x_of(b) };
    model.x_of(t) * (1.0 + r) + xb * r
}

enum Local {
    Interior(f64),
    Lower,
    Upper,
}

fn psi(model: &DensityModel, a: f64, t: f64, b: f64) -> f64 {
    let v = stationarity(model, a, t, b);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn root(model: &DensityModel, a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    brent_root(|t| psi(model, a, t, b), lo, hi, 1e-300, 4.0 * f64::EPSILON)
        .unwrap_or(0.5 * (lo + hi))
}

/// Nearest local minimum of the coordinate objective to `cur`.
fn local_search(model: &DensityModel, a: f64, cur: f64, b: f64) -> Local {
    let lo_end = a + (a.abs() * 1e-14).max(1e-300);
    let hi_end = if b.is_infinite() {
        COMPACT_U_CAP
    } else {
        b - (b.abs() * 1e-14).max(1e-300)
    };
    if !(hi_end > lo_end) {
        return Local::Lower;
    }
    let cur = if cur > lo_end && cur < hi_end {
        cur
    } else {
        lo_end + 0.5 * (hi_end - lo_end)
    };
    let f_cur = psi(model, a, cur, b);
    let mut step = ((cur - a) * 1e-4).max(cur.abs() * 1e-12).max(1e-300);
    if f_cur < 0.0 {
        let mut t_prev = cur;
        loop {
            let t = (t_prev + step).min(hi_end);
            if psi(model, a, t, b) >= 0.0 {
                return Local::Interior(root(model, a, b, t_prev, t));
            }
            if t >= hi_end {
                return Local::Upper;
            }
            t_prev = t;
            step *= 2.0;
        }
    } else if f_cur > 0.0 {
        let mut t_prev = cur;
        loop {
            let t = (t_prev - step).max(lo_end);
            if psi(model, a, t, b) < 0.0 {
                return Local::Interior(root(model, a, b, t, t_prev));
            }
            if t <= lo_end {
                return Local::Lower;
            }
            t_prev = t;
            step *= 2.0;
        }
    } else {
        Local::Interior(cur)
    }
}

/// All local minima on a geometric grid over `(a, b)`.
fn global_minima(model: &DensityModel, a: f64, b: f64) -> Vec<f64> {
    let lo_end = a + (a.abs() * 1e-14).max(1e-300);
    let hi_end = if b.is_infinite() {
        COMPACT_U_CAP
    } else {
        b - (b.abs() * 1e-14).max(1e-300)
    };
    let width = hi_end - a;
    let mut out = Vec::new();
    let mut t_prev = lo_end;
    let mut f_prev = psi(model, a, t_prev, b);
    let points = 400;
    let ratio = (width / (lo_end - a)).powf(1.0 / points as f64);
    let mut d = lo_end - a;
    for _ in 0..points {
        d *= ratio;
        let t = (a + d).min(hi_end);
        let f = psi(model, a, t, b);
        if f_prev < 0.0 && f >= 0.0 {
            out.push(root(model, a, b, t_prev, t));
        }
        t_prev = t;
        f_prev = f;
    }
    out
}

fn coordinate_min(model: &DensityModel, a: f64, cur: f64, b: f64, terminating: bool) -> f64 {
    let lower = a + (a.abs() * 1e-14).max(1e-300);
    let upper = if b.is_infinite() {
        COMPACT_U_CAP
    } else {
        b - (b.abs() * 1e-14).max(1e-300)
    };
    match local_search(model, a, cur, b) {
        Local::Interior(t) => t,
        edge => {
            let interior = global_minima(model, a, b);
            let edge_point = match edge {
                Local::Lower => lower,
                _ => upper,
            };
            let obj = |t: f64| coordinate_objective(model, a, t, b);
            let best_interior = interior
                .into_iter()
                .min_by(|x, y| obj(*x).total_cmp(&obj(*y)));
            match best_interior {
                Some(t) if !terminating || obj(t) <= obj(edge_point) => t,
                _ => edge_point,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::log_recurrence_residual;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_single_leg() {
        let m = DensityModel::uniform();
        let run = optimize_horizon(&m, 1, 2, &SolverConfig::default()).unwrap();
        assert_eq!(run.sequence.points(), vec![0.0, 1.0]);
        assert!(run.sequence.terminated());
        assert_relative_eq!(run.objective, 1.0);
    }

    #[test]
    fn triangular_ten_legs() {
        let m = DensityModel::triangular();
        let seq = finite_horizon_optimize(&m, 10, &SolverConfig::default()).unwrap();
        assert_eq!(seq.len(), 11);
        assert!(seq.terminated());
        for k in 1..10 {
            assert!(seq.coords()[k].is_finite() && seq.residual(k) > 0.0);
        }
        assert_relative_eq!(seq.point(1), 0.656_092_975_284_721_5, max_relative = 1e-10);
    }

    #[test]
    fn exponential_horizons_agree() {
        let m = DensityModel::exponential(1.0).unwrap();
        let cfg = SolverConfig::default();
        let a = finite_horizon_optimize(&m, 40, &cfg).unwrap();
        let b = finite_horizon_optimize(&m, 60, &cfg).unwrap();
        assert!((a.point(1) - b.point(1)).abs() <= 1e-5);
        assert_relative_eq!(b.point(1), 1.353_185_306_669_957, max_relative = 1e-10);
        for r in log_recurrence_residual(&m, &b) {
            assert!(r.abs() < 1e-8);
        }
    }
}
