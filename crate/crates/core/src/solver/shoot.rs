//! Forward shooting from a guessed `x_1`.

use serde::Serialize;

use super::{step_chart, SolverConfig, SolverError, StepError, TurningSequence};
use crate::density::{DensityModel, Support, TailClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "k", rename_all = "kebab-case")]
pub enum ShootOutcome {
    SurvivedHorizon,
    /// `x_{k+1} <= x_k`: the guess was too small.
    MonotonicityViolated(usize),
    /// `x_{k+1}` overflowed: the guess was too large.
    NumericUnderflow(usize),
    /// `x_{k+1}` left the unit interval: the guess was too large.
    BoundaryOvershoot(usize),
}

impl ShootOutcome {
    fn mode(&self) -> Mode {
        match self {
            ShootOutcome::SurvivedHorizon => Mode::Survived,
            ShootOutcome::MonotonicityViolated(_) => Mode::Under,
            ShootOutcome::NumericUnderflow(_) | ShootOutcome::BoundaryOvershoot(_) => Mode::Over,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShootOutcome::SurvivedHorizon => "survived-horizon",
            ShootOutcome::MonotonicityViolated(_) => "monotonicity-violated",
            ShootOutcome::NumericUnderflow(_) => "numeric-underflow",
            ShootOutcome::BoundaryOvershoot(_) => "boundary-overshoot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Under,
    Over,
    Survived,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootResult {
    pub outcome: ShootOutcome,
    /// Valid prefix `x_0..x_k` up to the failure.
    pub sequence: TurningSequence,
    /// The offending next point, when one was computed.
    pub rejected: Option<f64>,
}

/// Iterates the recurrence from `(0, x1)` until `k_max` points beyond the
/// origin exist, the boundary is reached, or a step fails.
pub fn shoot_forward(model: &DensityModel, x1: f64, k_max: usize) -> ShootResult {
    shoot_chart(model, model.u_of(x1), k_max)
}

fn shoot_chart(model: &DensityModel, u1: f64, k_max: usize) -> ShootResult {
    let terminating = matches!(model.classify_tail(), Ok(TailClass::CompactTerminating));
    let mut u = vec![0.0, u1];
    let make = |u: Vec<f64>, terminated: bool| {
        TurningSequence::from_coords(model, u, terminated)
            .expect("shooting keeps points increasing")
    };
    if u1.is_infinite() {
        return ShootResult {
            outcome: ShootOutcome::SurvivedHorizon,
            sequence: make(u, true),
            rejected: None,
        };
    }
    while u.len() <= k_max {
        let k = u.len() - 1;
        match step_chart(model, u[k - 1], u[k]) {
            Ok(next) => u.push(next),
            Err(StepError::MonotonicityViolation { x_next }) => {
                return ShootResult {
                    outcome: ShootOutcome::MonotonicityViolated(k),
                    sequence: make(u, false),
                    rejected: Some(x_next),
                }
            }
            Err(StepError::BoundaryOvershoot) if terminating => {
                u.push(f64::INFINITY);
                return ShootResult {
                    outcome: ShootOutcome::SurvivedHorizon,
                    sequence: make(u, true),
                    rejected: None,
                };
            }
            Err(StepError::BoundaryOvershoot) => {
                return ShootResult {
                    outcome: ShootOutcome::BoundaryOvershoot(k),
                    sequence: make(u, false),
                    rejected: None,
                }
            }
            Err(_) => {
                return ShootResult {
                    outcome: ShootOutcome::NumericUnderflow(k),
                    sequence: make(u, false),
                    rejected: None,
                }
            }
        }
    }
    ShootResult {
        outcome: ShootOutcome::SurvivedHorizon,
        sequence: make(u, false),
        rejected: None,
    }
}

const GRID_POINTS: usize = 400;

/// Bisection on the shooting outcome for the `x_1` separating undershoot
/// (monotonicity violation) from overshoot (blow-up or boundary crossing).
///
/// Without an explicit bracket, a log-spaced scan picks the first
/// undershoot-to-overshoot transition in increasing `x_1`.
pub fn find_x1(model: &DensityModel, config: &SolverConfig) -> Result<f64, SolverError> {
    config.validate()?;
    if matches!(model.classify_tail(), Ok(TailClass::CompactTerminating)) {
        let seq = super::solve(model, config)?;
        return Ok(seq.point(1));
    }
    let horizon = config.k_max;
    let mode = |u: f64| shoot_chart(model, u, horizon).outcome.mode();
    let (mut lo, mut hi, lo_mode) = match config.x1_bracket {
        Some((a, b)) => {
            let (ua, ub) = (model.u_of(a), model.u_of(b));
            let (ma, mb) = (
                shoot_chart(model, ua, horizon).outcome,
                shoot_chart(model, ub, horizon).outcome,
            );
            if ma.mode() == Mode::Survived {
                return Ok(a);
            }
            if mb.mode() == Mode::Survived {
                return Ok(b);
            }
            if ma.mode() == mb.mode() {
                return Err(SolverError::Bracket {
                    lo: a,
                    hi: b,
                    lo_mode: ma.name().into(),
                    hi_mode: mb.name().into(),
                });
            }
            (ua, ub, ma.mode())
        }
        None => {
            let (g_lo, g_hi) = auto_range(model, config);
            let ratio = (g_hi / g_lo).powf(1.0 / (GRID_POINTS - 1) as f64);
            let mut prev_u = g_lo;
            let mut prev = mode(prev_u);
            let mut found = None;
            for i in 1..GRID_POINTS {
                let u = g_lo * ratio.powi(i as i32);
                let m = mode(u);
                if m == Mode::Survived {
                    found = Some((u, u, Mode::Survived));
                    break;
                }
                if prev == Mode::Under && m == Mode::Over {
                    found = Some((prev_u, u, Mode::Under));
                    break;
                }
                prev = m;
                prev_u = u;
            }
            match found {
                Some((u, _, Mode::Survived)) => return Ok(model.x_of(u)),
                Some(b) => b,
                None => {
                    return Err(SolverError::NoTransition {
                        lo: model.x_of(g_lo),
                        hi: model.x_of(g_hi),
                    })
                }
            }
        }
    };
    loop {
        let mid = 0.5 * (lo + hi);
        let width = model.gap(lo, hi);
        if mid <= lo || mid >= hi || width <= config.bisection_tol * model.x_of(mid) {
            return Ok(model.x_of(mid));
        }
        match mode(mid) {
            Mode::Survived => return Ok(model.x_of(mid)),
            m if m == lo_mode => lo = mid,
            _ => hi = mid,
        }
    }
}

/// Chart range scanned for the bracket: just above the origin (raised until
/// the density is representable) up to the quantile cap.
fn auto_range(model: &DensityModel, config: &SolverConfig) -> (f64, f64) {
    let mut lo = 1e-6 * model.scale();
    if model.is_compact() {
        lo = lo.min(1e-6);
    }
    while !(model.ln_hazard_u(lo) - model.cum_hazard_u(lo)).is_finite()
        || (model.ln_hazard_u(lo)) < -700.0
    {
        lo *= 2.0;
    }
    let hi = match model.support() {
        Support::HalfLine => model.inv_cum_hazard(-(1.0 - config.quantile_cap).ln()),
        Support::UnitInterval => 40.0,
    };
    (lo, hi.max(4.0 * lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_overshoot_blows_up() {
        let m = DensityModel::exponential(1.0).unwrap();
        let r = shoot_forward(&m, 10.0, 50);
        assert_eq!(r.outcome, ShootOutcome::NumericUnderflow(2));
        assert_eq!(r.sequence.len(), 3);
    }

    #[test]
    fn exponential_tiny_start_fails() {
        let m = DensityModel::exponential(1.0).unwrap();
        let r = shoot_forward(&m, 1e-6, 50);
        assert_ne!(r.outcome, ShootOutcome::SurvivedHorizon);
    }

    #[test]
    fn uniform_endpoint() {
        let m = DensityModel::uniform();
        let r = shoot_forward(&m, 1.0, 10);
        assert_eq!(r.outcome, ShootOutcome::SurvivedHorizon);
        assert!(r.sequence.terminated());
        assert_eq!(r.sequence.points(), vec![0.0, 1.0]);
        assert_eq!(find_x1(&m, &SolverConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn violation_index_matches_prefix() {
        let m = DensityModel::exponential(1.0).unwrap();
        let r = shoot_forward(&m, 1.0, 50);
        match r.outcome {
            ShootOutcome::MonotonicityViolated(k) => {
                assert_eq!(r.sequence.len(), k + 1);
                assert!(r.rejected.unwrap() <= r.sequence.point(k));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shooting_finds_reference_x1() {
        let m = DensityModel::exponential(1.0).unwrap();
        let x1 = find_x1(&m, &SolverConfig::with_k_max(40)).unwrap();
        assert_relative_eq!(x1, 1.353_185_306_669_957, max_relative = 1e-9);
    }

    #[test]
    fn explicit_bracket_must_straddle() {
        let m = DensityModel::exponential(1.0).unwrap();
        let mut cfg = SolverConfig::with_k_max(40);
        cfg.x1_bracket = Some((1.0, 1.1));
        assert!(matches!(
            find_x1(&m, &cfg),
            Err(SolverError::Bracket { .. })
        ));
        cfg.x1_bracket = Some((1.0, 2.0));
        assert_relative_eq!(
            find_x1(&m, &cfg).unwrap(),
            1.353_185_306_669_957,
            max_relative = 1e-9
        );
    }
}
