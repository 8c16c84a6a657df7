//! Optimal turning-point sequences.
//!
//! The optimality condition links three consecutive turning points,
//! `(x_k + x_{k+1}) p(x_k) = G(x_k) + G(x_{k-1})`. Forward iteration of it
//! from a guessed `x_1` (shooting) is numerically explosive, so long
//! sequences come from a finite-horizon minimisation of the objective
//! (`oracle`), and shooting is kept as an independent cross-check.

mod oracle;
mod shoot;

use serde::Serialize;
use thiserror::Error;

use crate::density::{DensityError, DensityModel, Support, TailClass};
use crate::numerics::softplus;

pub use oracle::{finite_horizon_optimize, optimize_horizon, OracleRun};
pub use shoot::{find_x1, shoot_forward, ShootOutcome, ShootResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("turning points are not strictly increasing at k = {0}")]
    NotIncreasing(usize),
    #[error(
        "x1 bracket [{lo}, {hi}] does not straddle distinct failure modes ({lo_mode} / {hi_mode})"
    )]
    Bracket {
        lo: f64,
        hi: f64,
        lo_mode: String,
        hi_mode: String,
    },
    #[error("no undershoot/overshoot transition found for x1 in [{lo}, {hi}]; use the finite-horizon oracle instead")]
    NoTransition { lo: f64, hi: f64 },
    #[error("coordinate descent did not converge after {sweeps} sweeps (last decrease {last_decrease:e}); last iterate kept")]
    NotConverged {
        sweeps: usize,
        last_decrease: f64,
        last: Box<TurningSequence>,
    },
}

/// Failure signals of a single forward step.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum StepError {
    #[error("next point {x_next} does not exceed the current point")]
    MonotonicityViolation { x_next: f64 },
    #[error("next point is not representable (density underflow)")]
    Underflow,
    #[error("next point would lie beyond the boundary of the support")]
    BoundaryOvershoot,
    #[error("the boundary has already been reached")]
    Terminated,
    #[error("positions must satisfy 0 <= x_prev < x_cur inside the support")]
    Domain,
}

/// Strictly increasing turning points `0 = x_0 < x_1 < ...`.
///
/// Points are stored in chart coordinates (see [`DensityModel::u_of`]) so
/// that residuals `1 - x_k` far below machine epsilon survive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurningSequence {
    model: String,
    support: Support,
    coords: Vec<f64>,
    terminated: bool,
}

impl TurningSequence {
    pub fn from_coords(
        model: &DensityModel,
        coords: Vec<f64>,
        terminated: bool,
    ) -> Result<Self, SolverError> {
        if coords.first() != Some(&0.0) {
            return Err(SolverError::NotIncreasing(0));
        }
        for k in 1..coords.len() {
            if !(coords[k] > coords[k - 1]) {
                return Err(SolverError::NotIncreasing(k));
            }
        }
        if terminated && !(model.is_compact() && coords.last() == Some(&f64::INFINITY)) {
            return Err(SolverError::Config(
                "a terminated sequence must end on the boundary of [0, 1)".into(),
            ));
        }
        Ok(TurningSequence {
            model: model.spec_string(),
            support: model.support(),
            coords,
            terminated,
        })
    }

    pub fn from_points(
        model: &DensityModel,
        points: &[f64],
        terminated: bool,
    ) -> Result<Self, SolverError> {
        Self::from_coords(
            model,
            points.iter().map(|&x| model.u_of(x)).collect(),
            terminated,
        )
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, k: usize) -> f64 {
        match self.support {
            Support::HalfLine => self.coords[k],
            Support::UnitInterval => -(-self.coords[k]).exp_m1(),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// `1 - x_k` on the unit interval (exact even when it underflows `x_k`).
    pub fn residual(&self, k: usize) -> f64 {
        (-self.coords[k]).exp()
    }

    /// `Delta_k = x_k - x_{k-1}` for `k = 1..len`.
    pub fn increments(&self) -> Vec<f64> {
        (1..self.len()).map(|k| self.increment(k)).collect()
    }

    pub fn increment(&self, k: usize) -> f64 {
        let (u, v) = (self.coords[k - 1], self.coords[k]);
        match self.support {
            Support::HalfLine => v - u,
            Support::UnitInterval => {
                if v.is_infinite() {
                    (-u).exp()
                } else {
                    -(-u).exp() * (u - v).exp_m1()
                }
            }
        }
    }

    /// `x_{k+1} / x_k` for `k = 1..len-1`, index `k - 1`.
    pub fn ratios(&self) -> Vec<f64> {
        (1..self.len().saturating_sub(1))
            .map(|k| self.point(k + 1) / self.point(k))
            .collect()
    }

    /// Keeps the first `n` points.
    pub fn truncated(&self, n: usize) -> TurningSequence {
        let n = n.min(self.len());
        let terminated = self.terminated && n == self.len();
        TurningSequence {
            model: self.model.clone(),
            support: self.support,
            coords: self.coords[..n].to_vec(),
            terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub k_max: usize,
    pub x1_bracket: Option<(f64, f64)>,
    pub bisection_tol: f64,
    pub horizon_n: usize,
    pub quantile_cap: f64,
    pub max_sweeps: usize,
    /// Extra oracle points beyond `k_max` that absorb the truncation.
    pub margin: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k_max: 100,
            x1_bracket: None,
            bisection_tol: 1e-12,
            horizon_n: 40,
            quantile_cap: 1.0 - 1e-10,
            max_sweeps: 50_000,
            margin: 32,
        }
    }
}

impl SolverConfig {
    pub fn with_k_max(k_max: usize) -> Self {
        SolverConfig {
            k_max,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.into()));
        if self.k_max < 1 {
            return bad("k_max must be at least 1");
        }
        if let Some((lo, hi)) = self.x1_bracket {
            if !(lo < hi) || !(lo > 0.0) {
                return bad("x1_bracket must satisfy 0 < lo < hi");
            }
        }
        if !(self.bisection_tol > 0.0) {
            return bad("bisection_tol must be positive");
        }
        if self.horizon_n < 1 {
            return bad("horizon_n must be at least 1");
        }
        if !(self.quantile_cap > 0.9 && self.quantile_cap < 1.0) {
            return bad("quantile_cap must lie in (0.9, 1)");
        }
        if self.max_sweeps < 1 {
            return bad("max_sweeps must be at least 1");
        }
        Ok(())
    }
}

/// Log-space stationarity function of coordinate `u` between neighbours
/// `ua < u < ub`: `ln(1 + G(x_a)/G(x)) - ln((x + x_b) h(x))`.
///
/// It has the sign of the derivative of the objective in `x`; zero exactly
/// when the recurrence holds at `x`.
pub(crate) fn stationarity(model: &DensityModel, ua: f64, u: f64, ub: f64) -> f64 {
    softplus(model.hazard_integral(ua, u)) - model.ln_sum_positions(u, ub) - model.ln_hazard_u(u)
}

/// Forward step in chart coordinates, returning `u_{k+1}`.
pub(crate) fn step_chart(model: &DensityModel, u_prev: f64, u_cur: f64) -> Result<f64, StepError> {
    if u_cur.is_infinite() {
        return Err(StepError::Terminated);
    }
    let ln_s = softplus(model.hazard_integral(u_prev, u_cur)) - model.ln_hazard_u(u_cur);
    if ln_s.is_nan() {
        return Err(StepError::Underflow);
    }
    match model.support() {
        Support::HalfLine => {
            if ln_s > 709.0 {
                return Err(StepError::Underflow);
            }
            let x_next = ln_s.exp() - u_cur;
            if x_next <= u_cur {
                Err(StepError::MonotonicityViolation { x_next })
            } else {
                Ok(x_next)
            }
        }
        Support::UnitInterval => {
            let eps_cur = (-u_cur).exp();
            // 1 - x_next = 2 - S - eps_cur with S = x_cur + x_next
            let eps_next = -2.0 * (ln_s - std::f64::consts::LN_2).exp_m1() - eps_cur;
            if eps_next <= 0.0 {
                Err(StepError::BoundaryOvershoot)
            } else if eps_next >= eps_cur {
                Err(StepError::MonotonicityViolation {
                    x_next: 1.0 - eps_next,
                })
            } else {
                Ok(-eps_next.ln())
            }
        }
    }
}

/// One step of the recurrence: `x_next = (G(x_cur) + G(x_prev)) / p(x_cur) - x_cur`,
/// evaluated in log space.
pub fn recurrence_step(model: &DensityModel, x_prev: f64, x_cur: f64) -> Result<f64, StepError> {
    if model.is_compact() && x_cur >= 1.0 {
        return Err(StepError::Terminated);
    }
    if !(x_prev >= 0.0 && x_prev < x_cur) || model.survival(x_cur).is_err() {
        return Err(StepError::Domain);
    }
    let u = step_chart(model, model.u_of(x_prev), model.u_of(x_cur))?;
    Ok(model.x_of(u))
}

/// `(x_k + x_{k+1}) p(x_k) - G(x_k) - G(x_{k-1})` for every interior `k`
/// (index `k - 1`).
pub fn recurrence_residual(model: &DensityModel, seq: &TurningSequence) -> Vec<f64> {
    let u = seq.coords();
    (1..u.len().saturating_sub(1))
        .map(|k| {
            let ln_p = model.ln_hazard_u(u[k]) - model.cum_hazard_u(u[k]);
            let lhs = (model.ln_sum_positions(u[k], u[k + 1]) + ln_p).exp();
            let g = |v: f64| (-model.cum_hazard_u(v)).exp();
            lhs - g(u[k]) - g(u[k - 1])
        })
        .collect()
}

/// Scale-free residuals `ln[(x_k + x_{k+1}) h(x_k)] - ln[1 + G(x_{k-1})/G(x_k)]`,
/// meaningful even where the density has underflowed.
pub fn log_recurrence_residual(model: &DensityModel, seq: &TurningSequence) -> Vec<f64> {
    let u = seq.coords();
    (1..u.len().saturating_sub(1))
        .map(|k| -stationarity(model, u[k - 1], u[k], u[k + 1]))
        .collect()
}

/// Shooting cross-check attached to a solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct X1Check {
    pub shooting_x1: Option<f64>,
    pub oracle_x1: f64,
    pub relative_difference: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub sequence: TurningSequence,
    pub objective: f64,
    pub sweeps: usize,
    pub x1_check: Option<X1Check>,
}

/// Number of boundary-terminated strategies tried for terminating models.
const MAX_TERMINAL_LEGS: usize = 8;

/// Optimal turning points up to `k_max` (or up to the boundary when the
/// optimum terminates).
pub fn solve(model: &DensityModel, config: &SolverConfig) -> Result<TurningSequence, SolverError> {
    solve_detailed(model, config).map(|s| s.sequence)
}

pub fn solve_detailed(
    model: &DensityModel,
    config: &SolverConfig,
) -> Result<Solution, SolverError> {
    config.validate()?;
    let class = match model.classify_tail() {
        Ok(c) => Some(c),
        Err(DensityError::UnknownTailClass(_)) => None,
        Err(e) => return Err(e.into()),
    };
    if model.support() == Support::HalfLine {
        model.first_abs_moment()?;
    }
    if class == Some(TailClass::CompactTerminating) {
        return solve_terminating(model, config);
    }
    let n = config.k_max + config.margin;
    let run = optimize_horizon(model, n, config.k_max + 1, config)?;
    let sequence = run.sequence.truncated(config.k_max + 1);
    let oracle_x1 = sequence.point(1);
    let x1_check = {
        let shoot_cfg = SolverConfig {
            k_max: config.k_max.min(60),
            ..config.clone()
        };
        match find_x1(model, &shoot_cfg) {
            Ok(x1) => {
                let rel = (x1 - oracle_x1).abs() / oracle_x1;
                if rel > 1e-4 {
                    log::warn!(
                        "{}: shooting x1 = {x1} disagrees with oracle x1 = {oracle_x1} (relative {rel:e})",
                        model.spec_string()
                    );
                }
                X1Check {
                    shooting_x1: Some(x1),
                    oracle_x1,
                    relative_difference: Some(rel),
                    note: None,
                }
            }
            Err(e) => {
                log::warn!("{}: shooting cross-check failed: {e}", model.spec_string());
                X1Check {
                    shooting_x1: None,
                    oracle_x1,
                    relative_difference: None,
                    note: Some(e.to_string()),
                }
            }
        }
    };
    Ok(Solution {
        objective: crate::verify::objective_value(model, &sequence).value,
        sequence,
        sweeps: run.sweeps,
        x1_check: Some(x1_check),
    })
}

fn solve_terminating(model: &DensityModel, config: &SolverConfig) -> Result<Solution, SolverError> {
    let mut best: Option<(f64, OracleRun)> = None;
    for n in 1..=MAX_TERMINAL_LEGS {
        let run = optimize_horizon(model, n, n + 1, config)?;
        let seq = dedup_terminal(model, &run.sequence)?;
        let j = crate::verify::objective_value(model, &seq).value;
        let better = match &best {
            None => true,
            Some((bj, _)) => j < *bj - 1e-12 * bj.abs(),
        };
        if better {
            best = Some((
                j,
                OracleRun {
                    sequence: seq,
                    ..run
                },
            ));
        }
    }
    let (objective, run) = best.expect("at least one horizon");
    Ok(Solution {
        sequence: run.sequence,
        objective,
        sweeps: run.sweeps,
        x1_check: None,
    })
}

/// Drops interior points that collapsed onto a neighbour or onto the boundary.
fn dedup_terminal(
    model: &DensityModel,
    seq: &TurningSequence,
) -> Result<TurningSequence, SolverError> {
    let u = seq.coords();
    let mut kept = vec![0.0];
    for &v in &u[1..] {
        let last = *kept.last().expect("non-empty");
        let x_gap = model.gap(last, v);
        if x_gap > 1e-9 {
            if v.is_finite() && model.gap(v, f64::INFINITY) <= 1e-9 {
                continue;
            }
            kept.push(v);
        }
    }
    if kept.last() != Some(&f64::INFINITY) {
        kept.push(f64::INFINITY);
    }
    TurningSequence::from_coords(model, kept, true)
}
