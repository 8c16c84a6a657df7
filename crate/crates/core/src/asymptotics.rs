//! Leading-order asymptotic laws for optimal turning points, evaluated as
//! computable predictions.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::density::{DensityError, DensityModel, Family, SuperLogKind, TailClass};
use crate::numerics::{self, brent_root, NumericsError};
use crate::solver::TurningSequence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("law does not apply to tail class {0}")]
    NotApplicable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no closed form is available for {0}")]
    NotAvailable(String),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Limit of the increments `Delta_k = x_k - x_{k-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "limit", content = "value", rename_all = "kebab-case")]
pub enum IncrementLimit {
    Infinite,
    Zero,
    /// `Delta_k -> 1/c`.
    Finite(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "law", content = "family", rename_all = "kebab-case")]
pub enum Law {
    IncrementFormula,
    IndexIntegral,
    ClosedForm(String),
    ParetoRate,
    CompactDoubleExp,
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::IncrementFormula => "increment",
            Law::IndexIntegral => "index-integral",
            Law::ClosedForm(_) => "closed-form",
            Law::ParetoRate => "pareto-rate",
            Law::CompactDoubleExp => "compact-double-exp",
        }
    }
}

/// Which per-k quantity the values of a prediction describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// `Delta_k`.
    Increment,
    /// `x_k`.
    Position,
    /// `1 - x_k`.
    Residual,
    /// `L_k = -ln(1 - x_k)`.
    LogResidual,
    /// `x_{k+1} / x_k`.
    PositionRatio,
    /// `L_{k+1} / L_k`.
    LogResidualRatio,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Increment => "increment",
            Quantity::Position => "position",
            Quantity::Residual => "residual",
            Quantity::LogResidual => "log-residual",
            Quantity::PositionRatio => "position-ratio",
            Quantity::LogResidualRatio => "log-residual-ratio",
        }
    }

    /// Value of this quantity at index `k` of a sequence, when defined.
    pub fn measure(&self, seq: &TurningSequence, k: usize) -> Option<f64> {
        let n = seq.len();
        let finite = |j: usize| j < n && seq.coords()[j].is_finite();
        match self {
            Quantity::Increment => (k >= 1 && finite(k)).then(|| seq.increment(k)),
            Quantity::Position => finite(k).then(|| seq.point(k)),
            Quantity::Residual => finite(k).then(|| seq.residual(k)),
            Quantity::LogResidual => finite(k).then(|| seq.coords()[k]),
            Quantity::PositionRatio => {
                (k >= 1 && finite(k + 1)).then(|| seq.point(k + 1) / seq.point(k))
            }
            Quantity::LogResidualRatio => {
                (k >= 1 && finite(k + 1)).then(|| seq.coords()[k + 1] / seq.coords()[k])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticPrediction {
    pub model: String,
    pub law: Law,
    pub quantity: Quantity,
    pub values: BTreeMap<usize, f64>,
    pub fitted_constants: Option<BTreeMap<String, f64>>,
}

/// Limit of the increments for a half-line tail class.
pub fn increment_trichotomy(class: &TailClass) -> Result<IncrementLimit, AsymptoticsError> {
    match class {
        TailClass::SubLogIncrements | TailClass::PowerLawTail { .. } => {
            Ok(IncrementLimit::Infinite)
        }
        TailClass::SuperLog { .. } => Ok(IncrementLimit::Zero),
        TailClass::LogBoundary { c } => {
            if *c > 0.0 {
                Ok(IncrementLimit::Finite(1.0 / c))
            } else {
                Err(AsymptoticsError::Domain(format!(
                    "c must be positive, got {c}"
                )))
            }
        }
        other => Err(AsymptoticsError::NotApplicable(other.name())),
    }
}

/// Leading-order increment `log(2 x h(x)) / h(x)`.
pub fn predict_increment(model: &DensityModel, x: f64) -> Result<f64, AsymptoticsError> {
    model.hazard(x)?;
    predict_increment_u(model, model.u_of(x))
}

/// [`predict_increment`] at chart coordinate `u`, safe where `h` overflows.
pub fn predict_increment_u(model: &DensityModel, u: f64) -> Result<f64, AsymptoticsError> {
    let ln_h = model.ln_hazard_u(u);
    let arg = std::f64::consts::LN_2 + model.x_of(u).ln() + ln_h;
    if !(arg > 0.0) {
        return Err(AsymptoticsError::Domain(format!(
            "2 x h(x) = {} <= 1 at x = {}",
            arg.exp(),
            model.x_of(u)
        )));
    }
    Ok(arg * (-ln_h).exp())
}

/// `ln(x h(x))` at chart coordinate `u`.
fn ln_xh(model: &DensityModel, u: f64) -> f64 {
    model.x_of(u).ln() + model.ln_hazard_u(u)
}

/// Default lower limit of the index integral: the point where `x h(x) = e`.
pub fn default_x_low(model: &DensityModel) -> Result<f64, AsymptoticsError> {
    let f = |u: f64| ln_xh(model, u) - 1.0;
    let mut lo = 1e-8 * model.scale();
    let mut hi = lo;
    let mut found = false;
    for _ in 0..2000 {
        hi *= 1.5;
        if model.is_compact() && hi > 700.0 {
            break;
        }
        if !hi.is_finite() {
            break;
        }
        if f(hi) > 0.0 {
            found = true;
            break;
        }
        lo = hi;
    }
    if !found {
        return Err(AsymptoticsError::Domain(format!(
            "x h(x) never reaches e for {}",
            model.spec_string()
        )));
    }
    let u =
        brent_root(f, lo, hi, 0.0, 1e-14)
            .or_else(|e| if f(lo) >= 0.0 { Ok(lo) } else { Err(e) })?;
    Ok(model.x_of(u))
}

fn index_integral_u(model: &DensityModel, u: f64, u_low: f64) -> Result<f64, AsymptoticsError> {
    if ln_xh(model, u_low) <= 0.0 {
        return Err(AsymptoticsError::Domain(format!(
            "x h(x) <= 1 at the lower limit x_low = {}; choose a larger x_low",
            model.x_of(u_low)
        )));
    }
    let integrand = |v: f64| {
        let l = ln_xh(model, v);
        if l <= 0.0 {
            f64::NAN
        } else {
            (model.ln_hazard_u(v)).exp() * model.dx_du(v) / l
        }
    };
    numerics::integrate(integrand, u_low, u, 1e-10, 1e-300).map_err(|e| match e {
        NumericsError::NonFiniteIntegrand { x } => AsymptoticsError::Domain(format!(
            "integrand h/log(x h) is singular at x = {}; choose a larger x_low",
            model.x_of(x)
        )),
        other => other.into(),
    })
}

/// `F(x) = int_{x_low}^{x} h(t) / log(t h(t)) dt`, the asymptotic index of
/// the turning point located at `x`.
pub fn index_integral(model: &DensityModel, x: f64, x_low: f64) -> Result<f64, AsymptoticsError> {
    model.survival(x)?;
    index_integral_u(model, model.u_of(x), model.u_of(x_low))
}

/// Inverse of [`index_integral`]: the position with asymptotic index `k`.
pub fn invert_index(model: &DensityModel, k: f64, x_low: f64) -> Result<f64, AsymptoticsError> {
    if !(k > 0.0) {
        return Err(AsymptoticsError::Domain(format!(
            "k must be positive, got {k}"
        )));
    }
    let u_low = model.u_of(x_low);
    let f = |u: f64| index_integral_u(model, u, u_low).map(|v| v - k);
    let mut step = u_low.abs().max(1e-3 * model.scale()).max(1e-6);
    let mut lo = u_low;
    let mut hi = u_low + step;
    loop {
        let v = f(hi)?;
        if v >= 0.0 {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = u_low + step;
        if !hi.is_finite() || (model.is_compact() && hi > 740.0) {
            return Err(AsymptoticsError::Domain(format!("index {k} not reached")));
        }
    }
    let mut err = None;
    let u = brent_root(
        |u| match f(u) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                f64::NAN
            }
        },
        lo,
        hi,
        0.0,
        1e-14,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(model.x_of(u?))
}

/// Fitted shift `delta` such that `F(x_k) ~ k + delta` over `ks`.
pub fn fit_index_offset(
    model: &DensityModel,
    seq: &TurningSequence,
    ks: &[usize],
    x_low: f64,
) -> Result<f64, AsymptoticsError> {
    let u_low = model.u_of(x_low);
    let mut sum = 0.0;
    for &k in ks {
        sum += index_integral_u(model, seq.coords()[k], u_low)? - k as f64;
    }
    Ok(sum / ks.len().max(1) as f64)
}

/// Closed-form leading-order position `x_k` for the families that have one.
pub fn closed_form_xk(model: &DensityModel, k: usize) -> Result<f64, AsymptoticsError> {
    if k < 2 {
        return Err(AsymptoticsError::Domain("closed forms need k >= 2".into()));
    }
    let kf = k as f64;
    let lk = kf.ln();
    match model.family() {
        Family::Exponential { rate } => Ok(kf * lk / rate),
        Family::StretchedExp { a, b } => Ok(((1.0 + b) / a * kf * lk).powf(1.0 / (1.0 + b))),
        Family::Lognormal { sigma } => {
            // h ~ a log x / x with a = 1 / sigma^2
            let a = 1.0 / (sigma * sigma);
            Ok((kf * lk / a).sqrt().exp())
        }
        Family::Gumbel { a } => Ok(lk / a),
        Family::CompactFast { .. } => Ok(1.0 - closed_form_residual(model, k)?),
        _ => Err(AsymptoticsError::NotAvailable(model.spec_string())),
    }
}

/// `1 - x_k ~ ((1+b) k / a)^(-1/b)` for the fast-decaying compact family.
pub fn closed_form_residual(model: &DensityModel, k: usize) -> Result<f64, AsymptoticsError> {
    match model.family() {
        Family::CompactFast { a, b } if k >= 2 => Ok(((1.0 + b) * k as f64 / a).powf(-1.0 / b)),
        Family::CompactFast { .. } => {
            Err(AsymptoticsError::Domain("closed forms need k >= 2".into()))
        }
        _ => Err(AsymptoticsError::NotAvailable(model.spec_string())),
    }
}

/// `F(r) = (r^a + 1)/a - 1 - r`, whose root above 1 is the growth ratio of
/// turning points under a power-law tail `h ~ a/x`.
pub fn pareto_fixed_point(a: f64, r: f64) -> f64 {
    (r.powf(a) + 1.0) / a - 1.0 - r
}

/// Unique root `r > 1` of [`pareto_fixed_point`].
pub fn pareto_rate(a: f64) -> Result<f64, AsymptoticsError> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(AsymptoticsError::Domain(format!(
            "tail index a = {a} gives an infinite mean; need a > 1"
        )));
    }
    let f = |r: f64| pareto_fixed_point(a, r);
    let df = |r: f64| r.powf(a - 1.0) - 1.0;
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(r);
        if v == 0.0 {
            return Ok(r);
        }
        if v < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let d = df(r);
        let newton = r - v / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - r).abs() <= 4.0 * f64::EPSILON * r || hi - lo <= 4.0 * f64::EPSILON * r {
            r = next;
            break;
        }
        r = next;
    }
    Ok(r)
}

/// Growth factor `c / (c - 1)` of `L_k = -log(1 - x_k)` for `h ~ c/(1-x)`.
pub fn compact_growth_factor(c: f64) -> Result<f64, AsymptoticsError> {
    if !(c > 1.0) {
        return Err(AsymptoticsError::Domain(format!(
            "c = {c} <= 1 is the boundary case h ~ 1/(1-x), which has no double-exponential law"
        )));
    }
    Ok(c / (c - 1.0))
}

/// `1 - x_k ~ 2c exp(-A (c/(c-1))^k)`.
pub fn compact_residual_law(c: f64, k: usize, a_const: f64) -> Result<f64, AsymptoticsError> {
    let q = compact_growth_factor(c)?;
    if !(a_const > 0.0) {
        return Err(AsymptoticsError::Domain(format!(
            "A must be positive, got {a_const}"
        )));
    }
    Ok(2.0 * c * (-a_const * q.powi(k as i32)).exp())
}

/// Least-squares estimate of `A` from `L_k ~ A q^k + const`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoubleExpFit {
    pub a: f64,
    pub intercept: f64,
    pub a_first_half: f64,
    pub a_second_half: f64,
    /// Largest relative deviation of a half-window refit from `a`.
    pub stability: f64,
    pub window: (usize, usize),
}

/// Fits `A` on the last third of the finite `L_k` (`k >= 1`), with refits on
/// the two halves of that window as a stability diagnostic.
pub fn fit_double_exp(seq: &TurningSequence, c: f64) -> Result<DoubleExpFit, AsymptoticsError> {
    let q = compact_growth_factor(c)?;
    let finite: Vec<usize> = (1..seq.len())
        .filter(|&k| seq.coords()[k].is_finite())
        .collect();
    if finite.len() < 6 {
        return Err(AsymptoticsError::Domain(
            "need at least 6 interior points to fit A".into(),
        ));
    }
    let last = *finite.last().expect("non-empty");
    let first = finite[finite.len() - finite.len().div_ceil(3).max(4)];
    let fit = |lo: usize, hi: usize| -> Result<(f64, f64), AsymptoticsError> {
        let xs: Vec<f64> = (lo..=hi).map(|k| q.powi(k as i32)).collect();
        let ys: Vec<f64> = (lo..=hi).map(|k| seq.coords()[k]).collect();
        numerics::linear_fit(&xs, &ys)
            .ok_or_else(|| AsymptoticsError::Domain("degenerate regression window".into()))
    };
    let (intercept, a) = fit(first, last)?;
    let mid = (first + last) / 2;
    let (_, a1) = fit(first, mid.max(first + 1))?;
    let (_, a2) = fit(mid.min(last - 1), last)?;
    let stability = ((a1 - a).abs() / a).max((a2 - a).abs() / a);
    Ok(DoubleExpFit {
        a,
        intercept,
        a_first_half: a1,
        a_second_half: a2,
        stability,
        window: (first, last),
    })
}

/// Parameter `c` of `h ~ c/(1-x)`, or `a` of `h ~ a/x`, when the class has one.
pub fn class_constant(class: &TailClass) -> Option<f64> {
    match class {
        TailClass::CompactPowerLaw { c } | TailClass::LogBoundary { c } => Some(*c),
        TailClass::PowerLawTail { a } => Some(*a),
        TailClass::CompactRv { rho } => Some(*rho),
        TailClass::SuperLog {
            kind: SuperLogKind::RegularlyVarying { rho },
        } => Some(*rho),
        _ => None,
    }
}

/// Builds a prediction for `ks` without reference to any computed sequence.
pub fn predict(
    model: &DensityModel,
    law: &Law,
    ks: &[usize],
) -> Result<AsymptoticPrediction, AsymptoticsError> {
    let class = model.classify_tail()?;
    let mut values = BTreeMap::new();
    let mut fitted = None;
    let quantity = match law {
        Law::IncrementFormula => {
            if class.is_compact() {
                return Err(AsymptoticsError::NotApplicable(class.name()));
            }
            let x_low = default_x_low(model)?;
            for &k in ks {
                let x = invert_index(model, k as f64, x_low)?;
                values.insert(k, predict_increment(model, x)?);
            }
            fitted = Some(BTreeMap::from([("x_low".to_string(), x_low)]));
            Quantity::Increment
        }
        Law::IndexIntegral => {
            let x_low = default_x_low(model)?;
            for &k in ks {
                values.insert(k, invert_index(model, k as f64, x_low)?);
            }
            fitted = Some(BTreeMap::from([("x_low".to_string(), x_low)]));
            Quantity::Position
        }
        Law::ClosedForm(_) => {
            let compact = model.is_compact();
            for &k in ks {
                let v = if compact {
                    closed_form_residual(model, k)?
                } else {
                    closed_form_xk(model, k)?
                };
                values.insert(k, v);
            }
            if compact {
                Quantity::Residual
            } else {
                Quantity::Position
            }
        }
        Law::ParetoRate => {
            let TailClass::PowerLawTail { a } = class else {
                return Err(AsymptoticsError::NotApplicable(class.name()));
            };
            let r = pareto_rate(a)?;
            for &k in ks {
                values.insert(k, r);
            }
            fitted = Some(BTreeMap::from([("r".to_string(), r)]));
            Quantity::PositionRatio
        }
        Law::CompactDoubleExp => {
            let TailClass::CompactPowerLaw { c } = class else {
                return Err(AsymptoticsError::NotApplicable(class.name()));
            };
            let q = compact_growth_factor(c)?;
            for &k in ks {
                values.insert(k, q);
            }
            Quantity::LogResidualRatio
        }
    };
    Ok(AsymptoticPrediction {
        model: model.spec_string(),
        law: law.clone(),
        quantity,
        values,
        fitted_constants: fitted,
    })
}

/// Law-specific prediction aligned with a computed sequence: increments at
/// the computed positions, index-integral positions with a fitted k-offset,
/// and double-exponential residuals with a fitted `A`.
pub fn predict_for_sequence(
    model: &DensityModel,
    law: &Law,
    seq: &TurningSequence,
    ks: &[usize],
) -> Result<AsymptoticPrediction, AsymptoticsError> {
    let class = model.classify_tail()?;
    match law {
        Law::IncrementFormula => {
            let mut values = BTreeMap::new();
            for &k in ks {
                values.insert(k, predict_increment_u(model, seq.coords()[k])?);
            }
            Ok(AsymptoticPrediction {
                model: model.spec_string(),
                law: law.clone(),
                quantity: Quantity::Increment,
                values,
                fitted_constants: None,
            })
        }
        Law::IndexIntegral => {
            let x_low = default_x_low(model)?;
            let offset = fit_index_offset(model, seq, ks, x_low)?;
            let mut values = BTreeMap::new();
            for &k in ks {
                values.insert(k, invert_index(model, k as f64 + offset, x_low)?);
            }
            Ok(AsymptoticPrediction {
                model: model.spec_string(),
                law: law.clone(),
                quantity: Quantity::Position,
                values,
                fitted_constants: Some(BTreeMap::from([
                    ("x_low".to_string(), x_low),
                    ("k_offset".to_string(), offset),
                ])),
            })
        }
        Law::CompactDoubleExp => {
            let mut p = predict(model, law, ks)?;
            if let TailClass::CompactPowerLaw { c } = class {
                if let Ok(fit) = fit_double_exp(seq, c) {
                    p.fitted_constants = Some(BTreeMap::from([
                        ("A".to_string(), fit.a),
                        ("A_first_half".to_string(), fit.a_first_half),
                        ("A_second_half".to_string(), fit.a_second_half),
                        ("A_stability".to_string(), fit.stability),
                    ]));
                }
            }
            Ok(p)
        }
        _ => predict(model, law, ks),
    }
}

/// Default law for a tail class.
pub fn default_law(class: &TailClass) -> Law {
    match class {
        TailClass::PowerLawTail { .. } => Law::ParetoRate,
        TailClass::CompactPowerLaw { .. } => Law::CompactDoubleExp,
        TailClass::CompactRv { .. } => Law::ClosedForm("compactfast".into()),
        _ => Law::IncrementFormula,
    }
}
