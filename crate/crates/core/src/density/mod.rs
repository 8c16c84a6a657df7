//! Target densities on the folded half-line `[0, inf)` or the folded unit
//! interval `[0, 1)`.
//!
//! Every family is described through its cumulative hazard `H = -ln G`,
//! evaluated in a chart coordinate `u`: `u = x` on the half-line and
//! `u = -ln(1 - x)` on the unit interval. The chart keeps residuals `1 - x`
//! representable long after they fall below machine epsilon.

mod parse;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{self, NumericsError};

pub use parse::parse_spec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("x = {x} is outside the support {support}")]
    Domain { x: f64, support: Support },
    #[error("invalid parameter for {family}: {reason}")]
    InvalidParameter {
        family: &'static str,
        reason: String,
    },
    #[error("cannot parse distribution spec '{spec}': {reason}")]
    Parse { spec: String, reason: String },
    #[error("tail class of custom density '{0}' is unknown; declare it explicitly")]
    UnknownTailClass(String),
    #[error("density '{0}' has an infinite first moment, so no optimal search strategy exists")]
    InfiniteMean(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Folded support of a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    HalfLine,
    /// `[0, 1)` with the boundary at 1.
    UnitInterval,
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Support::HalfLine => write!(f, "[0, inf)"),
            Support::UnitInterval => write!(f, "[0, 1)"),
        }
    }
}

/// Sub-classification of hazards growing faster than `log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SuperLogKind {
    RegularlyVarying { rho: f64 },
    GammaClass,
}

/// Tail behaviour of the hazard, which selects the asymptotic law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum TailClass {
    /// `h = o(log x)`.
    SubLogIncrements,
    /// `h ~ c log x`.
    LogBoundary { c: f64 },
    /// `h = omega(log x)`.
    SuperLog { kind: SuperLogKind },
    /// `h ~ a / x` with `a > 1`.
    PowerLawTail { a: f64 },
    /// `h(1 - 1/t)` regularly varying in `t` with index `rho > 1`.
    CompactRv { rho: f64 },
    /// `h ~ c / (1 - x)` with `c > 1`.
    CompactPowerLaw { c: f64 },
    /// Density bounded away from zero at the boundary; the optimum reaches it.
    CompactTerminating,
}

impl TailClass {
    pub fn is_compact(&self) -> bool {
        matches!(
            self,
            TailClass::CompactRv { .. }
                | TailClass::CompactPowerLaw { .. }
                | TailClass::CompactTerminating
        )
    }

    pub fn name(&self) -> String {
        match self {
            TailClass::SubLogIncrements => "sub-log".into(),
            TailClass::LogBoundary { c } => format!("log-boundary(c={c})"),
            TailClass::SuperLog {
                kind: SuperLogKind::RegularlyVarying { rho },
            } => format!("super-log rv(rho={rho})"),
            TailClass::SuperLog {
                kind: SuperLogKind::GammaClass,
            } => "super-log gamma".into(),
            TailClass::PowerLawTail { a } => format!("power-law(a={a})"),
            TailClass::CompactRv { rho } => format!("compact rv(rho={rho})"),
            TailClass::CompactPowerLaw { c } => format!("compact power-law(c={c})"),
            TailClass::CompactTerminating => "compact terminating".into(),
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user supplied hazard `h(x)`, optionally with its closed-form
/// cumulative hazard `H(x) = int_0^x h`.
#[derive(Clone)]
pub struct CustomHazard {
    pub name: String,
    pub hazard: ScalarFn,
    pub cum_hazard: Option<ScalarFn>,
    pub class: Option<TailClass>,
}

impl fmt::Debug for CustomHazard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomHazard")
            .field("name", &self.name)
            .field("closed_form_cum_hazard", &self.cum_hazard.is_some())
            .field("class", &self.class)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Exponential {
        rate: f64,
    },
    /// Hazard `a x^b`.
    StretchedExp {
        a: f64,
        b: f64,
    },
    /// Shifted Pareto: `p(x) = a (1 + x)^-(a+1)`.
    Lomax {
        a: f64,
    },
    Lognormal {
        sigma: f64,
    },
    /// Hazard `e^(a x)`.
    Gumbel {
        a: f64,
    },
    /// `p(x) = 2 (1 - x)` on `[0, 1)`.
    Triangular,
    /// `G(x) = (1 - x)^c` on `[0, 1)`.
    CompactPower {
        c: f64,
    },
    /// Hazard `a / (1 - x)^(1+b)` on `[0, 1)`.
    CompactFast {
        a: f64,
        b: f64,
    },
    Uniform,
    Custom(CustomHazard),
}

/// An immutable target density.
#[derive(Debug, Clone)]
pub struct DensityModel {
    family: Family,
    support: Support,
}

fn positive(family: &'static str, name: &str, v: f64) -> Result<(), DensityError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DensityError::InvalidParameter {
            family,
            reason: format!("{name} must be positive and finite, got {v}"),
        })
    }
}

impl DensityModel {
    pub fn exponential(rate: f64) -> Result<Self, DensityError> {
        positive("exponential", "rate", rate)?;
        Ok(Self::half_line(Family::Exponential { rate }))
    }

    pub fn stretched_exp(a: f64, b: f64) -> Result<Self, DensityError> {
        positive("stretchedexp", "a", a)?;
        if !(b.is_finite() && b > -1.0) {
            return Err(DensityError::InvalidParameter {
                family: "stretchedexp",
                reason: format!("b must exceed -1, got {b}"),
            });
        }
        Ok(Self::half_line(Family::StretchedExp { a, b }))
    }

    pub fn lomax(a: f64) -> Result<Self, DensityError> {
        positive("lomax", "a", a)?;
        Ok(Self::half_line(Family::Lomax { a }))
    }

    pub fn lognormal(sigma: f64) -> Result<Self, DensityError> {
        positive("lognormal", "sigma", sigma)?;
        Ok(Self::half_line(Family::Lognormal { sigma }))
    }

    pub fn gumbel(a: f64) -> Result<Self, DensityError> {
        positive("gumbel", "a", a)?;
        Ok(Self::half_line(Family::Gumbel { a }))
    }

    pub fn triangular() -> Self {
        Self::unit(Family::Triangular)
    }

    pub fn compact_power(c: f64) -> Result<Self, DensityError> {
        positive("compactpower", "c", c)?;
        Ok(Self::unit(Family::CompactPower { c }))
    }

    pub fn compact_fast(a: f64, b: f64) -> Result<Self, DensityError> {
        positive("compactfast", "a", a)?;
        positive("compactfast", "b", b)?;
        Ok(Self::unit(Family::CompactFast { a, b }))
    }

    pub fn uniform() -> Self {
        Self::unit(Family::Uniform)
    }

    pub fn custom(hazard: CustomHazard, support: Support) -> Self {
        DensityModel {
            family: Family::Custom(hazard),
            support,
        }
    }

    /// Hazard `c log(e + x)` on the half-line, the boundary case of the
    /// increment trichotomy.
    pub fn log_boundary(c: f64) -> Result<Self, DensityError> {
        positive("logboundary", "c", c)?;
        let e = std::f64::consts::E;
        let hazard: ScalarFn = Arc::new(move |x: f64| c * (e + x).ln());
        let cum: ScalarFn = Arc::new(move |x: f64| c * ((e + x) * (e + x).ln() - e - x));
        Ok(Self::custom(
            CustomHazard {
                name: format!("logboundary:{c}"),
                hazard,
                cum_hazard: Some(cum),
                class: Some(TailClass::LogBoundary { c }),
            },
            Support::HalfLine,
        ))
    }

    fn half_line(family: Family) -> Self {
        DensityModel {
            family,
            support: Support::HalfLine,
        }
    }

    fn unit(family: Family) -> Self {
        DensityModel {
            family,
            support: Support::UnitInterval,
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn is_compact(&self) -> bool {
        self.support == Support::UnitInterval
    }

    /// Canonical spec string, re-parseable by [`parse_spec`].
    pub fn spec_string(&self) -> String {
        match &self.family {
            Family::Exponential { rate } => format!("exponential:{rate}"),
            Family::StretchedExp { a, b } => format!("stretchedexp:{a},{b}"),
            Family::Lomax { a } => format!("lomax:{a}"),
            Family::Lognormal { sigma } => format!("lognormal:{sigma}"),
            Family::Gumbel { a } => format!("gumbel:{a}"),
            Family::Triangular => "triangular".into(),
            Family::CompactPower { c } => format!("compactpower:{c}"),
            Family::CompactFast { a, b } => format!("compactfast:{a},{b}"),
            Family::Uniform => "uniform".into(),
            Family::Custom(c) => c.name.clone(),
        }
    }

    // ----- chart -----

    /// Chart coordinate of position `x`.
    pub fn u_of(&self, x: f64) -> f64 {
        match self.support {
            Support::HalfLine => x,
            Support::UnitInterval => {
                if x >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-x).ln_1p()
                }
            }
        }
    }

    /// Position at chart coordinate `u`.
    pub fn x_of(&self, u: f64) -> f64 {
        match self.support {
            Support::HalfLine => u,
            Support::UnitInterval => -(-u).exp_m1(),
        }
    }

    /// Derivative `dx/du`.
    pub fn dx_du(&self, u: f64) -> f64 {
        match self.support {
            Support::HalfLine => 1.0,
            Support::UnitInterval => (-u).exp(),
        }
    }

    /// `x(v) - x(u)` without cancellation on the unit interval.
    pub fn gap(&self, u: f64, v: f64) -> f64 {
        match self.support {
            Support::HalfLine => v - u,
            Support::UnitInterval => {
                if v.is_infinite() {
                    (-u).exp()
                } else {
                    // e^-u - e^-v = e^-u (1 - e^-(v-u))
                    -(-u).exp() * (u - v).exp_m1()
                }
            }
        }
    }

    /// Cumulative hazard `H = -ln G` at chart coordinate `u`.
    pub fn cum_hazard_u(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => rate * u,
            Family::StretchedExp { a, b } => a * u.powf(b + 1.0) / (b + 1.0),
            Family::Lomax { a } => a * u.ln_1p(),
            Family::Lognormal { sigma } => {
                let t = u.ln() / (sigma * std::f64::consts::SQRT_2);
                -(numerics::log_erfc(t) - std::f64::consts::LN_2)
            }
            Family::Gumbel { a } => (a * u).exp_m1() / a,
            Family::Triangular => 2.0 * u,
            Family::CompactPower { c } => c * u,
            Family::CompactFast { a, b } => a / b * (b * u).exp_m1(),
            Family::Uniform => u,
            Family::Custom(c) => match &c.cum_hazard {
                Some(cum) => cum(self.x_of(u)),
                None => self.hazard_integral_numeric(c, 0.0, u),
            },
        }
    }

    fn hazard_integral_numeric(&self, c: &CustomHazard, ua: f64, ub: f64) -> f64 {
        let h = &c.hazard;
        let f = |v: f64| h(self.x_of(v)) * self.dx_du(v);
        match numerics::integrate(f, ua, ub, 1e-12, 1e-14) {
            Ok(v) => v,
            Err(NumericsError::QuadratureNotConverged { value, .. }) => value,
            Err(_) => f64::NAN,
        }
    }

    /// `H(u_b) - H(u_a)`, accurate even when both are large.
    pub fn hazard_integral(&self, ua: f64, ub: f64) -> f64 {
        let d = match &self.family {
            Family::Custom(c) if c.cum_hazard.is_none() => self.hazard_integral_numeric(c, ua, ub),
            Family::Lomax { a } => a * ((ub - ua) / (1.0 + ua)).ln_1p(),
            Family::CompactFast { a, b } => a / b * (b * ua).exp() * (b * (ub - ua)).exp_m1(),
            _ => self.cum_hazard_u(ub) - self.cum_hazard_u(ua),
        };
        if d.is_nan() && ub > ua {
            // both cumulative hazards overflowed
            f64::INFINITY
        } else {
            d
        }
    }

    /// `ln(x(u) + x(v))`; `v` may be infinite (the boundary of `[0, 1)`).
    pub fn ln_sum_positions(&self, u: f64, v: f64) -> f64 {
        match self.support {
            Support::HalfLine => (u + v).ln(),
            Support::UnitInterval => {
                let eu = (-u).exp();
                let ev = if v.is_infinite() { 0.0 } else { (-v).exp() };
                std::f64::consts::LN_2 + (-0.5 * (eu + ev)).ln_1p()
            }
        }
    }

    /// `ln h` at chart coordinate `u`.
    pub fn ln_hazard_u(&self, u: f64) -> f64 {
        match &self.family {
            Family::Exponential { rate } => rate.ln(),
            Family::StretchedExp { a, b } => {
                if *b == 0.0 {
                    a.ln()
                } else {
                    a.ln() + b * u.ln()
                }
            }
            Family::Lomax { a } => a.ln() - u.ln_1p(),
            Family::Lognormal { sigma } => {
                if u <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let z = u.ln() / sigma;
                numerics::log_std_normal_pdf(z) - u.ln() - sigma.ln() + self.cum_hazard_u(u)
            }
            Family::Gumbel { a } => a * u,
            Family::Triangular => std::f64::consts::LN_2 + u,
            Family::CompactPower { c } => c.ln() + u,
            Family::CompactFast { a, b } => a.ln() + (1.0 + b) * u,
            Family::Uniform => u,
            Family::Custom(c) => (c.hazard)(self.x_of(u)).ln(),
        }
    }

    /// Chart coordinate `u` with `H(u) = e`; used for inverse-transform
    /// sampling with `e ~ Exp(1)`.
    pub fn inv_cum_hazard(&self, e: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        match &self.family {
            Family::Exponential { rate } => e / rate,
            Family::StretchedExp { a, b } => ((b + 1.0) * e / a).powf(1.0 / (b + 1.0)),
            Family::Lomax { a } => (e / a).exp_m1(),
            Family::Gumbel { a } => (a * e).ln_1p() / a,
            Family::Triangular => e / 2.0,
            Family::CompactPower { c } => e / c,
            Family::CompactFast { a, b } => (b * e / a).ln_1p() / b,
            Family::Uniform => e,
            Family::Lognormal { .. } | Family::Custom(_) => self.inv_cum_hazard_numeric(e),
        }
    }

    fn inv_cum_hazard_numeric(&self, e: f64) -> f64 {
        let mut hi = 1.0;
        while self.cum_hazard_u(hi) < e {
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        let lo = 0.0;
        numerics::brent_root(|u| self.cum_hazard_u(u) - e, lo, hi, 0.0, 1e-13).unwrap_or(hi)
    }

    // ----- position space -----

    fn check_domain(&self, x: f64, allow_boundary: bool) -> Result<(), DensityError> {
        let ok = match self.support {
            Support::HalfLine => x >= 0.0 && x.is_finite(),
            Support::UnitInterval => x >= 0.0 && (x < 1.0 || (allow_boundary && x == 1.0)),
        };
        if ok {
            Ok(())
        } else {
            Err(DensityError::Domain {
                x,
                support: self.support,
            })
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64, DensityError> {
        self.check_domain(x, false)?;
        let u = self.u_of(x);
        Ok((self.ln_hazard_u(u) - self.cum_hazard_u(u)).exp())
    }

    pub fn survival(&self, x: f64) -> Result<f64, DensityError> {
        self.check_domain(x, true)?;
        Ok((-self.cum_hazard_u(self.u_of(x))).exp())
    }

    pub fn hazard(&self, x: f64) -> Result<f64, DensityError> {
        self.check_domain(x, false)?;
        if let Family::Custom(c) = &self.family {
            return Ok((c.hazard)(x));
        }
        Ok(self.ln_hazard_u(self.u_of(x)).exp())
    }

    /// Mean of the folded density, `int_0 G(x) dx`, by adaptive quadrature
    /// over dyadic chunks of the chart with a divergence check.
    pub fn first_abs_moment(&self) -> Result<f64, DensityError> {
        if let Family::Lomax { a } = self.family {
            if a <= 1.0 {
                return Err(DensityError::InfiniteMean(self.spec_string()));
            }
        }
        let f = |u: f64| (-self.cum_hazard_u(u)).exp() * self.dx_du(u);
        let mut total = numerics::integrate(f, 0.0, 1.0, 1e-10, 1e-14)?;
        let mut prev_chunk = total;
        let mut prev_ratio = f64::NAN;
        let mut lo = 1.0_f64;
        for j in 0..1020 {
            let hi = 2.0 * lo;
            let chunk = numerics::integrate(f, lo, hi, 1e-10, 1e-300)?;
            total += chunk;
            lo = hi;
            if chunk <= 1e-12 * total {
                return Ok(total);
            }
            let ratio = chunk / prev_chunk;
            prev_chunk = chunk;
            if j > 30 && (ratio - prev_ratio).abs() < 1e-7 {
                // settled power-law decay of the chunks
                if ratio >= 1.0 - 1e-6 {
                    return Err(DensityError::InfiniteMean(self.spec_string()));
                }
                return Ok(total + chunk * ratio / (1.0 - ratio));
            }
            prev_ratio = ratio;
        }
        Err(DensityError::InfiniteMean(self.spec_string()))
    }

    /// Analytic tail classification; custom hazards must declare theirs.
    pub fn classify_tail(&self) -> Result<TailClass, DensityError> {
        Ok(match &self.family {
            Family::Exponential { .. } | Family::Lognormal { .. } => TailClass::SubLogIncrements,
            Family::StretchedExp { b, .. } => {
                if *b > 0.0 {
                    TailClass::SuperLog {
                        kind: SuperLogKind::RegularlyVarying { rho: *b },
                    }
                } else {
                    TailClass::SubLogIncrements
                }
            }
            Family::Lomax { a } => {
                if *a > 1.0 {
                    TailClass::PowerLawTail { a: *a }
                } else {
                    return Err(DensityError::InfiniteMean(self.spec_string()));
                }
            }
            Family::Gumbel { .. } => TailClass::SuperLog {
                kind: SuperLogKind::GammaClass,
            },
            Family::Triangular => TailClass::CompactPowerLaw { c: 2.0 },
            Family::CompactPower { c } => {
                if *c > 1.0 {
                    TailClass::CompactPowerLaw { c: *c }
                } else {
                    TailClass::CompactTerminating
                }
            }
            Family::CompactFast { b, .. } => TailClass::CompactRv { rho: 1.0 + b },
            Family::Uniform => TailClass::CompactTerminating,
            Family::Custom(c) => match c.class {
                Some(class) => class,
                None => return Err(DensityError::UnknownTailClass(c.name.clone())),
            },
        })
    }

    /// A length scale of the density, used to place grids and brackets.
    pub fn scale(&self) -> f64 {
        match &self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::StretchedExp { a, b } => a.powf(-1.0 / (1.0 + b)),
            Family::Gumbel { a } => 1.0 / a,
            _ => 1.0,
        }
    }
}
