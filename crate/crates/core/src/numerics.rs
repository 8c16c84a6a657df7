//! Scalar numerical kernels shared by the density, solver and asymptotics
//! modules: bracketed root finding, adaptive Gauss-Kronrod quadrature and a
//! few log-space helpers.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("root is not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
    #[error(
        "root finder did not converge after {iterations} iterations (last bracket [{a}, {b}])"
    )]
    RootNotConverged { iterations: usize, a: f64, b: f64 },
    #[error("quadrature on [{a}, {b}] did not reach tolerance: estimate {value}, error {error}")]
    QuadratureNotConverged {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },
}

/// `ln(1 + e^x)` without overflow for large `x` or loss of precision for
/// very negative `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^x - 1)` for `x > 0`.
pub fn log_expm1(x: f64) -> f64 {
    if x > 35.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Natural log of the complementary error function, valid far into the
/// upper tail where `erfc` itself underflows.
pub fn log_erfc(t: f64) -> f64 {
    if t < 20.0 {
        return libm::erfc(t).ln();
    }
    // Continued fraction erfc(t) = exp(-t^2)/sqrt(pi) * 1/(t + (1/2)/(t + 1/(t + (3/2)/(t + ...))))
    // evaluated bottom-up; 60 levels is far past convergence for t >= 20.
    let mut frac = t;
    for n in (1..=60).rev() {
        frac = t + (n as f64 * 0.5) / frac;
    }
    -t * t - 0.5 * std::f64::consts::PI.ln() - frac.ln()
}

/// Standard normal log-density.
pub fn log_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Brent's method on a sign-changing bracket `[a, b]`.
///
/// Terminates when the bracket is narrower than `xtol + rtol * |x|` or an
/// exact zero is hit.
pub fn brent_root<F>(mut f: F, a: f64, b: f64, xtol: f64, rtol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let fa = f(a);
    let fb = f(b);
    brent_root_with(&mut f, a, b, fa, fb, xtol, rtol)
}

/// Same as [`brent_root`] when `f(a)` and `f(b)` are already known.
pub fn brent_root_with<F>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    xtol: f64,
    rtol: f64,
) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    const MAX_ITER: usize = 500;
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.signum() != fb.signum()) || fa.is_nan() || fb.is_nan() {
        return Err(NumericsError::NotBracketed { a, b, fa, fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * (xtol + rtol * b.abs());
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(NumericsError::NonFiniteIntegrand { x: b });
        }
    }
    Err(NumericsError::RootNotConverged {
        iterations: MAX_ITER,
        a: b,
        b: c,
    })
}

/// Plain bisection to a bracket width of `rtol * |x|` (or until the
/// floating-point midpoint stops moving). Useful for step-like predicates.
pub fn bisect_predicate<F>(mut below: F, mut lo: f64, mut hi: f64, rtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> bool,
{
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= rtol * mid.abs() {
            return (lo, hi);
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(NumericsError::NonFiniteIntegrand { x: center });
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(NumericsError::NonFiniteIntegrand { x: x1 });
        }
        if !f2.is_finite() {
            return Err(NumericsError::NonFiniteIntegrand { x: x2 });
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
///
/// The interval with the largest error estimate is bisected until the
/// summed error is below `max(atol, rtol * |integral|)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, rtol: f64, atol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&mut f, lo, hi)?;
    let mut parts = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    while err > atol.max(rtol * total.abs()) {
        if parts.len() >= MAX_INTERVALS {
            return Err(NumericsError::QuadratureNotConverged {
                a,
                b,
                value: total * sign,
                error: err,
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (pa, pb, pv, pe) = parts.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // interval cannot be split further; accept what we have
            parts.push((pa, pb, pv, 0.0));
            err -= pe;
            continue;
        }
        let (v1, e1) = gk15(&mut f, pa, mid)?;
        let (v2, e2) = gk15(&mut f, mid, pb)?;
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((pa, mid, v1, e1));
        parts.push((mid, pb, v2, e2));
    }
    // re-sum to shed accumulated rounding from the incremental updates
    let mut values: Vec<f64> = parts.iter().map(|p| p.2).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    Ok(sign * values.iter().sum::<f64>())
}

/// Pairwise (cascade) summation with a fixed split rule, so the result only
/// depends on the order of `values`, never on how the work was scheduled.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}
