//! The Cauchy-Rician amplitude law: parameters, density, CDF and the two
//! algebraic moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, gk21, Tolerance, POINTS_PER_PANEL};
use crate::scalar::Real;
use crate::special_functions::{ellip_e_complement, i0e, j0, k0e};
use crate::summation::NeumaierSum;

/// Scale `gamma > 0` and unified location `delta ≥ 0`.
///
/// `delta` is the norm `√(δ1² + δ2²)` of the component locations; the
/// amplitude law depends on them only through it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawParams<T>",
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub struct CrParams<T> {
    gamma: T,
    delta: T,
}

#[derive(Deserialize)]
struct RawParams<T> {
    gamma: T,
    delta: T,
}

impl<T: Real> TryFrom<RawParams<T>> for CrParams<T> {
    type Error = Error;
    fn try_from(raw: RawParams<T>) -> Result<Self> {
        CrParams::new(raw.gamma, raw.delta)
    }
}

impl<T: Real> CrParams<T> {
    pub fn new(gamma: T, delta: T) -> Result<Self> {
        if !gamma.is_finite() || gamma <= T::zero() {
            return Err(Error::param(
                "gamma",
                gamma.as_f64(),
                "must be finite and > 0",
            ));
        }
        if !delta.is_finite() || delta < T::zero() {
            return Err(Error::param(
                "delta",
                delta.as_f64(),
                "must be finite and >= 0",
            ));
        }
        Ok(CrParams { gamma, delta })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn delta(&self) -> T {
        self.delta
    }
}

/// The free constant `a > 0` of the algebraic moment functions.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct MomentConstant<T>(T);

impl<T: Real> MomentConstant<T> {
    pub fn new(a: T) -> Result<Self> {
        if !a.is_finite() || a <= T::zero() {
            return Err(Error::param("a", a.as_f64(), "must be finite and > 0"));
        }
        Ok(MomentConstant(a))
    }

    pub fn get(self) -> T {
        self.0
    }
}

fn check_support<T: Real>(what: &'static str, x: T) -> Result<()> {
    if !x.is_finite() || x < T::zero() {
        return Err(Error::domain(what, x.as_f64(), "finite x >= 0"));
    }
    Ok(())
}

/// Closed-form density
///
/// ```text
/// f(x) = 2γx E(k) / (π [γ² + (x−δ)²] √(γ² + (x+δ)²)),   k² = 4xδ / (γ² + (x+δ)²)
/// ```
///
/// The complementary modulus is formed directly as
/// `√(γ² + (x−δ)²) / √(γ² + (x+δ)²)`, so no cancellation occurs as `k → 1`
/// near `x = δ`.
pub fn pdf<T: Real>(p: &CrParams<T>, x: T) -> Result<T> {
    check_support("pdf", x)?;
    if x == T::zero() {
        return Ok(T::zero());
    }
    let plus = p.gamma.hypot(x + p.delta);
    let minus = p.gamma.hypot(x - p.delta);
    let e = ellip_e_complement(minus / plus);
    let two = T::lit(2.0);
    Ok(two * p.gamma * (x / plus) * e / (T::PI() * minus * minus))
}

/// Natural log of [`pdf`], assembled factor by factor so it stays finite far
/// into the tail.
pub fn log_pdf<T: Real>(p: &CrParams<T>, x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("log_pdf", x.as_f64(), "finite x > 0"));
    }
    let plus = p.gamma.hypot(x + p.delta);
    let minus = p.gamma.hypot(x - p.delta);
    let e = ellip_e_complement(minus / plus);
    Ok(T::LN_2() + p.gamma.ln() + x.ln() + e.ln()
        - T::PI().ln()
        - T::lit(2.0) * minus.ln()
        - plus.ln())
}

/// Controls for [`pdf_oracle_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Absolute tolerance on the density value.
    pub abs_tol: f64,
    /// Relative tolerance on the density value.
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_evals: 10_000_000,
        }
    }
}

/// Density from the Hankel-type integral
/// `f(x) = x ∫₀^∞ ω e^{−γω} J0(ωδ) J0(ωx) dω`, evaluated on the real axis
/// for `x < δ + γ` and along the rotated contour beyond.
///
/// Slow; kept as an independent cross-check of [`pdf`].
pub fn pdf_oracle<T: Real>(p: &CrParams<T>, x: T) -> Result<T> {
    pdf_oracle_with(p, x, OracleOptions::default())
}

pub fn pdf_oracle_with<T: Real>(p: &CrParams<T>, x: T, opts: OracleOptions) -> Result<T> {
    check_support("pdf_oracle", x)?;
    if x == T::zero() {
        return Ok(T::zero());
    }
    let (gamma, delta) = (p.gamma, p.delta);
    if x - delta >= gamma {
        return oracle_rotated(gamma, delta, x, opts);
    }
    let mut integrand = |w: T| w * (-gamma * w).exp() * j0(w * delta) * j0(w * x);

    // Panels of half the period of the faster Bessel factor, and never longer
    // than the decay length of the exponential.
    let freq = x.max(delta);
    let mut step = gamma.recip();
    if freq > T::zero() {
        step = step.min(T::PI() / freq);
    }
    let abs_tol = T::lit(opts.abs_tol);
    let rel_tol = T::lit(opts.rel_tol);
    let mut sum = NeumaierSum::new();
    let mut evals = 0usize;
    let mut k = 0u64;
    // J0(t) carries a phase error of order t·ε, which caps the attainable
    // relative accuracy of a panel far out in ω
    let phase_noise = T::lit(16.0) * T::epsilon() * freq;
    let envelope = |t: T| {
        if t > T::zero() {
            (T::lit(2.0) / (T::PI() * t)).sqrt().min(T::one())
        } else {
            T::one()
        }
    };
    loop {
        let a = step * T::lit(k as f64);
        let b = step * T::lit((k + 1) as f64);
        let rel = T::lit(1e-12).max(phase_noise * b);
        sum.add(panel(&mut integrand, a, b, rel, 10, &mut evals));
        k += 1;

        // |∫_b^∞| ≤ ∫_b^∞ ω e^{−γω} dω · max_{ω≥b} |J0(ωδ) J0(ωx)|, with
        // |J0(t)| ≤ min(1, √(2/(πt)))
        let tail = (-gamma * b).exp()
            * (b / gamma + (gamma * gamma).recip())
            * envelope(b * x)
            * envelope(b * delta);
        let value = x * sum.total();
        let tail = x * tail;
        if tail <= abs_tol.min(rel_tol * value.abs()) || tail < T::min_positive_value() {
            return Ok(value);
        }
        if evals > opts.max_evals {
            return Err(Error::NonConvergence {
                what: "pdf_oracle",
                detail: format!(
                    "tail bound {:e} still above tolerance after {} evaluations",
                    tail.as_f64(),
                    evals
                ),
            });
        }
    }
}

/// The same integral for `x ≥ δ + γ`, with `J0(ωx) = Re H0⁽¹⁾(ωx)` and the
/// contour turned onto the positive imaginary axis:
/// `f(x) = (2x/π) ∫₀^∞ t sin(γt) I0(δt) K0(xt) dt`.
///
/// On the real axis the integrand cancels to about `γ/x²` of its absolute
/// size, which rounding in `J0(ωx)` cannot resolve at large `x`; here it
/// decays as `e^{−(x−δ)t}` and barely oscillates.
fn oracle_rotated<T: Real>(gamma: T, delta: T, x: T, opts: OracleOptions) -> Result<T> {
    let c = x - delta;
    let mut integrand = |t: T| {
        if t == T::zero() {
            return T::zero();
        }
        t * (gamma * t).sin() * i0e(delta * t) * k0e(x * t) * (-c * t).exp()
    };
    let step = (T::lit(4.0) / c).min(T::PI() / gamma);
    let scale = T::lit(2.0) * x / T::PI();
    let (abs_tol, rel_tol) = (T::lit(opts.abs_tol), T::lit(opts.rel_tol));
    let mut sum = NeumaierSum::new();
    let mut evals = 0usize;
    let mut k = 0u64;
    loop {
        let a = step * T::lit(k as f64);
        let b = step * T::lit((k + 1) as f64);
        sum.add(panel(&mut integrand, a, b, T::lit(1e-12), 10, &mut evals));
        k += 1;

        // for t ≥ b: I0e ≤ 1 and K0e(xt) ≤ √(π/(2xt)) ≤ √(π/(2xb))
        let tail = scale
            * (T::PI() / (T::lit(2.0) * x * b)).sqrt()
            * (-c * b).exp()
            * (b / c + (c * c).recip());
        let value = scale * sum.total();
        if tail <= abs_tol.min(rel_tol * value.abs()) || tail < T::min_positive_value() {
            return Ok(value);
        }
        if evals > opts.max_evals {
            return Err(Error::NonConvergence {
                what: "pdf_oracle",
                detail: format!(
                    "tail bound {:e} still above tolerance after {} evaluations",
                    tail.as_f64(),
                    evals
                ),
            });
        }
    }
}

fn panel<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    b: T,
    rel: T,
    depth: u32,
    evals: &mut usize,
) -> T {
    let (value, err, abs) = gk21(f, a, b);
    *evals += POINTS_PER_PANEL;
    if depth == 0 || err <= rel * abs || err < T::min_positive_value() {
        return value;
    }
    let mid = (a + b) / T::lit(2.0);
    panel(f, a, mid, rel, depth - 1, evals) + panel(f, mid, b, rel, depth - 1, evals)
}

/// Absolute tolerance of [`cdf`] and [`prob_between`].
pub const CDF_TOLERANCE: f64 = 1e-9;

/// `P(X ≤ x)` by adaptive quadrature of [`pdf`].
pub fn cdf<T: Real>(p: &CrParams<T>, x: T) -> Result<T> {
    check_support("cdf", x)?;
    Ok(prob_between(p, T::zero(), x)?.min(T::one()))
}

/// `P(lo < X ≤ hi)` by adaptive quadrature of [`pdf`].
pub fn prob_between<T: Real>(p: &CrParams<T>, lo: T, hi: T) -> Result<T> {
    check_support("prob_between", lo)?;
    check_support("prob_between", hi)?;
    if hi <= lo {
        return Ok(T::zero());
    }
    let breaks = cdf_breaks(p, lo, hi);
    let tol = Tolerance {
        abs: T::lit(CDF_TOLERANCE),
        rel: T::zero(),
        max_evals: 1_000_000,
    };
    let est = quadrature::integrate_with_breaks(
        |t| pdf(p, t).unwrap_or_else(|_| T::zero()),
        &breaks,
        tol,
    )?;
    Ok(est.value.max(T::zero()))
}

/// Breakpoints at the mode region (`δ`, `δ ± γ`), at `γ`, and geometric
/// steps beyond so the heavy tail is covered by comparable segments.
fn cdf_breaks<T: Real>(p: &CrParams<T>, lo: T, hi: T) -> Vec<T> {
    let mut pts = vec![lo, hi, p.gamma, p.delta, p.delta + p.gamma];
    if p.delta > p.gamma {
        pts.push(p.delta - p.gamma);
    }
    let four = T::lit(4.0);
    let mut s = (p.gamma + p.delta) * four;
    while s < hi {
        pts.push(s);
        s = s * four;
    }
    pts.retain(|&t| t >= lo && t <= hi);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    pts.dedup();
    pts
}

/// Population value of `E[(x² + a²)^{−1/2}] = 1 / √((γ+a)² + δ²)`.
pub fn moment1<T: Real>(p: &CrParams<T>, a: MomentConstant<T>) -> T {
    (p.gamma + a.0).hypot(p.delta).recip()
}

/// Population value of `E[(x² + a²)^{−3/2}] = (γ+a) / (a [(γ+a)² + δ²]^{3/2})`.
pub fn moment2<T: Real>(p: &CrParams<T>, a: MomentConstant<T>) -> T {
    let r = (p.gamma + a.0).hypot(p.delta);
    (p.gamma + a.0) / (a.0 * r * r * r)
}
