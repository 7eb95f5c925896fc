//! Special functions needed by the density, the baselines and the oracles.
//!
//! Everything here is pure and generic over [`Real`]. Only the complete
//! elliptic integral of the second kind, `J0`, `I0` (plain and scaled) and
//! `ln Γ` are public; a few helpers used by the baseline fitters (`I1`,
//! digamma, trigamma) are crate-private.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Modulus `k ∈ [0, 1]` of a complete elliptic integral.
///
/// **Convention:** the argument is the modulus `k`, not the parameter
/// `m = k²` used by Mathematica, SciPy's `ellipe` and others. The
/// Cauchy-Rician density passes `√(4xδ / (γ² + (x+δ)²))`, i.e. a modulus.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EllipticModulus<T>(T);

impl<T: Real> EllipticModulus<T> {
    pub fn new(k: T) -> Result<Self> {
        if !k.is_finite() || k < T::zero() || k > T::one() {
            return Err(Error::domain("elliptic modulus", k.as_f64(), "0 <= k <= 1"));
        }
        Ok(EllipticModulus(k))
    }

    pub fn get(self) -> T {
        self.0
    }

    /// Complementary modulus `k' = √(1 − k²)`, computed as `√((1−k)(1+k))`.
    pub fn complement(self) -> T {
        ((T::one() - self.0) * (T::one() + self.0)).sqrt()
    }
}

/// Complete elliptic integral of the second kind
///
/// ```text
///         π/2
///          ⌠     _______________
/// E(k)  =  │   \╱ 1 - k² sin²(t)  dt
///          ⌡
///         0
/// ```
///
/// Evaluated with the arithmetic-geometric mean. `E(0) = π/2`, `E(1) = 1`.
pub fn ellip_e<T: Real>(k: EllipticModulus<T>) -> T {
    ellip_e_complement(k.complement())
}

/// `E` as a function of the complementary modulus `k' ∈ [0, 1]`.
///
/// Callers that can form `k'` without cancellation (the density can, as a
/// ratio of two hypotenuses) should use this entry point near `k = 1`.
pub(crate) fn ellip_e_complement<T: Real>(kc: T) -> T {
    if kc <= T::zero() {
        return T::one();
    }
    let kc = kc.min(T::one());
    let tol = T::lit(1e-15).max(T::epsilon());
    let two = T::lit(2.0);
    let mut a = T::one();
    let mut b = kc;
    // 1 - k²/2 written through k' so it stays exact as k -> 1
    let mut sum = (T::one() + kc * kc) / two;
    let mut weight = T::one();
    for _ in 0..64 {
        let c = (a - b) / two;
        sum = sum - weight * c * c;
        weight = weight * two;
        let next_a = (a + b) / two;
        b = (a * b).sqrt();
        a = next_a;
        if (a - b).abs() <= tol * a {
            break;
        }
    }
    T::FRAC_PI_2() / a * sum
}

/// Bessel function of the first kind, order zero.
///
/// Power series for `|x| < 8`; above that the Hankel form
/// `√(2/(πx)) (P0 cos(x−π/4) − Q0 sin(x−π/4))` with the rational `P0`, `Q0`
/// approximations of the FreeBSD/musl libm (valid on `[8, ∞)`).
pub fn bessel_j0<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::domain("bessel_j0", x.as_f64(), "finite x"));
    }
    let x = x.abs();
    if x < T::lit(8.0) {
        Ok(j0_series(x))
    } else {
        Ok(j0_hankel(x))
    }
}

/// `J0` without the finiteness check, for hot loops over finite arguments.
#[inline]
pub(crate) fn j0<T: Real>(x: T) -> T {
    let x = x.abs();
    if x < T::lit(8.0) {
        j0_series(x)
    } else {
        j0_hankel(x)
    }
}

fn j0_series<T: Real>(x: T) -> T {
    let q = x * x / T::lit(4.0);
    let mut term = T::one();
    let mut sum = T::one();
    let mut m = T::zero();
    for _ in 0..60 {
        m = m + T::one();
        term = -term * q / (m * m);
        sum = sum + term;
        if term.abs() <= T::epsilon() * T::lit(1e-3) {
            break;
        }
    }
    sum
}

const PR8: [f64; 6] = [
    0.0,
    -7.031_249_999_999_003_574_84e-2,
    -8.081_670_412_753_497_956_26e0,
    -2.570_631_056_797_048_472_62e2,
    -2.485_216_410_094_288_221_44e3,
    -5.253_043_804_907_295_452_72e3,
];
const PS8: [f64; 5] = [
    1.165_343_646_196_681_817_17e2,
    3.833_744_753_641_218_267_15e3,
    4.059_785_726_484_725_455_52e4,
    1.167_529_725_643_759_156_81e5,
    4.762_772_841_467_309_626_75e4,
];
const QR8: [f64; 6] = [
    0.0,
    7.324_218_749_999_350_519_53e-2,
    1.176_820_646_822_526_938_99e1,
    5.576_733_802_564_018_560_59e2,
    8.859_197_207_564_686_323_17e3,
    3.701_462_677_768_878_347_71e4,
];
const QS8: [f64; 6] = [
    1.637_760_268_956_898_244_14e2,
    8.098_344_946_564_498_059_16e3,
    1.425_382_914_191_204_763_48e5,
    8.033_092_571_195_143_973_45e5,
    8.405_015_798_190_605_128_18e5,
    -3.438_992_935_378_666_152_25e5,
];

fn horner<T: Real>(z: T, coeffs: &[f64]) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * z + T::lit(c))
}

fn j0_hankel<T: Real>(x: T) -> T {
    let z = (x * x).recip();
    let p0 = T::one() + horner(z, &PR8) / (T::one() + z * horner(z, &PS8));
    let q0 = (T::lit(-0.125) + horner(z, &QR8) / (T::one() + z * horner(z, &QS8))) / x;

    // sin x ± cos x, recovering the cancelling one from -cos 2x
    let (s, c) = x.sin_cos();
    let mut cc = s + c;
    let mut ss = s - c;
    let z2 = -(x + x).cos();
    if s * c < T::zero() {
        cc = z2 / ss;
    } else {
        ss = z2 / cc;
    }
    (p0 * cc - q0 * ss) / (T::PI() * x).sqrt()
}

const I0_ASYMPTOTIC_FROM: f64 = 20.0;

/// Modified Bessel function of the first kind, order zero.
///
/// Fails with [`Error::Overflow`] once `x` comes within `e^10` of the largest
/// representable value (`x ≳ 699.8` for `f64`); use [`bessel_i0e`] there.
pub fn bessel_i0<T: Real>(x: T) -> Result<T> {
    check_nonneg("bessel_i0", x)?;
    let limit = T::max_value().ln() - T::lit(10.0);
    if x >= limit {
        return Err(Error::Overflow {
            what: "bessel_i0",
            value: x.as_f64(),
        });
    }
    if x < T::lit(I0_ASYMPTOTIC_FROM) {
        Ok(in_series(T::zero(), x))
    } else {
        Ok(x.exp() * in_asymptotic_scaled(T::zero(), x))
    }
}

/// Exponentially scaled `e^{−x} I0(x)`, finite for every finite `x ≥ 0`.
pub fn bessel_i0e<T: Real>(x: T) -> Result<T> {
    check_nonneg("bessel_i0e", x)?;
    Ok(i0e(x))
}

pub(crate) fn i0e<T: Real>(x: T) -> T {
    if x < T::lit(I0_ASYMPTOTIC_FROM) {
        in_series(T::zero(), x) * (-x).exp()
    } else {
        in_asymptotic_scaled(T::zero(), x)
    }
}

/// `e^{−x} I1(x)` for `x ≥ 0`.
pub(crate) fn bessel_i1e<T: Real>(x: T) -> T {
    if x < T::lit(I0_ASYMPTOTIC_FROM) {
        in_series(T::one(), x) * (-x).exp()
    } else {
        in_asymptotic_scaled(T::one(), x)
    }
}

/// Exponentially scaled `e^{x} K0(x)` for `x > 0`.
pub fn bessel_k0e<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("bessel_k0e", x.as_f64(), "finite x > 0"));
    }
    Ok(k0e(x))
}

/// Trapezoid rule on `e^{x} K0(x) = ∫₀^∞ exp(−2x sinh²(u/2)) du`. The
/// integrand is even and analytic in a strip around the real axis, so the
/// error falls geometrically in `1/h`; the step shrinks with the width
/// `~1/√x` of the peak.
pub(crate) fn k0e<T: Real>(x: T) -> T {
    let h = T::lit(0.125).min(T::lit(0.1) / x.sqrt());
    let half = h / T::lit(2.0);
    let mut sum = T::lit(0.5);
    let mut k = 1u32;
    loop {
        let s = (half * T::lit(k as f64)).sinh();
        let term = (-T::lit(2.0) * x * s * s).exp();
        sum = sum + term;
        if term <= T::lit(1e-3) * T::epsilon() * sum {
            return h * sum;
        }
        k += 1;
    }
}

fn check_nonneg<T: Real>(what: &'static str, x: T) -> Result<()> {
    if !x.is_finite() || x < T::zero() {
        return Err(Error::domain(what, x.as_f64(), "finite x >= 0"));
    }
    Ok(())
}

/// Σ (x/2)^{2m+ν} / (m! (m+ν)!) for integer order ν ∈ {0, 1}.
fn in_series<T: Real>(order: T, x: T) -> T {
    let half = x / T::lit(2.0);
    let q = half * half;
    let mut term = if order > T::zero() { half } else { T::one() };
    let mut sum = term;
    let mut m = T::zero();
    for _ in 0..200 {
        m = m + T::one();
        term = term * q / (m * (m + order));
        sum = sum + term;
        if term <= sum * T::epsilon() * T::lit(1e-2) {
            break;
        }
    }
    sum
}

/// Large-argument expansion of `e^{−x} I_ν(x)`.
fn in_asymptotic_scaled<T: Real>(order: T, x: T) -> T {
    let mu = T::lit(4.0) * order * order;
    let mut term = T::one();
    let mut sum = T::one();
    let mut k = T::zero();
    for _ in 0..60 {
        k = k + T::one();
        let odd = T::lit(2.0) * k - T::one();
        let next = -term * (mu - odd * odd) / (T::lit(8.0) * k * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum = sum + term;
        if term.abs() <= T::epsilon() * T::lit(1e-2) {
            break;
        }
    }
    sum / (T::lit(2.0) * T::PI() * x).sqrt()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
///
/// Integers up to 20 go through the exact factorial; everything else uses
/// the Lanczos approximation (g = 7, 9 terms).
pub fn log_gamma<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("log_gamma", x.as_f64(), "finite x > 0"));
    }
    if x.fract() == T::zero() && x <= T::lit(20.0) {
        let n = x.to_u32().unwrap_or(1);
        let fact = (2..n).fold(T::one(), |acc, i| acc * T::lit(f64::from(i)));
        return Ok(fact.ln());
    }
    if x < T::lit(0.5) {
        return Ok(lanczos(x + T::one()) - x.ln());
    }
    Ok(lanczos(x))
}

fn lanczos<T: Real>(x: T) -> T {
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::lit(i as f64));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) for `x > 0`: upward recurrence then the asymptotic series.
pub(crate) fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let series = z
        * (1.0 / 12.0
            - z * (1.0 / 120.0 - z * (1.0 / 252.0 - z * (1.0 / 240.0 - z * (1.0 / 132.0)))));
    acc + x.ln() - 0.5 / x - series
}

/// Trigamma ψ'(x) for `x > 0`.
pub(crate) fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    let series = 1.0 / x
        + z / 2.0
        + z / x
            * (1.0 / 6.0
                - z * (1.0 / 30.0 - z * (1.0 / 42.0 - z * (1.0 / 30.0 - z * (5.0 / 66.0)))));
    acc + series
}
