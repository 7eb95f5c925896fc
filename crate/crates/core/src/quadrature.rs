//! Globally adaptive 21-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_937_015_036,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// 10-point Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Evaluation points per panel of the 21-point rule.
pub const POINTS_PER_PANEL: usize = 21;

/// One application of the Kronrod rule: (integral, |Kronrod − Gauss|, ∫|f|).
pub fn gk21<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T, T) {
    let half = (b - a) / T::lit(2.0);
    let center = (a + b) / T::lit(2.0);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[10]);
    let mut gauss = T::zero();
    let mut abs = fc.abs() * T::lit(WGK[10]);
    for j in 0..10 {
        let dx = half * T::lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod = kronrod + (f1 + f2) * T::lit(WGK[j]);
        abs = abs + (f1.abs() + f2.abs()) * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + (f1 + f2) * T::lit(WG[j / 2]);
        }
    }
    let h = half.abs();
    (kronrod * half, ((kronrod - gauss) * half).abs(), abs * h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
    /// Integrand evaluations allowed before reporting non-convergence.
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub evals: usize,
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    f: F,
    a: T,
    b: T,
    tol: Tolerance<T>,
) -> Result<Estimate<T>> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the given
/// breakpoints and bisecting the segment with the largest error estimate
/// until `error ≤ max(abs, rel·|value|)`.
pub fn integrate_with_breaks<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    breaks: &[T],
    tol: Tolerance<T>,
) -> Result<Estimate<T>> {
    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    let mut value = T::zero();
    let mut error = T::zero();
    let mut splits = 0usize;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (v, e, _) = gk21(&mut f, w[0], w[1]);
        evals += POINTS_PER_PANEL;
        value = value + v;
        error = error + e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    loop {
        if !value.is_finite() {
            return Err(Error::NonConvergence {
                what: "quadrature",
                detail: "integrand produced a non-finite value".into(),
            });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            break;
        }
        if evals + 2 * POINTS_PER_PANEL > tol.max_evals {
            return Err(Error::NonConvergence {
                what: "quadrature",
                detail: format!(
                    "error estimate {:e} above tolerance after {} evaluations",
                    error.as_f64(),
                    evals
                ),
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = (worst.a + worst.b) / T::lit(2.0);
        if mid <= worst.a || mid >= worst.b {
            // segment cannot be split further in this precision
            heap.push(Segment {
                error: T::zero(),
                ..worst
            });
            error = error - worst.error;
            continue;
        }
        let (v1, e1, _) = gk21(&mut f, worst.a, mid);
        let (v2, e2, _) = gk21(&mut f, mid, worst.b);
        evals += 2 * POINTS_PER_PANEL;
        value = value - worst.value + v1 + v2;
        error = error - worst.error + e1 + e2;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        splits += 1;
        // refresh the running sums now and then to shed accumulated rounding
        if splits.is_multiple_of(256) {
            value = heap.iter().fold(T::zero(), |acc, s| acc + s.value);
            error = heap.iter().fold(T::zero(), |acc, s| acc + s.error);
        }
    }
    let value = heap.iter().fold(T::zero(), |acc, s| acc + s.value);
    Ok(Estimate {
        value,
        error,
        evals,
    })
}
