//! Method-of-algebraic-moments estimation of `(gamma, delta)`.
//!
//! With `E1 = E[(x² + a²)^{−1/2}]` and `E2 = E[(x² + a²)^{−3/2}]` measured
//! on the data,
//!
//! ```text
//! γ̂ = a (E2 / E1³ − 1)
//! δ̂ = √(E1⁻² − (γ̂ + a)²)
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::cauchy_rician::MomentConstant;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::summation::NeumaierSum;

/// Empirical values of the two algebraic moments at a given `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPair<T> {
    /// Mean of `(x² + a²)^{−1/2}`; lies in `(0, 1/a]`.
    pub e1: T,
    /// Mean of `(x² + a²)^{−3/2}`; lies in `(0, 1/a³]`.
    pub e2: T,
    pub a: MomentConstant<T>,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    /// The radicand of `δ̂` was negative and `δ̂` was set to zero.
    pub delta_clamped: bool,
    /// `γ̂ ≤ 0`; the value is reported as computed.
    pub gamma_nonpositive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamEstimate<T> {
    pub gamma_hat: T,
    pub delta_hat: T,
    pub a_used: T,
    pub diagnostics: Diagnostics,
}

/// How the moment constant `a` is picked from the data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AMode {
    #[default]
    Mean,
    Median,
}

const PARALLEL_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy)]
struct Partial<T> {
    e1: NeumaierSum<T>,
    e2: NeumaierSum<T>,
}

fn accumulate<T: Real>(data: &[T], offset: usize, a: T) -> Result<Partial<T>> {
    let a2 = a * a;
    let mut e1 = NeumaierSum::new();
    let mut e2 = NeumaierSum::new();
    for (i, &x) in data.iter().enumerate() {
        if !x.is_finite() || x < T::zero() {
            return Err(Error::BadSample {
                index: offset + i,
                value: x.as_f64(),
            });
        }
        let inv = (x * x + a2).sqrt().recip();
        e1.add(inv);
        e2.add(inv * inv * inv);
    }
    Ok(Partial { e1, e2 })
}

fn finish<T: Real>(p: Partial<T>, a: MomentConstant<T>, n: usize) -> MomentPair<T> {
    let count = T::lit(n as f64);
    MomentPair {
        e1: p.e1.total() / count,
        e2: p.e2.total() / count,
        a,
        n,
    }
}

/// Single-pass, compensated accumulation of both moments.
pub fn empirical_moments<T: Real>(data: &[T], a: MomentConstant<T>) -> Result<MomentPair<T>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let partial = accumulate(data, 0, a.get())?;
    Ok(finish(partial, a, data.len()))
}

/// Chunked parallel variant of [`empirical_moments`].
///
/// Partial sums are merged in chunk order, so the result does not depend on
/// scheduling.
pub fn empirical_moments_par<T: Real>(data: &[T], a: MomentConstant<T>) -> Result<MomentPair<T>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let partials = data
        .par_chunks(PARALLEL_CHUNK)
        .enumerate()
        .map(|(i, chunk)| accumulate(chunk, i * PARALLEL_CHUNK, a.get()))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Partial {
        e1: NeumaierSum::new(),
        e2: NeumaierSum::new(),
    };
    for p in &partials {
        total.e1.merge(&p.e1);
        total.e2.merge(&p.e2);
    }
    Ok(finish(total, a, data.len()))
}

/// Fits `(gamma, delta)` with the two-moment estimator.
pub fn estimate<T: Real>(data: &[T], a: MomentConstant<T>) -> Result<ParamEstimate<T>> {
    estimate_from_moments(&empirical_moments(data, a)?)
}

/// The closed-form inversion, applied to already computed moments.
pub fn estimate_from_moments<T: Real>(m: &MomentPair<T>) -> Result<ParamEstimate<T>> {
    if !(m.e1 > T::zero()) || !(m.e2 > T::zero()) {
        return Err(Error::param(
            "e1",
            m.e1.as_f64(),
            "moments must be positive",
        ));
    }
    let a = m.a.get();
    let gamma_hat = a * (m.e2 / (m.e1 * m.e1 * m.e1) - T::one());
    let radicand = (m.e1 * m.e1).recip() - (gamma_hat + a) * (gamma_hat + a);
    Ok(assemble(gamma_hat, radicand, a))
}

fn assemble<T: Real>(gamma_hat: T, radicand: T, a: T) -> ParamEstimate<T> {
    let delta_clamped = radicand < T::zero();
    ParamEstimate {
        gamma_hat,
        delta_hat: radicand.max(T::zero()).sqrt(),
        a_used: a,
        diagnostics: Diagnostics {
            delta_clamped,
            gamma_nonpositive: gamma_hat <= T::zero(),
        },
    }
}

/// Variant using only the first moment, measured at two constants.
///
/// `E1(a)⁻² = (γ+a)² + δ²` at `a1` and `a2` differ by
/// `(a2 − a1)(2γ + a1 + a2)`, which gives `γ` directly and then `δ`.
pub fn estimate_single_moment<T: Real>(
    data: &[T],
    a1: MomentConstant<T>,
    a2: MomentConstant<T>,
) -> Result<ParamEstimate<T>> {
    if a1 == a2 {
        return Err(Error::param("a2", a2.get().as_f64(), "must differ from a1"));
    }
    let m1 = empirical_moments(data, a1)?;
    let m2 = empirical_moments(data, a2)?;
    single_moment_from(m1.e1, a1, m2.e1, a2)
}

/// Inversion behind [`estimate_single_moment`] for given first moments.
pub fn single_moment_from<T: Real>(
    e1_at_a1: T,
    a1: MomentConstant<T>,
    e1_at_a2: T,
    a2: MomentConstant<T>,
) -> Result<ParamEstimate<T>> {
    let (a1, a2) = (a1.get(), a2.get());
    if a1 == a2 {
        return Err(Error::param("a2", a2.as_f64(), "must differ from a1"));
    }
    if !(e1_at_a1 > T::zero()) || !(e1_at_a2 > T::zero()) {
        return Err(Error::param(
            "e1",
            e1_at_a1.min(e1_at_a2).as_f64(),
            "moments must be positive",
        ));
    }
    let u1 = (e1_at_a1 * e1_at_a1).recip();
    let u2 = (e1_at_a2 * e1_at_a2).recip();
    let two = T::lit(2.0);
    let gamma_hat = ((u2 - u1) / (a2 - a1) - a1 - a2) / two;
    let radicand = u1 - (gamma_hat + a1) * (gamma_hat + a1);
    Ok(assemble(gamma_hat, radicand, a1))
}

/// Picks the moment constant from the data: the sample mean by default, or
/// the sample median. Falls back to the other statistic, then to `1`, when
/// the chosen one is not a positive finite number.
pub fn choose_a<T: Real>(data: &[T], mode: AMode) -> Result<MomentConstant<T>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let candidates = match mode {
        AMode::Mean => [mean(data), median(data)],
        AMode::Median => [median(data), mean(data)],
    };
    let a = candidates
        .into_iter()
        .find(|v| v.is_finite() && *v > T::zero())
        .unwrap_or_else(T::one);
    MomentConstant::new(a)
}

fn mean<T: Real>(data: &[T]) -> T {
    let acc: NeumaierSum<T> = data.iter().copied().sum();
    acc.total() / T::lit(data.len() as f64)
}

fn median<T: Real>(data: &[T]) -> T {
    let mut v = data.to_vec();
    let mid = v.len() / 2;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (lower, upper, _) = v.select_nth_unstable_by(mid, cmp);
    let upper = *upper;
    if data.len() % 2 == 1 {
        upper
    } else {
        let lower_max = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (lower_max + upper) / T::lit(2.0)
    }
}
