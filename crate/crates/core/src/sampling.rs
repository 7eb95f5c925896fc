//! Seeded generation of circular-bivariate Cauchy samples and their moduli.
//!
//! Draws `(δ1, δ2) + γ·C`, with `C` an isotropic standard bivariate Cauchy
//! vector obtained in polar form: the radius by inverting the radial CDF
//! `1 − 1/√(1 + r²)` and a uniform angle.
//!
//! # Streams
//!
//! The generator is ChaCha20 (`rand_chacha`), seeded with
//! `ChaCha20Rng::seed_from_u64(seed)`. Stream 0 carries batch-level draws
//! (the decomposition phase). Samples are produced in blocks of
//! [`BLOCK_LEN`]; block `b` uses stream `b + 1` and consumes two `Open01`
//! draws per sample (radius, then angle). Blocks are generated in parallel
//! and the output order equals the sequential order.

use std::f64::consts::TAU;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cauchy_rician::CrParams;
use crate::error::{Error, Result};

/// Recorded in output metadata so runs can be reproduced elsewhere.
pub const GENERATOR_ID: &str =
    "chacha20 (rand_chacha 0.9), seed_from_u64, stream 0 = batch, stream b+1 = block b of 65536";

pub const BLOCK_LEN: usize = 1 << 16;

/// Split of the unified location into real and imaginary components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocationDecomposition {
    pub delta1: f64,
    pub delta2: f64,
}

impl LocationDecomposition {
    pub fn new(delta1: f64, delta2: f64) -> Result<Self> {
        if !delta1.is_finite() || !delta2.is_finite() {
            return Err(Error::param(
                "delta1/delta2",
                delta1.hypot(delta2),
                "must be finite",
            ));
        }
        Ok(LocationDecomposition { delta1, delta2 })
    }

    /// `δ (cos φ, sin φ)`.
    pub fn from_polar(delta: f64, phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        LocationDecomposition {
            delta1: delta * c,
            delta2: delta * s,
        }
    }

    pub fn norm(&self) -> f64 {
        self.delta1.hypot(self.delta2)
    }

    fn check(&self, p: &CrParams<f64>) -> Result<()> {
        let norm = self.norm();
        if (norm - p.delta()).abs() > 1e-12 * p.delta().max(f64::MIN_POSITIVE) {
            return Err(Error::param(
                "location decomposition",
                norm,
                "norm does not match delta",
            ));
        }
        Ok(())
    }
}

/// A batch of generated amplitudes with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub amplitudes: Vec<f64>,
    pub seed: u64,
    pub params: CrParams<f64>,
    pub count: usize,
    /// Phase of the `(δ1, δ2)` decomposition used for this batch.
    pub phase: f64,
}

/// Inverse of the radial CDF `1 − γ/√(γ² + r²)`:
/// `r = γ √(1/(1−u)² − 1)`, evaluated as `γ √(u(2−u)) / (1−u)`.
pub fn sample_isotropic_cauchy_radius(u: f64, gamma: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(
            "sample_isotropic_cauchy_radius",
            u,
            "0 < u < 1",
        ));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", gamma, "must be finite and > 0"));
    }
    Ok(radius(u, gamma))
}

#[inline]
fn radius(u: f64, gamma: f64) -> f64 {
    gamma * (u * (2.0 - u)).sqrt() / (1.0 - u)
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "sample count must be positive"));
    }
    Ok(())
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Fills `out` block by block; `emit` maps a complex draw to an output value.
fn generate<T, F>(out: &mut [T], seed: u64, gamma: f64, loc: LocationDecomposition, emit: F)
where
    T: Send,
    F: Fn(f64, f64) -> T + Sync,
{
    out.par_chunks_mut(BLOCK_LEN)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = stream(seed, block as u64 + 1);
            for slot in chunk.iter_mut() {
                let u: f64 = rng.sample(Open01);
                let v: f64 = rng.sample(Open01);
                let r = radius(u, gamma);
                let (s, c) = (TAU * v).sin_cos();
                *slot = emit(loc.delta1 + r * c, loc.delta2 + r * s);
            }
        });
}

/// `n` complex draws `(δ1, δ2) + γ·C`, deterministic in `(seed, n, p, loc)`.
pub fn sample_complex(
    p: &CrParams<f64>,
    loc: LocationDecomposition,
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    check_count(n)?;
    loc.check(p)?;
    let mut out = vec![(0.0, 0.0); n];
    generate(&mut out, seed, p.gamma(), loc, |re, im| (re, im));
    Ok(out)
}

/// `n` amplitudes; the decomposition phase is drawn once per batch from
/// stream 0.
pub fn sample_amplitude(p: &CrParams<f64>, n: usize, seed: u64) -> Result<SampleBatch> {
    let phase = stream(seed, 0).sample::<f64, _>(Open01) * TAU;
    sample_amplitude_with_phase(p, n, seed, phase)
}

/// As [`sample_amplitude`] with a caller-chosen decomposition phase.
pub fn sample_amplitude_with_phase(
    p: &CrParams<f64>,
    n: usize,
    seed: u64,
    phase: f64,
) -> Result<SampleBatch> {
    check_count(n)?;
    let loc = LocationDecomposition::from_polar(p.delta(), phase);
    let mut amplitudes = vec![0.0; n];
    generate(&mut amplitudes, seed, p.gamma(), loc, f64::hypot);
    Ok(SampleBatch {
        amplitudes,
        seed,
        params: *p,
        count: n,
        phase,
    })
}
