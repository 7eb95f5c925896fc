//! Comparison models for SAR amplitudes: Rician, Weibull, log-normal and G0.
//!
//! Fitting methods:
//!
//! | model      | method                                                        |
//! |------------|---------------------------------------------------------------|
//! | log-normal | closed-form maximum likelihood                                |
//! | Weibull    | maximum likelihood, Newton iteration on the shape             |
//! | Rician     | mean/std inversion; Rayleigh when the ratio is at or below √(π/(4−π)) |
//! | G0         | log-cumulant matching with the number of looks fixed          |

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special_functions::{bessel_i0e, bessel_i1e, digamma, log_gamma, trigamma};
use crate::summation::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Rician,
    Weibull,
    LogNormal,
    G0,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Rician,
        BaselineKind::Weibull,
        BaselineKind::LogNormal,
        BaselineKind::G0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Rician => "rician",
            BaselineKind::Weibull => "weibull",
            BaselineKind::LogNormal => "lognormal",
            BaselineKind::G0 => "g0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineModel {
    Rician {
        nu: f64,
        sigma: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Amplitude G0 with roughness `alpha < 0`, scale `gamma > 0` and
    /// `looks ≥ 1`.
    G0 {
        alpha: f64,
        gamma: f64,
        looks: f64,
    },
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::param(name, v, "must be finite and > 0"));
    }
    Ok(())
}

impl BaselineModel {
    pub fn rician(nu: f64, sigma: f64) -> Result<Self> {
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::param("nu", nu, "must be finite and >= 0"));
        }
        positive("sigma", sigma)?;
        Ok(BaselineModel::Rician { nu, sigma })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        positive("shape", shape)?;
        positive("scale", scale)?;
        Ok(BaselineModel::Weibull { shape, scale })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param("mu", mu, "must be finite"));
        }
        positive("sigma", sigma)?;
        Ok(BaselineModel::LogNormal { mu, sigma })
    }

    pub fn g0(alpha: f64, gamma: f64, looks: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha >= 0.0 {
            return Err(Error::param("alpha", alpha, "must be finite and < 0"));
        }
        positive("gamma", gamma)?;
        if !looks.is_finite() || looks < 1.0 {
            return Err(Error::param("looks", looks, "must be finite and >= 1"));
        }
        Ok(BaselineModel::G0 {
            alpha,
            gamma,
            looks,
        })
    }

    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Rician { .. } => BaselineKind::Rician,
            BaselineModel::Weibull { .. } => BaselineKind::Weibull,
            BaselineModel::LogNormal { .. } => BaselineKind::LogNormal,
            BaselineModel::G0 { .. } => BaselineKind::G0,
        }
    }

    /// `(name, value)` pairs for reports.
    pub fn parameters(&self) -> Vec<(&'static str, f64)> {
        match *self {
            BaselineModel::Rician { nu, sigma } => vec![("nu", nu), ("sigma", sigma)],
            BaselineModel::Weibull { shape, scale } => vec![("shape", shape), ("scale", scale)],
            BaselineModel::LogNormal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            BaselineModel::G0 {
                alpha,
                gamma,
                looks,
            } => {
                vec![("alpha", alpha), ("gamma", gamma), ("looks", looks)]
            }
        }
    }
}

/// Density of a baseline model at `x` (`x > 0` for the log-normal).
pub fn baseline_pdf(m: &BaselineModel, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain("baseline_pdf", x, "finite x >= 0"));
    }
    match *m {
        BaselineModel::Rician { nu, sigma } => {
            let s2 = sigma * sigma;
            let z = x * nu / s2;
            // exp(-(x²+ν²)/2σ²) I0(z) = exp(-(x-ν)²/2σ²) I0e(z)
            Ok(x / s2 * (-(x - nu) * (x - nu) / (2.0 * s2)).exp() * bessel_i0e(z)?)
        }
        BaselineModel::Weibull { shape, scale } => {
            let t = x / scale;
            Ok(shape / scale * t.powf(shape - 1.0) * (-t.powf(shape)).exp())
        }
        BaselineModel::LogNormal { mu, sigma } => {
            if x == 0.0 {
                return Err(Error::domain("baseline_pdf (lognormal)", x, "x > 0"));
            }
            let z = (x.ln() - mu) / sigma;
            Ok((-0.5 * z * z).exp() / (x * sigma * (2.0 * PI).sqrt()))
        }
        BaselineModel::G0 {
            alpha,
            gamma,
            looks,
        } => {
            if x == 0.0 {
                return Ok(0.0);
            }
            let n = looks;
            let log_norm = 2f64.ln() + n * n.ln() + log_gamma(n - alpha)?
                - alpha * gamma.ln()
                - log_gamma(n)?
                - log_gamma(-alpha)?;
            let log_kernel = (2.0 * n - 1.0) * x.ln() - (n - alpha) * (gamma + n * x * x).ln();
            Ok((log_norm + log_kernel).exp())
        }
    }
}

/// Knobs for [`fit_baseline`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Number of looks held fixed in the G0 fit.
    pub g0_looks: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { g0_looks: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineFit {
    pub model: BaselineModel,
    pub method: &'static str,
}

pub fn fit_baseline(kind: BaselineKind, data: &[f64], opts: FitOptions) -> Result<BaselineFit> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let require_positive = kind != BaselineKind::Rician;
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() || value < 0.0 || (require_positive && value == 0.0) {
            return Err(Error::BadSample { index, value });
        }
    }
    match kind {
        BaselineKind::LogNormal => fit_lognormal(data),
        BaselineKind::Weibull => fit_weibull(data),
        BaselineKind::Rician => fit_rician(data),
        BaselineKind::G0 => fit_g0(data, opts.g0_looks),
    }
}

/// Mean and (population) variance of `ln x`.
fn log_moments(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data
        .iter()
        .map(|x| x.ln())
        .sum::<NeumaierSum<f64>>()
        .total()
        / n;
    let var = data
        .iter()
        .map(|x| (x.ln() - mean).powi(2))
        .sum::<NeumaierSum<f64>>()
        .total()
        / n;
    (mean, var)
}

fn fit_lognormal(data: &[f64]) -> Result<BaselineFit> {
    let (mu, var) = log_moments(data);
    let sigma = var.sqrt();
    if !(sigma > 1e-12 * mu.abs().max(1.0)) {
        return Err(Error::DegenerateFit {
            model: "lognormal",
            reason: "zero variance of log data",
            estimate: vec![mu, 0.0],
        });
    }
    Ok(BaselineFit {
        model: BaselineModel::lognormal(mu, sigma)?,
        method: "maximum likelihood (closed form)",
    })
}

const WEIBULL_TOL: f64 = 1e-10;
const WEIBULL_MAX_ITER: usize = 100;

fn fit_weibull(data: &[f64]) -> Result<BaselineFit> {
    let (log_mean, log_var) = log_moments(data);
    if !(log_var.sqrt() > 1e-12) {
        return Err(Error::DegenerateFit {
            model: "weibull",
            reason: "zero variance of log data",
            estimate: vec![f64::INFINITY, log_mean.exp()],
        });
    }
    // work on y = x / geometric mean, so mean(ln y) = 0
    let logs: Vec<f64> = data.iter().map(|x| x.ln() - log_mean).collect();
    // Gumbel moment guess: sd(ln x) = π / (k √6)
    let mut k = PI / (6f64.sqrt() * log_var.sqrt());
    for _ in 0..WEIBULL_MAX_ITER {
        let (mut s0, mut s1, mut s2) = (NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new());
        for &l in &logs {
            let w = (k * l).exp();
            s0.add(w);
            s1.add(w * l);
            s2.add(w * l * l);
        }
        let (s0, s1, s2) = (s0.total(), s1.total(), s2.total());
        let g = s1 / s0 - 1.0 / k;
        let dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        let mut next = k - g / dg;
        if !(next > 0.0) || !next.is_finite() {
            next = k / 2.0;
        }
        let converged = (next - k).abs() <= WEIBULL_TOL * k;
        k = next;
        if converged {
            let mean_pow = logs
                .iter()
                .map(|l| (k * l).exp())
                .sum::<NeumaierSum<f64>>()
                .total()
                / logs.len() as f64;
            let scale = log_mean.exp() * mean_pow.powf(1.0 / k);
            return Ok(BaselineFit {
                model: BaselineModel::weibull(k, scale)?,
                method: "maximum likelihood (Newton on shape)",
            });
        }
    }
    Err(Error::NonConvergence {
        what: "weibull shape",
        detail: format!("no convergence in {WEIBULL_MAX_ITER} Newton steps (last shape {k})"),
    })
}

/// Rayleigh value of mean/std, `√(π / (4 − π))`.
pub const RAYLEIGH_RATIO: f64 = 1.913_058_380_271_100_8;

/// `L_{1/2}(−θ²/2)`, so that the Rician mean is `σ √(π/2) L`.
fn laguerre_half(theta: f64) -> f64 {
    let t = theta * theta / 4.0;
    (1.0 + 2.0 * t) * bessel_i0e(t).unwrap_or(0.0) + 2.0 * t * bessel_i1e(t)
}

/// mean/std of a Rician with `ν/σ = θ`.
fn rician_ratio(theta: f64) -> f64 {
    let l = laguerre_half(theta);
    let mean = (PI / 2.0).sqrt() * l;
    let var = 2.0 + theta * theta - mean * mean;
    mean / var.max(f64::MIN_POSITIVE).sqrt()
}

fn fit_rician(data: &[f64]) -> Result<BaselineFit> {
    let n = data.len() as f64;
    let mean = data.iter().copied().sum::<NeumaierSum<f64>>().total() / n;
    let m2 = data.iter().map(|x| x * x).sum::<NeumaierSum<f64>>().total() / n;
    let var = data
        .iter()
        .map(|x| (x - mean).powi(2))
        .sum::<NeumaierSum<f64>>()
        .total()
        / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateFit {
            model: "rician",
            reason: "zero variance",
            estimate: vec![mean, 0.0],
        });
    }
    let ratio = mean / var.sqrt();
    if ratio <= RAYLEIGH_RATIO {
        return Ok(BaselineFit {
            model: BaselineModel::rician(0.0, (m2 / 2.0).sqrt())?,
            method: "moment inversion (Rayleigh boundary, nu = 0)",
        });
    }
    // the ratio grows monotonically in θ, roughly like θ for large θ
    let (mut lo, mut hi) = (0.0, ratio.max(2.0) * 2.0);
    while rician_ratio(hi) < ratio {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rician_ratio(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    let sigma = (m2 / (2.0 + theta * theta)).sqrt();
    Ok(BaselineFit {
        model: BaselineModel::rician(theta * sigma, sigma)?,
        method: "moment inversion (mean and variance)",
    })
}

/// Solves `ψ'(t) = target` for `t > 0` by bisection on `ln t`.
fn inverse_trigamma(target: f64) -> f64 {
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e12f64).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if trigamma(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn fit_g0(data: &[f64], looks: f64) -> Result<BaselineFit> {
    if !looks.is_finite() || looks < 1.0 {
        return Err(Error::param("looks", looks, "must be finite and >= 1"));
    }
    // ln Z = ½ (ln X + ln Y): X ~ Gamma(n, 1/n) speckle, Y ~ γ / Gamma(−α, 1)
    let (k1, k2) = log_moments(data);
    let target = 4.0 * k2 - trigamma(looks);
    if !(target > 0.0) {
        return Err(Error::NonConvergence {
            what: "g0 log-cumulant match",
            detail: format!(
                "log variance {k2:.6} is below the speckle floor {:.6} for {looks} looks",
                trigamma(looks) / 4.0
            ),
        });
    }
    let t = inverse_trigamma(target);
    let log_gamma_scale = 2.0 * k1 - digamma(looks) + looks.ln() + digamma(t);
    Ok(BaselineFit {
        model: BaselineModel::g0(-t, log_gamma_scale.exp(), looks)?,
        method: "log-cumulant matching (looks fixed)",
    })
}
