//! Histogram KL scoring, the synthetic MSE grid experiment, the fit timing
//! benchmark, and KS / chi-square helpers.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::baselines::{baseline_pdf, fit_baseline, BaselineKind, FitOptions};
use crate::cauchy_rician::{cdf, pdf, prob_between, CrParams};
use crate::error::{Error, Result};
use crate::estimation::{choose_a, estimate, AMode, ParamEstimate};
use crate::sampling::sample_amplitude;
use crate::summation::NeumaierSum;

/// Upper end of the histogram range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperBound {
    /// Empirical quantile of the data, in `(0, 1]`.
    Quantile(f64),
    Fixed(f64),
}

/// Binning shared by KL scoring and plot-data output: `bin_count` equal bins
/// over `[0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub bin_count: usize,
    pub upper: UpperBound,
    pub floor_epsilon: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec {
            bin_count: 100,
            upper: UpperBound::Quantile(0.999),
            floor_epsilon: 1e-12,
        }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bin_count < 2 {
            return Err(Error::Config(format!(
                "bin_count must be >= 2, got {}",
                self.bin_count
            )));
        }
        match self.upper {
            UpperBound::Quantile(q) if !(q > 0.0 && q <= 1.0) => {
                return Err(Error::Config(format!(
                    "upper quantile must be in (0, 1], got {q}"
                )));
            }
            UpperBound::Fixed(u) if !(u > 0.0 && u.is_finite()) => {
                return Err(Error::Config(format!(
                    "upper bound must be finite and > 0, got {u}"
                )));
            }
            _ => {}
        }
        if !(self.floor_epsilon > 0.0 && self.floor_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "floor_epsilon must be in (0, 1), got {}",
                self.floor_epsilon
            )));
        }
        Ok(())
    }
}

/// Normalized histogram of the data falling in `[0, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub upper: f64,
    pub probabilities: Vec<f64>,
    /// Samples inside the range.
    pub counted: usize,
    /// Samples above `upper`, left out of the normalization.
    pub dropped: usize,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.upper / self.probabilities.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.probabilities.len())
            .map(|i| i as f64 * w)
            .collect()
    }
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::BadSample { index, value });
        }
    }
    Ok(())
}

/// Empirical quantile: the `⌈q·n⌉`-th smallest value.
fn empirical_quantile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, x, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *x
}

pub fn histogram(data: &[f64], spec: &HistogramSpec) -> Result<Histogram> {
    spec.validate()?;
    check_data(data)?;
    let upper = match spec.upper {
        UpperBound::Quantile(q) => empirical_quantile(data, q),
        UpperBound::Fixed(u) => u,
    };
    if !(upper > 0.0) {
        return Err(Error::Config(format!(
            "histogram upper bound {upper} is not positive (data concentrated at 0)"
        )));
    }
    let bins = spec.bin_count;
    let mut counts = vec![0usize; bins];
    let mut dropped = 0;
    for &x in data {
        if x > upper {
            dropped += 1;
        } else {
            let i = ((x / upper) * bins as f64) as usize;
            counts[i.min(bins - 1)] += 1;
        }
    }
    let counted = data.len() - dropped;
    let probabilities = counts.iter().map(|&c| c as f64 / counted as f64).collect();
    Ok(Histogram {
        upper,
        probabilities,
        counted,
        dropped,
    })
}

/// Sub-intervals of the per-bin trapezoid rule.
pub const TRAPEZOID_SUBINTERVALS: usize = 16;

/// Model mass in each of `bins` equal bins over `[0, upper]`, by the
/// composite trapezoid rule with [`TRAPEZOID_SUBINTERVALS`] panels per bin.
/// Non-finite or negative density values count as zero.
pub fn model_bin_masses<F: Fn(f64) -> f64>(model_pdf: F, upper: f64, bins: usize) -> Vec<f64> {
    let m = TRAPEZOID_SUBINTERVALS;
    let h = upper / (bins * m) as f64;
    let f = |x: f64| {
        let v = model_pdf(x);
        if v.is_finite() && v > 0.0 {
            v
        } else {
            0.0
        }
    };
    let values: Vec<f64> = (0..=bins * m).map(|j| f(j as f64 * h)).collect();
    (0..bins)
        .map(|b| {
            let s = &values[b * m..=(b + 1) * m];
            let inner: f64 = s[1..m].iter().sum();
            h * (0.5 * (s[0] + s[m]) + inner)
        })
        .collect()
}

/// `Σ p ln(p/q)` after flooring both vectors at `floor` and renormalizing.
pub fn kl_from_masses(p: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Config(format!(
            "mass vectors must be non-empty and equal length ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let floored = |v: &[f64]| {
        let w: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let (p, q) = (floored(p), floored(q));
    let kl = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<NeumaierSum<f64>>()
        .total();
    // Gibbs' inequality; only rounding can push the sum below zero
    Ok(kl.max(0.0))
}

/// Mass below which a model is considered to miss the data range entirely.
pub const MIN_MODEL_MASS: f64 = 1e-6;

/// KL(empirical histogram ‖ model) over the bins of `spec`.
pub fn kl_divergence<F: Fn(f64) -> f64>(
    data: &[f64],
    model_pdf: F,
    spec: &HistogramSpec,
) -> Result<f64> {
    let h = histogram(data, spec)?;
    let q = model_bin_masses(model_pdf, h.upper, spec.bin_count);
    let mass: f64 = q.iter().sum();
    if !(mass >= MIN_MODEL_MASS) {
        return Err(Error::DegenerateFit {
            model: "kl_divergence",
            reason: "model mass over the histogram range is below 1e-6",
            estimate: vec![mass],
        });
    }
    let q: Vec<f64> = q.iter().map(|x| x / mass).collect();
    kl_from_masses(&h.probabilities, &q, spec.floor_epsilon)
}

/// One row of a model comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model: &'static str,
    pub parameters: Vec<(&'static str, f64)>,
    pub method: &'static str,
    pub kl: Option<f64>,
    pub error: Option<String>,
}

/// Fitted parameters and KL scores for the Cauchy-Rician model and every
/// baseline on one data set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub histogram: HistogramSpec,
    pub cauchy_rician: Option<ParamEstimate<f64>>,
    pub scores: Vec<ModelScore>,
}

impl FitReport {
    pub fn score(&self, model: &str) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.model == model)
            .and_then(|s| s.kl)
    }
}

pub const CAUCHY_RICIAN_NAME: &str = "cauchy_rician";

/// Fits the Cauchy-Rician model (moment constant from `a_mode`) and all
/// baselines, and scores each by KL divergence. Per-model failures are
/// recorded in the row rather than aborting the comparison.
pub fn compare_models(
    data: &[f64],
    spec: &HistogramSpec,
    a_mode: AMode,
    opts: FitOptions,
) -> Result<FitReport> {
    spec.validate()?;
    check_data(data)?;
    let mut scores = Vec::with_capacity(1 + BaselineKind::ALL.len());

    let fit = choose_a(data, a_mode).and_then(|a| estimate(data, a));
    let cr_row = match &fit {
        Ok(est) => {
            let parameters = vec![
                ("gamma", est.gamma_hat),
                ("delta", est.delta_hat),
                ("a", est.a_used),
            ];
            let scored = CrParams::new(est.gamma_hat, est.delta_hat)
                .and_then(|p| kl_divergence(data, |x| pdf(&p, x).unwrap_or(0.0), spec));
            row(CAUCHY_RICIAN_NAME, parameters, "algebraic moments", scored)
        }
        Err(e) => row(
            CAUCHY_RICIAN_NAME,
            vec![],
            "algebraic moments",
            Err(clone_msg(e)),
        ),
    };
    scores.push(cr_row);

    for kind in BaselineKind::ALL {
        let r = match fit_baseline(kind, data, opts) {
            Ok(f) => {
                let scored =
                    kl_divergence(data, |x| baseline_pdf(&f.model, x).unwrap_or(0.0), spec);
                row(kind.name(), f.model.parameters(), f.method, scored)
            }
            Err(e) => row(kind.name(), vec![], "", Err(e)),
        };
        scores.push(r);
    }
    Ok(FitReport {
        n: data.len(),
        histogram: *spec,
        cauchy_rician: fit.ok(),
        scores,
    })
}

fn clone_msg(e: &Error) -> Error {
    Error::Config(e.to_string())
}

fn row(
    model: &'static str,
    parameters: Vec<(&'static str, f64)>,
    method: &'static str,
    kl: Result<f64>,
) -> ModelScore {
    match kl {
        Ok(v) => ModelScore {
            model,
            parameters,
            method,
            kl: Some(v),
            error: None,
        },
        Err(e) => ModelScore {
            model,
            parameters,
            method,
            kl: None,
            error: Some(e.to_string()),
        },
    }
}

/// `start, start + step, …` up to and including `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArithmeticGrid {
    pub start: f64,
    pub step: f64,
    pub end: f64,
}

impl ArithmeticGrid {
    pub fn new(start: f64, step: f64, end: f64) -> Result<Self> {
        let g = ArithmeticGrid { start, step, end };
        g.validate()?;
        Ok(g)
    }

    pub fn single(value: f64) -> Result<Self> {
        Self::new(value, 1.0, value)
    }

    pub fn validate(&self) -> Result<()> {
        let ArithmeticGrid { start, step, end } = *self;
        if !(start > 0.0 && step > 0.0 && end >= start && end.is_finite()) {
            return Err(Error::Config(format!(
                "grid {start}:{step}:{end} must be positive and increasing"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridExperimentConfig {
    pub gamma_grid: ArithmeticGrid,
    pub delta_grid: ArithmeticGrid,
    pub samples_per_cell: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub a_mode: AMode,
}

impl Default for GridExperimentConfig {
    fn default() -> Self {
        GridExperimentConfig {
            gamma_grid: ArithmeticGrid {
                start: 5.0,
                step: 5.0,
                end: 150.0,
            },
            delta_grid: ArithmeticGrid {
                start: 5.0,
                step: 5.0,
                end: 200.0,
            },
            samples_per_cell: 40_000,
            repeats: 1,
            master_seed: 0,
            a_mode: AMode::Mean,
        }
    }
}

impl GridExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gamma_grid.validate()?;
        self.delta_grid.validate()?;
        if self.samples_per_cell == 0 {
            return Err(Error::Config("samples_per_cell must be positive".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellRecord {
    pub gamma_true: f64,
    pub delta_true: f64,
    pub gamma_hat_mean: f64,
    pub delta_hat_mean: f64,
    pub gamma_mse: f64,
    pub delta_mse: f64,
    pub clamp_count: usize,
    pub gamma_nonpositive_count: usize,
}

impl CellRecord {
    pub fn gamma_relative_rmse(&self) -> f64 {
        self.gamma_mse.sqrt() / self.gamma_true
    }

    pub fn delta_relative_rmse(&self) -> f64 {
        self.delta_mse.sqrt() / self.delta_true
    }
}

/// Records are ordered row-major: gamma outer, delta inner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseSurface {
    pub config: GridExperimentConfig,
    pub records: Vec<CellRecord>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one grid cell repeat: SplitMix64 chained over
/// `master_seed, row, col, repeat`.
pub fn cell_seed(master_seed: u64, row: usize, col: usize, repeat: usize) -> u64 {
    [row as u64, col as u64, repeat as u64]
        .into_iter()
        .fold(splitmix64(master_seed), |h, v| splitmix64(h ^ v))
}

fn run_cell(
    cfg: &GridExperimentConfig,
    row: usize,
    col: usize,
    gamma: f64,
    delta: f64,
) -> Result<CellRecord> {
    let p = CrParams::new(gamma, delta)?;
    let (mut g_sum, mut d_sum) = (NeumaierSum::new(), NeumaierSum::new());
    let (mut g_sq, mut d_sq) = (NeumaierSum::new(), NeumaierSum::new());
    let (mut clamp_count, mut gamma_nonpositive_count) = (0, 0);
    for repeat in 0..cfg.repeats {
        let batch = sample_amplitude(
            &p,
            cfg.samples_per_cell,
            cell_seed(cfg.master_seed, row, col, repeat),
        )?;
        let a = choose_a(&batch.amplitudes, cfg.a_mode)?;
        let est = estimate(&batch.amplitudes, a)?;
        g_sum.add(est.gamma_hat);
        d_sum.add(est.delta_hat);
        g_sq.add((est.gamma_hat - gamma).powi(2));
        d_sq.add((est.delta_hat - delta).powi(2));
        clamp_count += est.diagnostics.delta_clamped as usize;
        gamma_nonpositive_count += est.diagnostics.gamma_nonpositive as usize;
    }
    let r = cfg.repeats as f64;
    Ok(CellRecord {
        gamma_true: gamma,
        delta_true: delta,
        gamma_hat_mean: g_sum.total() / r,
        delta_hat_mean: d_sum.total() / r,
        gamma_mse: g_sq.total() / r,
        delta_mse: d_sq.total() / r,
        clamp_count,
        gamma_nonpositive_count,
    })
}

/// Runs every `(gamma, delta)` cell in parallel. Each repeat of each cell is
/// seeded by [`cell_seed`], so the output does not depend on scheduling.
pub fn run_grid_experiment(cfg: &GridExperimentConfig) -> Result<MseSurface> {
    cfg.validate()?;
    let gammas = cfg.gamma_grid.values();
    let deltas = cfg.delta_grid.values();
    let cells: Vec<(usize, usize)> = (0..gammas.len())
        .flat_map(|r| (0..deltas.len()).map(move |c| (r, c)))
        .collect();
    let records = cells
        .par_iter()
        .map(|&(r, c)| run_cell(cfg, r, c, gammas[r], deltas[c]))
        .collect::<Result<Vec<_>>>()?;
    Ok(MseSurface {
        config: *cfg,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub logical_cpus: usize,
    pub threads_used: usize,
    pub optimized_build: bool,
    pub crate_version: &'static str,
}

impl MachineInfo {
    fn current(threads_used: usize) -> Self {
        MachineInfo {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads_used,
            optimized_build: !cfg!(debug_assertions),
            crate_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub n: usize,
    pub repeats: usize,
    pub gamma: f64,
    pub delta: f64,
    pub seed: u64,
    pub mean_us: f64,
    pub min_us: f64,
    pub median_us: f64,
    pub last_estimate: ParamEstimate<f64>,
    pub machine: MachineInfo,
}

/// Times `choose_a` + `estimate` on one pre-generated batch, `repeats`
/// times, on a dedicated single-thread pool. Sample generation is excluded.
pub fn benchmark_fit(
    n: usize,
    p: &CrParams<f64>,
    repeats: usize,
    seed: u64,
) -> Result<TimingReport> {
    if n == 0 {
        return Err(Error::Config(
            "benchmark sample count must be positive".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::Config("benchmark repeats must be positive".into()));
    }
    let data = sample_amplitude(p, n, seed)?.amplitudes;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build benchmark thread pool: {e}")))?;
    let (times, last) = pool.install(|| -> Result<(Vec<f64>, ParamEstimate<f64>)> {
        let mut times = Vec::with_capacity(repeats);
        let mut last = None;
        for _ in 0..repeats {
            let start = Instant::now();
            let a = choose_a(std::hint::black_box(&data), AMode::Mean)?;
            let est = estimate(&data, a)?;
            times.push(start.elapsed().as_secs_f64() * 1e6);
            last = Some(std::hint::black_box(est));
        }
        Ok((times, last.expect("repeats > 0")))
    })?;
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_us = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(TimingReport {
        n,
        repeats,
        gamma: p.gamma(),
        delta: p.delta(),
        seed,
        mean_us: times.iter().sum::<f64>() / repeats as f64,
        min_us: sorted[0],
        median_us,
        last_estimate: last,
        machine: MachineInfo::current(1),
    })
}

/// One-sample KS statistic for sorted data with the model CDF at each point.
pub fn ks_statistic(sorted: &[f64], cdf_values: &[f64]) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyData);
    }
    if sorted.len() != cdf_values.len() {
        return Err(Error::Config("ks_statistic: length mismatch".into()));
    }
    let n = sorted.len() as f64;
    Ok(cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| (f - i as f64 / n).max((i + 1) as f64 / n - f))
        .fold(0.0, f64::max))
}

/// Asymptotic one-sample KS critical value at level `alpha`, with the
/// Stephens small-sample correction.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    let sn = (n as f64).sqrt();
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (sn + 0.12 + 0.11 / sn)
}

/// Cauchy-Rician CDF at each point of sorted data, accumulated from the
/// masses between consecutive points. Chunks run in parallel, each anchored
/// by one direct CDF evaluation.
pub fn cauchy_rician_cdf_sorted(p: &CrParams<f64>, sorted: &[f64]) -> Result<Vec<f64>> {
    const CHUNK: usize = 4096;
    if sorted.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Config(
            "cauchy_rician_cdf_sorted: data must be sorted".into(),
        ));
    }
    let parts = sorted
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Vec<f64>> {
            let mut acc = NeumaierSum::new();
            acc.add(cdf(p, chunk[0])?);
            let mut out = Vec::with_capacity(chunk.len());
            out.push(acc.total());
            for w in chunk.windows(2) {
                if w[1] > w[0] {
                    acc.add(prob_between(p, w[0], w[1])?);
                }
                out.push(acc.total().min(1.0));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Pearson statistic `Σ (O − E)² / E`.
pub fn chi_square_statistic(observed: &[usize], expected: &[f64]) -> Result<f64> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Config(
            "chi_square_statistic: length mismatch".into(),
        ));
    }
    if let Some(e) = expected.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::Config(format!(
            "chi_square_statistic: expected count {e} must be > 0"
        )));
    }
    Ok(observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum())
}

/// Upper `alpha` quantile of the chi-square distribution with `df` degrees
/// of freedom.
pub fn chi_square_critical_value(df: usize, alpha: f64) -> Result<f64> {
    let dist = ChiSquared::new(df as f64)
        .map_err(|e| Error::Config(format!("chi-square with {df} degrees of freedom: {e}")))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}
