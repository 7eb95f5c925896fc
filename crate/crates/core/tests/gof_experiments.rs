//! KL scoring, grid experiment and benchmark behaviour at realistic sizes.

mod common;

use cauchy_rician::cauchy_rician::pdf;
use cauchy_rician::estimation::{choose_a, estimate};
use cauchy_rician::goodness_of_fit::{
    benchmark_fit, cell_seed, kl_divergence, run_grid_experiment, ArithmeticGrid,
    GridExperimentConfig, HistogramSpec,
};
use cauchy_rician::sampling::sample_amplitude;
use cauchy_rician::{AMode, CrParams};
use common::{
    BASELINE_DELTA_REL_RMSE_UNCLAMPED, BASELINE_GAMMA_REL_RMSE, BASELINE_SELF_FIT_KL_MAX,
    BASELINE_SELF_FIT_KL_MEAN,
};

#[test]
fn self_fit_kl_matches_oracle_level() {
    let p = CrParams::new(50.0, 100.0).unwrap();
    let spec = HistogramSpec::default();
    let kls: Vec<f64> = (0..50u64)
        .map(|r| {
            let x = sample_amplitude(&p, 40_000, 900 + r).unwrap().amplitudes;
            let est = estimate(&x, choose_a(&x, AMode::Mean).unwrap()).unwrap();
            let fitted = CrParams::new(est.gamma_hat, est.delta_hat).unwrap();
            kl_divergence(&x, |t| pdf(&fitted, t).unwrap(), &spec).unwrap()
        })
        .collect();
    let mean = kls.iter().sum::<f64>() / kls.len() as f64;
    let max = kls.iter().copied().fold(0.0, f64::max);
    assert!(mean < 1.25 * BASELINE_SELF_FIT_KL_MEAN, "mean KL {mean}");
    assert!(max < 1.5 * BASELINE_SELF_FIT_KL_MAX, "max KL {max}");
}

fn one_cell(gamma: f64, delta: f64, repeats: usize) -> GridExperimentConfig {
    GridExperimentConfig {
        gamma_grid: ArithmeticGrid::single(gamma).unwrap(),
        delta_grid: ArithmeticGrid::single(delta).unwrap(),
        samples_per_cell: 40_000,
        repeats,
        master_seed: 0,
        a_mode: AMode::Mean,
    }
}

#[test]
fn single_cell_mse_within_twice_baseline() {
    let (g, d, repeats) = (50.0, 100.0, 20);
    let cfg = one_cell(g, d, repeats);
    let r = run_grid_experiment(&cfg).unwrap().records[0];
    assert!(
        r.gamma_mse <= 2.0 * (BASELINE_GAMMA_REL_RMSE * g).powi(2),
        "gamma mse {}",
        r.gamma_mse
    );

    // A clamped run contributes δ² on its own, so the δ̂ MSE over 20 runs is
    // split into the clamp count and the MSE of the remaining runs.
    let p = CrParams::new(g, d).unwrap();
    let (mut sq, mut kept, mut all) = (0.0, 0usize, 0.0);
    for k in 0..repeats {
        let x = sample_amplitude(
            &p,
            cfg.samples_per_cell,
            cell_seed(cfg.master_seed, 0, 0, k),
        )
        .unwrap()
        .amplitudes;
        let est = estimate(&x, choose_a(&x, AMode::Mean).unwrap()).unwrap();
        let e2 = (est.delta_hat - d).powi(2);
        all += e2;
        if !est.diagnostics.delta_clamped {
            sq += e2;
            kept += 1;
        }
    }
    assert!(
        (all / repeats as f64 - r.delta_mse).abs() <= 1e-9 * r.delta_mse,
        "grid runs not reproduced"
    );
    // oracle clamp rate ≤ 0.9%: P(more than 2 of 20) < 1e-3
    assert!(r.clamp_count <= 2, "{} clamps", r.clamp_count);
    let unclamped_mse = sq / kept as f64;
    let baseline = (BASELINE_DELTA_REL_RMSE_UNCLAMPED * d).powi(2);
    assert!(
        unclamped_mse <= 2.0 * baseline,
        "unclamped delta mse {unclamped_mse}"
    );
}

#[test]
fn oscillation_region_is_worse() {
    let unstable = run_grid_experiment(&one_cell(150.0, 5.0, 50))
        .unwrap()
        .records[0];
    let stable = run_grid_experiment(&one_cell(50.0, 100.0, 50))
        .unwrap()
        .records[0];
    assert!(unstable.clamp_count > stable.clamp_count);
    // absolute and relative δ̂ dispersion
    assert!(unstable.delta_mse > stable.delta_mse);
    assert!(unstable.delta_relative_rmse() > stable.delta_relative_rmse());
}

#[test]
fn fit_time_scales_linearly() {
    let p = CrParams::new(50.0, 100.0).unwrap();
    let small = benchmark_fit(4_000, &p, 300, 1).unwrap();
    let large = benchmark_fit(40_000, &p, 300, 1).unwrap();
    let ratio = large.min_us / small.min_us;
    assert!(
        (5.0..=20.0).contains(&ratio),
        "time ratio {ratio} ({} us vs {} us)",
        large.min_us,
        small.min_us
    );
}
