//! Distributional checks of the sampler against the density.

use cauchy_rician::cauchy_rician::{cdf, prob_between};
use cauchy_rician::goodness_of_fit::{
    cauchy_rician_cdf_sorted, chi_square_critical_value, chi_square_statistic, ks_critical_value,
    ks_statistic,
};
use cauchy_rician::sampling::{sample_amplitude, sample_amplitude_with_phase};
use cauchy_rician::CrParams;

#[test]
fn ks_against_numeric_cdf() {
    let p = CrParams::new(5.0, 20.0).unwrap();
    let mut x = sample_amplitude(&p, 1_000_000, 77).unwrap().amplitudes;
    x.sort_by(f64::total_cmp);
    let f = cauchy_rician_cdf_sorted(&p, &x).unwrap();
    let d = ks_statistic(&x, &f).unwrap();
    assert!(d < ks_critical_value(x.len(), 0.01), "D = {d}");
}

#[test]
fn unit_scale_cdf_at_one() {
    let p = CrParams::new(1.0, 0.0).unwrap();
    let n = 1_000_000;
    let x = sample_amplitude(&p, n, 78).unwrap().amplitudes;
    let frac = x.iter().filter(|&&v| v <= 1.0).count() as f64 / n as f64;
    let target = 1.0 - 1.0 / 2f64.sqrt();
    assert!((cdf(&p, 1.0).unwrap() - target).abs() < 1e-9);
    let se = (target * (1.0 - target) / n as f64).sqrt();
    assert!((frac - target).abs() < 3.0 * se);
}

/// Pearson test of amplitudes against bin masses from the density; bins are
/// log-spaced around the scale of the model and merged until each expects at
/// least 5 counts.
fn binned_chi_square(p: &CrParams<f64>, x: &[f64]) -> (f64, usize) {
    let scale = p.gamma() + p.delta();
    let mut edges = vec![0.0];
    edges.extend((0..=48).map(|i| scale * 1e-2 * 10f64.powf(i as f64 / 12.0)));
    let n = x.len() as f64;
    let mut probs: Vec<f64> = edges
        .windows(2)
        .map(|w| prob_between(p, w[0], w[1]).unwrap())
        .collect();
    let last = *edges.last().unwrap();
    probs.push(1.0 - cdf(p, last).unwrap());
    let mut counts = vec![0usize; probs.len()];
    for &v in x {
        let i = edges.partition_point(|&e| e < v).saturating_sub(1);
        counts[if v > last { probs.len() - 1 } else { i }] += 1;
    }
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o, mut e) = (0usize, 0.0);
    for (c, q) in counts.into_iter().zip(probs) {
        o += c;
        e += q * n;
        if e >= 5.0 {
            obs.push(o);
            exp.push(e);
            o = 0;
            e = 0.0;
        }
    }
    if let (Some(lo), Some(le)) = (obs.last_mut(), exp.last_mut()) {
        *lo += o;
        *le += e;
    }
    (chi_square_statistic(&obs, &exp).unwrap(), obs.len() - 1)
}

#[test]
fn histogram_matches_density() {
    for (i, &(g, d)) in [(1.0, 0.0), (5.0, 1.0), (20.0, 20.0), (100.0, 150.0)]
        .iter()
        .enumerate()
    {
        let p = CrParams::new(g, d).unwrap();
        let x = sample_amplitude(&p, 200_000, 300 + i as u64)
            .unwrap()
            .amplitudes;
        let (stat, df) = binned_chi_square(&p, &x);
        let crit = chi_square_critical_value(df, 0.01).unwrap();
        assert!(
            stat < crit,
            "({g}, {d}): chi2 {stat} with {df} df above {crit}"
        );
    }
}

#[test]
fn amplitude_law_does_not_depend_on_phase() {
    let p = CrParams::new(10.0, 30.0).unwrap();
    let n = 200_000;
    let mut a = sample_amplitude_with_phase(&p, n, 5, 0.3)
        .unwrap()
        .amplitudes;
    let mut b = sample_amplitude_with_phase(&p, n, 5, 2.1)
        .unwrap()
        .amplitudes;
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // two-sample KS
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < n {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 - j as f64).abs() / n as f64);
    }
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "D = {d}, critical {crit}");
}
