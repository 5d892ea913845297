use std::f64::consts::PI;

use ddspec::noise::{autocorrelation, evaluate_psd, sample_trajectory, SpectralModel};
use ddspec::periodogram::{log_bin, welch, Periodogram};
use ddspec::quad;
use ddspec::stats::moments;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn lag_covariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (0..n).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

#[test]
fn lag_one_autocorrelation_matches_exact_update() {
    let m = SpectralModel::single(1.0, 1.0);
    let tr = sample_trajectory(&m, 0.01, 1e4, 11).unwrap();
    let r1 = lag_covariance(&tr.samples, 1) / lag_covariance(&tr.samples, 0);
    let rho = (-0.01f64).exp();
    // Bartlett's variance of the lag-1 estimator for an AR(1) series.
    let se = ((1.0 - rho * rho) / tr.samples.len() as f64).sqrt();
    assert!(
        (r1 - rho).abs() < 3.0 * se,
        "r1 = {r1}, expected {rho} ± {se}"
    );
}

#[test]
fn mean_and_variance_converge_to_model() {
    let m = SpectralModel::double(1.0, 1.0, 0.1);
    let tr = sample_trajectory(&m, 0.01, 2e4, 5).unwrap();
    let var = 2.0 * (2.0 * PI * 1.0f64).powi(2);
    let mo = moments(&tr.samples);
    // Effective sample count from the integrated correlation time 2Στc/2.
    let n_eff = tr.duration() / (2.0 * 0.55);
    assert!(mo.mean.abs() < 3.0 * (var / n_eff).sqrt(), "{}", mo.mean);
    assert!(
        (mo.variance - var).abs() < 3.0 * var * (2.0 / n_eff).sqrt(),
        "{}",
        mo.variance
    );
}

/// Two-sided angular density of the exactly sampled OU chain, `σ²Δt(1−a²)/|1−a e^{−iωΔt}|²`.
fn ar1_density(var: f64, tau_c: f64, dt: f64, f: f64) -> f64 {
    let a = (-dt / tau_c).exp();
    let w = 2.0 * PI * f * dt;
    var * dt * (1.0 - a * a) / (1.0 - 2.0 * a * w.cos() + a * a)
}

#[test]
fn ensemble_periodogram_matches_spectrum() {
    let (b, tau_c, dt, n) = (1.0, 0.1, 0.01, 4096usize);
    let m = SpectralModel::single(b, tau_c);
    let var = (2.0 * PI * b).powi(2);
    let seeds = 120u64;
    let f_lo = 4.0 / (n as f64 * dt);
    let f_hi = 0.5 / dt;
    let mut per_seed: Vec<Vec<f64>> = Vec::new();
    let mut nus = Vec::new();
    for seed in 0..seeds {
        let tr = sample_trajectory(&m, dt, n as f64 * dt, 1000 + seed).unwrap();
        let p = welch(&tr.samples, dt, n).unwrap();
        let bins = log_bin(&p, 6, f_lo, f_hi);
        nus = bins.iter().map(|b| b.nu_hz).collect();
        per_seed.push(bins.iter().map(|b| b.density).collect());
    }
    // Oracle: the same bins of the discrete-time density on the FFT grid.
    let grid = Periodogram {
        freqs_hz: (1..=n / 2).map(|k| k as f64 / (n as f64 * dt)).collect(),
        density: (1..=n / 2)
            .map(|k| ar1_density(var, tau_c, dt, k as f64 / (n as f64 * dt)))
            .collect(),
        segments: 1,
    };
    let expect: Vec<f64> = log_bin(&grid, 6, f_lo, f_hi)
        .iter()
        .map(|b| b.density)
        .collect();
    assert_eq!(expect.len(), nus.len());
    for k in 0..nus.len() {
        let vals: Vec<f64> = per_seed.iter().map(|v| v[k]).collect();
        let mo = moments(&vals);
        let se = (mo.variance / seeds as f64).sqrt();
        assert!(
            (mo.mean - expect[k]).abs() < 3.0 * se,
            "ν = {:.3} Hz: {} vs {} ± {}",
            nus[k],
            mo.mean,
            expect[k],
            se
        );
    }
    // Far below Nyquist the discrete density is the continuous one.
    let s = evaluate_psd(&m, 1.0).unwrap();
    let internal = ar1_density(var, tau_c, dt, 1.0);
    assert!((ddspec::units::psd_internal_to_report(internal) / s - 1.0).abs() < 0.01);
}

#[test]
fn values_are_gaussian() {
    let m = SpectralModel::single(0.7, 0.1);
    let tr = sample_trajectory(&m, 0.01, 1e4, 3).unwrap();
    // Every 100th sample is ten correlation times apart.
    let x: Vec<f64> = tr.samples.iter().step_by(100).copied().collect();
    let n = x.len() as f64;
    let mo = moments(&x);
    assert!(
        mo.skewness.abs() < 3.0 * (6.0 / n).sqrt(),
        "skew {}",
        mo.skewness
    );
    assert!(
        mo.excess_kurtosis.abs() < 3.0 * (24.0 / n).sqrt(),
        "kurt {}",
        mo.excess_kurtosis
    );
}

#[test]
fn double_lorentzian_is_sum_of_independent_components() {
    let (b, ts, tf, dt) = (1.0, 1.0, 0.1, 0.01);
    let double = SpectralModel::double(b, ts, tf);
    let slow = SpectralModel::single(b, ts);
    let fast = SpectralModel::single(b, tf);
    let lags = [0usize, 5, 20, 100];
    let seeds = 300u64;
    let mut d = vec![Vec::new(); lags.len()];
    let mut s = vec![Vec::new(); lags.len()];
    for seed in 0..seeds {
        let x = sample_trajectory(&double, dt, 40.0, seed).unwrap().samples;
        let y1 = sample_trajectory(&slow, dt, 40.0, 10_000 + seed)
            .unwrap()
            .samples;
        let y2 = sample_trajectory(&fast, dt, 40.0, 20_000 + seed)
            .unwrap()
            .samples;
        let y: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        for (k, &lag) in lags.iter().enumerate() {
            d[k].push(lag_covariance(&x, lag));
            s[k].push(lag_covariance(&y, lag));
        }
    }
    for (k, &lag) in lags.iter().enumerate() {
        let (a, c) = (moments(&d[k]), moments(&s[k]));
        let se = ((a.variance + c.variance) / seeds as f64).sqrt();
        assert!(
            (a.mean - c.mean).abs() < 3.0 * se,
            "lag {lag}: {} vs {} ± {se}",
            a.mean,
            c.mean
        );
    }
}

fn fixed(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn lorentzian_models() -> impl Strategy<Value = SpectralModel> {
    prop_oneof![
        (0.0..10.0f64, 1e-3..1e2f64).prop_map(|(b, t)| SpectralModel::single(b, t)),
        (0.0..10.0f64, 1e-3..1e2f64, 1.0..1e3f64).prop_map(|(b, tf, r)| SpectralModel::double(
            b,
            tf * r,
            tf
        )),
    ]
}

proptest! {
    #![proptest_config(fixed(64))]

    #[test]
    fn psd_is_finite_and_non_negative(m in lorentzian_models(), nu in 0.0..1e6f64) {
        let s = evaluate_psd(&m, nu).unwrap();
        prop_assert!(s.is_finite() && s >= 0.0);
    }

    #[test]
    fn psd_integral_is_b_squared_per_component(b in 0.1..5.0f64, tf in 1e-2..1.0f64, r in 1.0..100.0f64) {
        let m = SpectralModel::double(b, tf * r, tf);
        // The density is per unit ω = 2πν; ω = tan(θ)/τf maps [0, ∞) onto [0, π/2).
        let g = |th: f64| {
            let c = th.cos();
            evaluate_psd(&m, th.tan() / (2.0 * PI * tf)).unwrap() / (tf * c * c)
        };
        let q = quad::integrate(g, 0.0, PI / 2.0, 0.0, 1e-10, 2000);
        prop_assert!((q.value / (2.0 * b * b) - 1.0).abs() < 1e-6, "{}", q.value);
    }

    #[test]
    fn zero_lag_correlation_is_total_variance(m in lorentzian_models()) {
        let var: f64 = match m {
            SpectralModel::SingleLorentzian { b_hz, .. } => b_hz * b_hz,
            SpectralModel::DoubleLorentzian { b_hz, .. } => 2.0 * b_hz * b_hz,
            _ => unreachable!(),
        };
        let c0 = autocorrelation(&m, 0.0).unwrap();
        prop_assert!((c0 - var).abs() <= 1e-12 * var.max(1.0));
        prop_assert!(autocorrelation(&m, 1e9).unwrap() < 1e-12 * var.max(1.0) + 1e-300);
    }
}
