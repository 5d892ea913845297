use ddspec::bath::{
    build_bath, build_bath_from_positions, estimate_autocorrelation, evolve, fit_correlation_time,
    fit_two_exponentials, BathConfig, BathState, Geometry,
};
use ddspec::noise::{sample_trajectory, NoiseTrajectory, SpectralModel};
use ddspec::periodogram::{log_bin, welch};
use ddspec::spectroscopy::{compare_models, FitKind, SpectrumEstimate};
use ddspec::stats::moments;
use ddspec::Error;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn pair_bath(rate: f64, seed: u64) -> BathState {
    let cfg = BathConfig {
        n_spins: 2,
        frozen_core_radius_nm: 0.5,
        rate_slow_per_s: rate / 100.0,
        rate_fast_per_s: rate,
        pairing_cutoff_nm: 1.5,
        seed,
        ..BathConfig::default()
    };
    let mut b = build_bath_from_positions(&cfg, vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], |p| {
        if p.slow {
            cfg.rate_slow_per_s
        } else {
            cfg.rate_fast_per_s
        }
    })
    .unwrap();
    b.occupations = vec![1, -1];
    b
}

#[test]
fn single_pair_waiting_times_are_exponential() {
    let rate = 10.0;
    let mut b = pair_bath(rate, 4);
    let ft = evolve(&mut b, 1500.0, 1.0).unwrap();
    let n = ft.events.len();
    assert!(n >= 10_000, "{n} events");
    let gaps: Vec<f64> = ft.events.windows(2).map(|w| w[1].t - w[0].t).collect();
    let mo = moments(&gaps);
    let se = (1.0 / rate) / (gaps.len() as f64).sqrt();
    assert!(
        (mo.mean - 1.0 / rate).abs() < 3.0 * se,
        "{} vs {}",
        mo.mean,
        1.0 / rate
    );
}

#[test]
fn pair_occupation_correlation_is_telegraph() {
    let rate = 1.0;
    let dt = 0.01;
    let lags = [10usize, 25, 50, 100];
    let mut per_seed = vec![Vec::new(); lags.len()];
    for seed in 0..200 {
        let mut b = pair_bath(rate, seed);
        let a = b.couplings[0] - b.couplings[1];
        let ft = evolve(&mut b, 40.0, dt).unwrap();
        // ξ = (A₀ − A₁)·n₀ for an exchanging pair.
        let n0: Vec<f64> = ft.trajectory.samples.iter().map(|x| x / a).collect();
        for (k, &l) in lags.iter().enumerate() {
            let m = n0.len() - l;
            per_seed[k].push((0..m).map(|i| n0[i] * n0[i + l]).sum::<f64>() / m as f64);
        }
    }
    for (k, &l) in lags.iter().enumerate() {
        let mo = moments(&per_seed[k]);
        let se = (mo.variance / per_seed[k].len() as f64).sqrt();
        let expect = (-2.0 * rate * l as f64 * dt).exp();
        assert!(
            (mo.mean - expect).abs() < 3.0 * se,
            "lag {l}: {} vs {expect} ± {se}",
            mo.mean
        );
    }
}

fn white(n: usize) -> NoiseTrajectory {
    // Independent samples: an OU chain sampled 50 correlation times apart.
    let m = SpectralModel::single(1.0, 0.02);
    let full = sample_trajectory(&m, 0.002, n as f64, 8).unwrap();
    NoiseTrajectory {
        dt: 1.0,
        samples: full.samples.iter().step_by(500).copied().collect(),
        seed: 8,
        model_tag: "white".into(),
    }
}

#[test]
fn white_input_has_no_correlation() {
    let tr = white(20_000);
    let curve = estimate_autocorrelation(&tr, 50.0).unwrap();
    let var = curve.values[0];
    let n = tr.samples.len() as f64;
    for (lag, v) in curve.lags.iter().zip(&curve.values).skip(1) {
        assert!(
            v.abs() < 3.0 * var / (n - lag).sqrt() * 1.2,
            "lag {lag}: {v}"
        );
    }
}

#[test]
fn lag_zero_is_sample_variance() {
    let tr = white(2000);
    let curve = estimate_autocorrelation(&tr, 10.0).unwrap();
    let mo = moments(&tr.samples);
    let n = tr.samples.len() as f64;
    assert!((curve.values[0] - mo.variance * (n - 1.0) / n).abs() < 1e-9 * mo.variance);
}

#[test]
fn long_lags_are_rejected() {
    let tr = white(100);
    assert!(matches!(
        estimate_autocorrelation(&tr, 30.0),
        Err(Error::Estimation(_))
    ));
}

#[test]
fn ou_input_correlation_is_recovered() {
    let tau_c = 2.54;
    let m = SpectralModel::single(0.5, tau_c);
    let var = (2.0 * std::f64::consts::PI * 0.5f64).powi(2);
    let duration = 2000.0;
    let lags = [0.0, 1.0, 2.54, 5.0, 10.0];
    let mut per_seed = vec![Vec::new(); lags.len()];
    for seed in 0..40 {
        let tr = sample_trajectory(&m, 0.05, duration, 500 + seed).unwrap();
        let c = estimate_autocorrelation(&tr, 10.0).unwrap();
        for (k, &l) in lags.iter().enumerate() {
            per_seed[k].push(c.values[(l / 0.05f64).round() as usize]);
        }
    }
    // Removing the sample mean biases every lag by about −2σ²τc/T.
    let bias = 2.0 * var * tau_c / duration;
    for (k, &l) in lags.iter().enumerate() {
        let mo = moments(&per_seed[k]);
        let se = (mo.variance / per_seed[k].len() as f64).sqrt();
        let expect = var * (-l / tau_c).exp();
        assert!(
            (mo.mean - expect).abs() < 3.0 * se + bias,
            "lag {l}: {} vs {expect}",
            mo.mean
        );
    }
    let tr = sample_trajectory(&m, 0.05, duration, 1).unwrap();
    let fit = fit_correlation_time(&estimate_autocorrelation(&tr, 10.0).unwrap()).unwrap();
    assert!((fit.tau_c / tau_c - 1.0).abs() < 0.25, "{}", fit.tau_c);
}

#[test]
fn default_bath_rates_partition_and_spectrum_is_double_lorentzian() {
    let cfg = BathConfig::default();
    let mut b = build_bath(&cfg).unwrap();
    let dt = 5e-4;
    let ft = evolve(&mut b, 300.0, dt).unwrap();

    let (ratio, se) = ft.stats.rate_ratio();
    let expect = cfg.rate_slow_per_s / cfg.rate_fast_per_s;
    assert!(
        (ratio - expect).abs() < 3.0 * se,
        "{ratio} ± {se} vs {expect}"
    );

    let seg = 1 << 16;
    let p = welch(&ft.trajectory.samples, dt, seg).unwrap();
    let bins = log_bin(&p, 8, 2.0 / (seg as f64 * dt), 0.1 / dt);
    let spec = SpectrumEstimate::from_periodogram(&bins).unwrap();
    let ranked = compare_models(&spec).unwrap();
    assert_eq!(ranked[0].kind, FitKind::DoubleLorentzian);
    let norm = |k: FitKind| {
        ranked
            .iter()
            .find(|r| r.kind == k)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|f| f.residual_norm)
            .unwrap()
    };
    let (d, s) = (
        norm(FitKind::DoubleLorentzian),
        norm(FitKind::SingleLorentzian),
    );
    assert!(2.0 * d <= s, "double {d} vs single {s}");

    // Time domain: a second exponential improves the correlation fit.
    let curve = estimate_autocorrelation(&ft.trajectory, 2.0).unwrap();
    let one = fit_correlation_time(&curve).unwrap();
    let two = fit_two_exponentials(&curve).unwrap();
    assert!(two.residual_norm < one.residual_norm);
    assert!(two.tau_slow > 5.0 * two.tau_fast, "{two:?}");
}

fn fixed(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xba7),
        failure_persistence: None,
        ..Config::default()
    }
}

proptest! {
    #![proptest_config(fixed(24))]

    #[test]
    fn events_conserve_magnetization_and_respect_pairs(
        n in 2usize..40,
        density in 0.05..0.5f64,
        core in 0.5..3.0f64,
        cutoff in 1.0..4.0f64,
        slow in 0.01..1.0f64,
        fast_factor in 1.0..100.0f64,
        seed in 0u64..10_000,
    ) {
        let cfg = BathConfig {
            n_spins: n,
            geometry: Geometry::RandomUniformInSphere,
            density_per_nm3: density,
            frozen_core_radius_nm: core,
            rate_slow_per_s: slow,
            rate_fast_per_s: slow * fast_factor,
            pairing_cutoff_nm: cutoff,
            seed,
            ..BathConfig::default()
        };
        let mut b = build_bath(&cfg).unwrap();
        for p in &b.pairs {
            let (x, y) = (b.positions[p.i], b.positions[p.j]);
            let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
            prop_assert!(d <= cutoff);
            let slow_pair = b.in_core[p.i] || b.in_core[p.j];
            prop_assert_eq!(p.slow, slow_pair);
            prop_assert_eq!(p.rate, if slow_pair { cfg.rate_slow_per_s } else { cfg.rate_fast_per_s });
        }
        let ft = evolve(&mut b, 20.0 / cfg.rate_fast_per_s.max(0.1), 0.05).unwrap();
        let mut occ = ft.initial_occupations.clone();
        let total: i64 = occ.iter().map(|&v| i64::from(v)).sum();
        let mut last = ft.start_time;
        for e in &ft.events {
            prop_assert!(e.t >= last);
            last = e.t;
            prop_assert!(b.pairs.iter().any(|p| (p.i, p.j) == (e.i, e.j) || (p.j, p.i) == (e.i, e.j)));
            prop_assert_eq!(occ[e.i], -occ[e.j], "event on an aligned pair");
            occ.swap(e.i, e.j);
            prop_assert_eq!(occ.iter().map(|&v| i64::from(v)).sum::<i64>(), total);
        }
        prop_assert_eq!(occ, b.occupations.clone());
        prop_assert_eq!(b.magnetization(), total);
    }
}
