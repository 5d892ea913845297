use std::f64::consts::PI;

use ddspec::bath::{build_bath, BathConfig, Geometry};
use ddspec::coherence::{
    extract_t2, mc_coherence, mc_coherence_many, Amplitude, CoherenceCurve, CoherencePoint,
    McOptions, NoiseSource, Provenance, SequenceDescriptor,
};
use ddspec::filter::{coherence_analytic, PulseSequence, SequenceKind};
use ddspec::noise::SpectralModel;
use ddspec::quad;
use ddspec::stats::fit_line;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Hahn-echo exponent of OU noise with variance `s2` over total time `t`.
fn ou_echo_closed_form(s2: f64, tau_c: f64, t: f64) -> f64 {
    let x = t / tau_c;
    s2 * tau_c * tau_c * (x - 3.0 + 4.0 * (-x / 2.0).exp() - (-x).exp())
}

/// The same exponent as `½∬ s(u)s(v) σ²e^{−|u−v|/τc}`, integrated numerically.
fn ou_echo_double_integral(s2: f64, tau_c: f64, t: f64) -> f64 {
    let sign = |u: f64| if u < t / 2.0 { 1.0 } else { -1.0 };
    let inner = |u: f64| {
        let g = |v: f64| sign(v) * (-(u - v).abs() / tau_c).exp();
        // Split at the kink v = u and the sign jump v = t/2.
        let mut cuts = [0.0, u, t / 2.0, t];
        cuts.sort_by(f64::total_cmp);
        let total: f64 = cuts
            .windows(2)
            .map(|w| quad::integrate(g, w[0], w[1], 1e-15, 1e-12, 400).value)
            .sum();
        sign(u) * total
    };
    let left = quad::integrate(inner, 0.0, t / 2.0, 1e-14, 1e-10, 400).value;
    let right = quad::integrate(inner, t / 2.0, t, 1e-14, 1e-10, 400).value;
    0.5 * s2 * (left + right)
}

#[test]
fn echo_oracle_closed_form_agrees_with_double_integral() {
    for &t in &[0.1, 0.5, 1.0, 3.0, 10.0] {
        let a = ou_echo_closed_form(1.0, 1.0, t);
        let b = ou_echo_double_integral(1.0, 1.0, t);
        assert!((a - b).abs() < 1e-7 * a.max(1e-6), "t = {t}: {a} vs {b}");
    }
}

#[test]
fn hahn_echo_matches_ou_closed_form() {
    let b = 0.1;
    let s2 = (2.0 * PI * b).powi(2);
    let m = SpectralModel::single(b, 1.0);
    let taus: Vec<f64> = (0..6).map(|k| 0.1 * 100f64.powf(k as f64 / 5.0)).collect();
    let seqs: Vec<_> = taus
        .iter()
        .map(|&t| PulseSequence::hahn(t).unwrap())
        .collect();
    let est = mc_coherence_many(NoiseSource::Model(&m), &seqs, &McOptions::new(20_000, 3)).unwrap();
    for (t, e) in taus.iter().zip(&est) {
        let c = (-ou_echo_closed_form(s2, 1.0, *t)).exp();
        assert!(
            (e.c - c).abs() <= 3.0 * e.sigma_c + 1e-12,
            "τ = {t}: {} ± {} vs {c}",
            e.c,
            e.sigma_c
        );
    }
}

#[test]
fn strong_bath_sixteen_pulses_matches_analytic() {
    let m = SpectralModel::double(2.46, 2.54, 0.25);
    let seq = PulseSequence::cpmg(16, 0.5).unwrap();
    let e = mc_coherence(NoiseSource::Model(&m), &seq, &McOptions::new(100_000, 16)).unwrap();
    let c = coherence_analytic(&m, &seq).unwrap();
    assert!(
        (e.c - c).abs() <= 3.0 * e.sigma_c,
        "{} ± {} vs {c}",
        e.c,
        e.sigma_c
    );
    assert!(e.imag.abs() <= 3.0 * e.sigma_imag + 1e-12);
}

#[test]
fn white_noise_exponent_grows_linearly() {
    let s0 = 0.2;
    let m = SpectralModel::White {
        level_rad2_per_s: s0,
    };
    let taus = [0.5, 1.0, 2.0, 4.0, 8.0];
    let seqs: Vec<_> = taus
        .iter()
        .map(|&t| PulseSequence::cpmg(4, t).unwrap())
        .collect();
    let est = mc_coherence_many(NoiseSource::Model(&m), &seqs, &McOptions::new(50_000, 9)).unwrap();
    let t: Vec<f64> = seqs.iter().map(|s| s.total_time()).collect();
    let chi: Vec<f64> = est.iter().map(|e| -e.c.ln()).collect();
    let w: Vec<f64> = est.iter().map(|e| e.sigma_c / e.c).collect();
    // Weighted slope through the origin.
    let num: f64 = (0..t.len()).map(|k| t[k] * chi[k] / (w[k] * w[k])).sum();
    let den: f64 = (0..t.len()).map(|k| t[k] * t[k] / (w[k] * w[k])).sum();
    let (slope, se) = (num / den, 1.0 / den.sqrt());
    assert!((slope - s0 / 2.0).abs() < 3.0 * se, "slope {slope} ± {se}");
    // And the unweighted line has no offset beyond noise.
    let line = fit_line(&t, &chi).unwrap();
    assert!(line.intercept.abs() < 3.0 * line.intercept_stderr + 1e-3);
}

#[test]
fn t2_from_noisy_decays_is_calibrated() {
    let t2 = 73.8;
    let mut inside = 0;
    let runs = 60;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pts: Vec<CoherencePoint> = (1..=12)
            .map(|k| {
                let t = 15.0 * k as f64;
                CoherencePoint {
                    t_s: t,
                    c: (-t / t2).exp() + noise.sample(&mut rng),
                    sigma_c: 0.01,
                }
            })
            .collect();
        let curve = CoherenceCurve::new(
            pts,
            SequenceDescriptor {
                kind: SequenceKind::Cpmg,
                tau_s: None,
            },
            Provenance::ExternalData,
        )
        .unwrap();
        let fit = extract_t2(&curve, Amplitude::Fixed).unwrap();
        if (fit.t2 - t2).abs() <= 3.0 * fit.t2_stderr {
            inside += 1;
        }
    }
    // 3σ coverage is 99.7 %; allow a couple of excursions.
    assert!(inside >= runs - 2, "{inside}/{runs} within 3σ");
}

#[test]
fn frozen_bath_echo_refocuses() {
    let cfg = BathConfig {
        n_spins: 64,
        rate_slow_per_s: 1e-9,
        rate_fast_per_s: 1e-9,
        ..BathConfig::default()
    };
    let bath = build_bath(&cfg).unwrap();
    let seq = PulseSequence::cpmg(2, 0.5).unwrap();
    let e = mc_coherence(NoiseSource::Bath(&bath), &seq, &McOptions::new(500, 2)).unwrap();
    assert!((1.0 - e.c).abs() < 1e-6, "{}", e.c);
    // The refocused field is not trivially zero.
    assert!(bath.field_variance() > 0.0);
}

#[test]
fn bath_source_dephases_and_is_seed_deterministic() {
    let cfg = BathConfig {
        n_spins: 64,
        geometry: Geometry::RandomUniformInSphere,
        ..BathConfig::default()
    };
    let bath = build_bath(&cfg).unwrap();
    let seq = PulseSequence::cpmg(1, 0.2).unwrap();
    let a = mc_coherence(NoiseSource::Bath(&bath), &seq, &McOptions::new(400, 5)).unwrap();
    let b = mc_coherence(NoiseSource::Bath(&bath), &seq, &McOptions::new(400, 5)).unwrap();
    assert_eq!(a, b);
    assert!(a.c < 1.0);
}

#[cfg(feature = "parallel")]
#[test]
fn results_do_not_depend_on_worker_count() {
    let m = SpectralModel::double(1.0, 2.0, 0.1);
    let seqs: Vec<_> = [1u32, 8]
        .iter()
        .map(|&n| PulseSequence::cpmg(n, 0.3).unwrap())
        .collect();
    let opts = McOptions::new(3000, 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_coherence_many(NoiseSource::Model(&m), &seqs, &opts).unwrap())
    };
    assert_eq!(run(1), run(3));
}

fn fixed(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xc0de),
        failure_persistence: None,
        ..Config::default()
    }
}

proptest! {
    #![proptest_config(fixed(16))]

    #[test]
    fn mc_refocuses_quasistatic_noise(b in 0.0..0.5f64, t in 1e-2..1.0f64, n in 1u32..16) {
        let m = SpectralModel::single(b, 1e6 * t);
        let seq = PulseSequence::cpmg(n, t / f64::from(n)).unwrap();
        let e = mc_coherence(NoiseSource::Model(&m), &seq, &McOptions::new(200, 1).exact()).unwrap();
        prop_assert!((1.0 - e.c).abs() < 1e-6, "C = {}", e.c);
    }

    #[test]
    fn mc_agrees_with_analytic_on_random_models(
        b in 0.05..1.5f64, ts in 0.2..5.0f64, r in 2.0..50.0f64, tau in 0.02..2.0f64,
        n in prop::sample::select(vec![1u32, 4, 16]),
        seed in 0u64..1000,
    ) {
        let m = SpectralModel::double(b, ts, ts / r);
        let seq = PulseSequence::cpmg(n, tau).unwrap();
        let e = mc_coherence(NoiseSource::Model(&m), &seq, &McOptions::new(20_000, seed).exact()).unwrap();
        let c = coherence_analytic(&m, &seq).unwrap();
        // 4σ keeps the family-wise false alarm rate negligible over all cases.
        prop_assert!((e.c - c).abs() <= 4.0 * e.sigma_c + 1e-12, "{} ± {} vs {c}", e.c, e.sigma_c);
    }
}
