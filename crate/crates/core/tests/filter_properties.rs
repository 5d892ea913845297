use std::f64::consts::PI;

use ddspec::filter::{
    chi, chi_with, coherence_analytic, cpmg_filter, filter_from_switches, filter_value, ChiOptions,
    PulseSequence,
};
use ddspec::noise::SpectralModel;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn fixed(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0xf117e5),
        failure_persistence: None,
        ..Config::default()
    }
}

fn switches(n: u32) -> Vec<f64> {
    (1..=n)
        .map(|k| (f64::from(k) - 0.5) / f64::from(n))
        .collect()
}

#[test]
fn compact_form_limit_at_x_pi() {
    let at = filter_value(1, PI).unwrap();
    for d in [1e-6, -1e-6] {
        assert!((filter_value(1, PI + d).unwrap() - at).abs() < 1e-5);
    }
    assert!((at - 8.0).abs() < 1e-9);
}

#[test]
fn compact_form_limit_at_passband_centre() {
    let n = 4;
    let x = f64::from(n) * PI;
    let at = filter_value(n, x).unwrap();
    let lo = filter_value(n, x - 1e-6).unwrap();
    let hi = filter_value(n, x + 1e-6).unwrap();
    assert!(at.is_finite());
    assert!(
        ((lo + hi) / 2.0 - at).abs() <= 1e-6 * at.max(1.0),
        "{lo} {at} {hi}"
    );
}

#[test]
fn passband_centre_is_half_inverse_tau() {
    for n in [1u32, 2, 4, 8, 16, 32, 64] {
        // Weight F/z² entering χ, scanned over the first two filter periods.
        let nf = f64::from(n);
        let (mut best, mut arg) = (0.0, 0.0);
        let steps = 20_000;
        for k in 1..=steps {
            let z = 8.0 * nf * PI * k as f64 / steps as f64;
            let w = cpmg_filter(n, z) / (z * z);
            if w > best {
                best = w;
                arg = z;
            }
        }
        // z = ωt = nπ  ⇔  ν = 1/(2τ). The single echo has one broad lobe.
        if n == 1 {
            assert!(arg > PI && arg < 2.0 * PI, "peak at z = {arg}");
        } else {
            assert!(
                (arg / (nf * PI) - 1.0).abs() < 0.2,
                "n = {n}: peak at z = {arg}"
            );
        }
    }
}

#[test]
fn more_pulses_extend_coherence_for_slow_noise() {
    let m = SpectralModel::single(0.5, 50.0);
    let t = 4.0;
    let mut last = 0.0;
    for n in [1u32, 2, 4, 8, 16, 32] {
        let c = coherence_analytic(&m, &PulseSequence::cpmg(n, t / f64::from(n)).unwrap()).unwrap();
        assert!(c >= last - 1e-12, "n = {n}: {c} < {last}");
        last = c;
    }
}

proptest! {
    #![proptest_config(fixed(96))]

    #[test]
    fn filters_are_non_negative_and_vanish_at_zero(n in 1u32..128, x in 0.0..1e4f64) {
        prop_assert!(filter_value(n, x).unwrap() >= 0.0);
        prop_assert!(cpmg_filter(n, x) >= 0.0);
        prop_assert_eq!(filter_value(n, 0.0).unwrap(), 0.0);
        prop_assert_eq!(cpmg_filter(n, 0.0), 0.0);
    }

    #[test]
    fn closed_form_filter_matches_switching_sum(n in 1u32..64, z in 1e-3..2e3f64) {
        let a = cpmg_filter(n, z);
        let b = filter_from_switches(&switches(n), z);
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b), "{a} vs {b}");
    }

    #[test]
    fn compact_form_equals_its_literal_expression(n in 1u32..64, x in 0.0..500.0f64) {
        let nf = f64::from(n);
        let c = (x / (2.0 * nf)).cos();
        prop_assume!(c.abs() > 1e-3);
        let lit = 8.0 * x.sin().powi(2) * (x / (4.0 * nf)).sin().powi(4) / (c * c);
        let v = filter_value(n, x).unwrap();
        prop_assert!((v - lit).abs() <= 1e-8 * (1.0 + lit.abs()), "{v} vs {lit}");
    }
}

proptest! {
    #![proptest_config(fixed(16))]

    #[test]
    fn chi_is_additive_in_the_spectrum(
        b1 in 0.01..2.0f64, t1 in 0.05..20.0f64,
        b2 in 0.01..2.0f64, t2 in 1e-3..0.05f64,
        n in prop::sample::select(vec![1u32, 2, 8, 32]),
        tau in 0.01..2.0f64,
    ) {
        let seq = PulseSequence::cpmg(n, tau).unwrap();
        let sum = SpectralModel::DoubleLorentzian { b_hz: b1, tau_c_slow_s: t1, tau_c_fast_s: t2, b_fast_hz: Some(b2) };
        let a = chi(&sum, &seq).unwrap();
        let parts = chi(&SpectralModel::single(b1, t1), &seq).unwrap() + chi(&SpectralModel::single(b2, t2), &seq).unwrap();
        prop_assert!((a - parts).abs() <= 1e-8 * parts.max(1e-300), "{a} vs {parts}");
    }

    #[test]
    fn halving_tolerance_stays_within_error_estimate(
        b in 0.01..3.0f64, ts in 0.1..30.0f64, r in 2.0..100.0f64,
        n in prop::sample::select(vec![1u32, 4, 16, 64]),
        tau in 0.01..5.0f64,
    ) {
        let m = SpectralModel::double(b, ts, ts / r);
        let seq = PulseSequence::cpmg(n, tau).unwrap();
        let coarse = ChiOptions { rel_tol: 1e-8, ..ChiOptions::default() };
        let fine = ChiOptions { rel_tol: 5e-9, ..ChiOptions::default() };
        let a = chi_with(&m, &seq, &coarse).unwrap();
        let f = chi_with(&m, &seq, &fine).unwrap();
        prop_assert!((a.value - f.value).abs() <= a.error.max(f.error) + 1e-14 * a.value, "{a:?} {f:?}");
    }

    #[test]
    fn coherence_never_increases_along_a_decay(
        b in 0.01..3.0f64, ts in 0.1..30.0f64, r in 2.0..100.0f64, tau in 0.01..2.0f64,
    ) {
        let m = SpectralModel::double(b, ts, ts / r);
        let mut last = 1.0;
        for n in [1u32, 2, 4, 8, 16, 32, 64] {
            let c = coherence_analytic(&m, &PulseSequence::cpmg(n, tau).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c <= last + 1e-12);
            last = c;
        }
    }

    #[test]
    fn quasistatic_noise_is_refocused(
        b in 0.0..0.5f64, t in 1e-3..1.0f64,
        n in 1u32..64,
    ) {
        let m = SpectralModel::single(b, 1e6 * t);
        let c = coherence_analytic(&m, &PulseSequence::cpmg(n, t / f64::from(n)).unwrap()).unwrap();
        prop_assert!((1.0 - c).abs() < 1e-6, "C = {c}");
    }
}
