//! Pulse sequences, filter functions and the decoherence exponent χ.
//!
//! Under ideal π pulses the probe accumulates the phase
//! `φ = ∫₀ᵗ f(t′) ξ(t′) dt′` with `f = ±1` switching sign at each pulse. For
//! Gaussian noise `C = ⟨cos φ⟩ = e^{−χ}` with
//!
//! ```text
//! χ(t) = (1/π) ∫₀^∞ S_ω(ω) F(ωt) / ω² dω,    F(ωt) = ω² |f̃(ω)|² / 2
//! ```
//!
//! where `S_ω` is the internal two-sided density of ξ.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::SpectralModel;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Hahn,
    Cpmg,
}

/// A DD sequence with `n` π pulses at `(k − ½)τ` and total time `nτ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    pub n: u32,
    pub tau_s: f64,
}

impl PulseSequence {
    pub fn hahn(tau_s: f64) -> Result<Self> {
        Self::new(SequenceKind::Hahn, 1, tau_s)
    }

    pub fn cpmg(n: u32, tau_s: f64) -> Result<Self> {
        Self::new(SequenceKind::Cpmg, n, tau_s)
    }

    pub fn new(kind: SequenceKind, n: u32, tau_s: f64) -> Result<Self> {
        let seq = PulseSequence { kind, n, tau_s };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::param("n", "at least one pulse is required"));
        }
        if self.kind == SequenceKind::Hahn && self.n != 1 {
            return Err(Error::param("n", "a Hahn echo has exactly one pulse"));
        }
        if !(self.tau_s.is_finite() && self.tau_s > 0.0) {
            return Err(Error::param(
                "tau_s",
                format!("must be > 0, got {}", self.tau_s),
            ));
        }
        Ok(())
    }

    pub fn total_time(&self) -> f64 {
        f64::from(self.n) * self.tau_s
    }

    pub fn pulse_times(&self) -> Vec<f64> {
        (1..=self.n)
            .map(|k| (f64::from(k) - 0.5) * self.tau_s)
            .collect()
    }

    /// Centre of the fundamental passband, `ν = 1/(2τ)`.
    pub fn passband_hz(&self) -> f64 {
        0.5 / self.tau_s
    }
}

/// `(sin(mφ)/sin φ)²` with φ taken relative to the nearest odd multiple of
/// π/2 of `theta`; the ratio is evaluated by its series where `sin φ → 0`.
fn dirichlet_sq(m: f64, theta: f64) -> f64 {
    let k = (theta / PI - 0.5).round();
    let phi = theta - PI * (k + 0.5);
    if phi.abs() < 1e-5 {
        let r = m * (1.0 - (m * m - 1.0) * phi * phi / 6.0);
        r * r
    } else {
        let r = (m * phi).sin() / phi.sin();
        r * r
    }
}

/// The compact CPMG filter expression `8 sin²(x) sin⁴(x/4n) / cos²(x/2n)`.
///
/// The removable 0/0 points at `cos(x/2n) = 0` are evaluated by their limit.
/// This form does not equal `ω²|f̃|²/2` for the `(k−½)τ` pulse train (at
/// `n = 1`, `x = π` it gives 8 where the echo filter is 2); [`cpmg_filter`]
/// is the one that enters χ.
pub fn filter_value(n: u32, x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!(
            "filter argument must be >= 0, got {x}"
        )));
    }
    let n = f64::from(n.max(1));
    let s = (x / (4.0 * n)).sin();
    // |sin x / cos(x/2n)| = |sin(2nφ)/sin φ| with θ = x/2n.
    Ok(8.0 * s.powi(4) * dirichlet_sq(2.0 * n, x / (2.0 * n)))
}

/// Filter function `F(z) = z²|f̃|²/2` of an n-pulse CPMG train with pulses at
/// `(k−½)t/n`, at `z = ωt`.
///
/// Closed form: `8 sin⁴(z/4n) sin²(z/2)/cos²(z/2n)` for even `n`, with
/// `cos²(z/2)` in the numerator for odd `n`; both collapse to
/// `8 sin⁴(z/4n)·(sin(nφ)/sin φ)²`.
pub fn cpmg_filter(n: u32, z: f64) -> f64 {
    let n = f64::from(n.max(1));
    let s = (z / (4.0 * n)).sin();
    8.0 * s.powi(4) * dirichlet_sq(n, z / (2.0 * n))
}

/// Filter function of an arbitrary ±1 switching pattern, by direct summation
/// of the segment Fourier integrals. `switch_times` are fractions of the
/// total time in (0, 1).
pub fn filter_from_switches(switch_times: &[f64], z: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    let mut sign = 1.0;
    let mut prev = 0.0;
    for &s in switch_times.iter().chain(std::iter::once(&1.0)) {
        re += sign * ((z * s).cos() - (z * prev).cos());
        im += sign * ((z * s).sin() - (z * prev).sin());
        sign = -sign;
        prev = s;
    }
    0.5 * (re * re + im * im)
}

/// Quadrature settings for [`chi_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiOptions {
    pub rel_tol: f64,
    /// Upper integration limit in units of the filter period `4nπ`; beyond it
    /// `F` is replaced by its mean `2n+1`.
    pub periods: u32,
    pub max_intervals_per_segment: usize,
}

impl Default for ChiOptions {
    fn default() -> Self {
        ChiOptions {
            rel_tol: 1e-10,
            periods: 512,
            max_intervals_per_segment: 200,
        }
    }
}

/// χ with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiValue {
    pub value: f64,
    pub error: f64,
}

pub fn chi(model: &SpectralModel, seq: &PulseSequence) -> Result<f64> {
    chi_with(model, seq, &ChiOptions::default()).map(|c| c.value)
}

/// `χ(t) = (t/π) ∫₀^∞ S_ω(z/t) F(z)/z² dz` at `t = nτ`.
///
/// The integral is split at multiples of π (every zero of the oscillating
/// factors of `F` lies on one), each piece integrated adaptively, and the
/// part beyond `periods·4nπ` is added with `F` replaced by its mean; that
/// tail is evaluated with `u = 1/z`.
pub fn chi_with(model: &SpectralModel, seq: &PulseSequence, opts: &ChiOptions) -> Result<ChiValue> {
    model.validate()?;
    chi_of_density(|w| model.internal_psd(w), tail_limit(model), seq, opts)
}

/// [`chi_with`] for an arbitrary internal density `psd(ω)` whose limit at
/// infinite frequency is `psd_at_infinity`.
pub fn chi_of_density<P>(
    psd: P,
    psd_at_infinity: f64,
    seq: &PulseSequence,
    opts: &ChiOptions,
) -> Result<ChiValue>
where
    P: Fn(f64) -> f64,
{
    seq.validate()?;
    let t = seq.total_time();
    let n = seq.n;
    let integrand = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        psd(z / t) * cpmg_filter(n, z) / (z * z)
    };

    let period = 4.0 * PI * f64::from(n);
    let z_max = period * f64::from(opts.periods);
    let segments = (z_max / PI).round() as usize;

    let mut total: f64 = 0.0;
    let mut err = 0.0;
    let mut peak_segment: f64 = 0.0;
    for k in 0..segments {
        let a = k as f64 * PI;
        let b = a + PI;
        let (mut v, mut e) = quad::gk15(&integrand, a, b);
        let tol = opts.rel_tol * (total.abs() + v.abs()).max(peak_segment) * 1e-3;
        if e > tol {
            let q = quad::integrate(
                integrand,
                a,
                b,
                tol,
                opts.rel_tol * 1e-2,
                opts.max_intervals_per_segment,
            );
            if !q.converged {
                return Err(Error::Integration {
                    value: (total + q.value) * t / PI,
                    error_estimate: (err + q.error) * t / PI,
                });
            }
            v = q.value;
            e = q.error;
        }
        peak_segment = peak_segment.max(v.abs());
        total += v;
        err += e;
    }

    // ∫_{z_max}^∞ S(z/t)/z² dz = ∫_0^{1/z_max} S(1/(u t)) du
    let mean_f = 2.0 * f64::from(n) + 1.0;
    let tail_integrand = |u: f64| {
        if u <= 0.0 {
            psd_at_infinity
        } else {
            psd(1.0 / (u * t))
        }
    };
    let tq = quad::integrate(tail_integrand, 0.0, 1.0 / z_max, 0.0, 1e-10, 200);
    let tail = mean_f * tq.value;
    // Replacing F by its mean leaves an O(period/z_max) relative error.
    let tail_err = tail.abs() * 4.0 / f64::from(opts.periods) + mean_f * tq.error;

    let value = (total + tail) * t / PI;
    let error = (err + tail_err) * t / PI;
    if !value.is_finite() {
        return Err(Error::Integration {
            value,
            error_estimate: error,
        });
    }
    Ok(ChiValue {
        value: value.max(0.0),
        error,
    })
}

/// `lim_{u→0} S(1/(u t))`: the density at infinite frequency.
fn tail_limit(model: &SpectralModel) -> f64 {
    match *model {
        SpectralModel::White { level_rad2_per_s } => level_rad2_per_s,
        SpectralModel::PowerLaw { amplitude, alpha: 0.0 } => {
            crate::units::psd_report_to_internal(amplitude)
        }
        SpectralModel::PowerLaw { alpha, .. } if alpha < 0.0 => f64::INFINITY,
        _ => 0.0,
    }
}

/// `C = exp(−χ)`.
pub fn coherence_analytic(model: &SpectralModel, seq: &PulseSequence) -> Result<f64> {
    chi(model, seq).map(|c| (-c).exp())
}
