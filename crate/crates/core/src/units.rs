//! Conversion layer between report-facing values and internal dynamics.
//!
//! Reported spectra are one-sided densities of the frequency noise (in Hz)
//! per unit angular frequency, so that a Lorentzian component with coupling
//! `b` integrates to `b²`. Internally the detuning ξ(t) = 2π·δν(t) is used,
//! and its spectrum is the two-sided Fourier transform of the
//! autocorrelation, `S_ω(ω) = ∫ ⟨ξ(t)ξ(0)⟩ e^{-iωt} dt`.

use std::f64::consts::PI;

/// Hz → rad/s.
#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// rad/s → Hz.
#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Ratio `S_ω / S_report` between the internal two-sided angular density of
/// ξ and the reported one-sided density of δν.
///
/// One-sided in ω doubles, 2π·δν squares to 4π², and the `1/2π` of the
/// two-sided inverse transform contributes a further π.
pub const REPORT_TO_INTERNAL_PSD: f64 = 4.0 * PI * PI * PI;

#[inline]
pub fn psd_report_to_internal(s: f64) -> f64 {
    s * REPORT_TO_INTERNAL_PSD
}

#[inline]
pub fn psd_internal_to_report(s: f64) -> f64 {
    s / REPORT_TO_INTERNAL_PSD
}

pub const TESLA_PER_MICROTESLA: f64 = 1e-6;
pub const TESLA_PER_NANOTESLA: f64 = 1e-9;

#[inline]
pub fn microtesla(b: f64) -> f64 {
    b * TESLA_PER_MICROTESLA
}

#[inline]
pub fn to_nanotesla(b_t: f64) -> f64 {
    b_t / TESLA_PER_NANOTESLA
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips() {
        assert!((rad_to_hz(hz_to_rad(2.46)) - 2.46).abs() < 1e-15);
        assert!((psd_internal_to_report(psd_report_to_internal(3.0)) - 3.0).abs() < 1e-12);
        assert!((to_nanotesla(microtesla(1.0)) - 1000.0).abs() < 1e-9);
    }
}
