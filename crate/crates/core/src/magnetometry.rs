//! Two-pulse echo magnetometry of a synchronized ac field.
//!
//! The ac field `B_ac·sin(2πνt + offset)` with `ν = 1/(2τ)` imprints a phase
//! on the echo, read out in quadrature as `X/R = sin φ`, `Y/R = cos φ`.
//!
//! [`echo_phase`] uses the closed form `φ = πτS₁B_ac`, the convention in
//! which `S₁` is back-solved from a measured phase response. Integrating the
//! sign-weighted field directly gives `(4/π)τS₁B_ac` instead
//! ([`echo_phase_integral`], checked by [`echo_phase_quadrature`]); the two
//! differ by the constant [`COMPACT_TO_INTEGRAL`] = π²/4, which only rescales
//! the meaning of `S₁`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng;
use crate::stats;

/// `echo_phase / echo_phase_integral`.
pub const COMPACT_TO_INTEGRAL: f64 = PI * PI / 4.0;

/// Phase response of the 200 G demonstration, rad/T.
pub const DEMO_SLOPE_RAD_PER_T: f64 = 3.376e6;
/// Half echo time of the 200 G demonstration, s.
pub const DEMO_TAU_S: f64 = 0.666;
/// Echo coherence time at the 200 G working point, s.
pub const DEMO_T2_S: f64 = 1.44;
/// Phase noise per sweep point in the 200 G demonstration, rad.
pub const DEMO_DELTA_PHI_RAD: f64 = 0.016;
/// Measurements averaged per sweep point.
pub const DEMO_REPEATS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkingPoint {
    ZefozNear,
    Offset200g,
    Offset6g,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// First-order Zeeman coefficient, rad·s⁻¹·T⁻¹.
    pub s1_rad_per_s_t: f64,
    /// Second-order coefficient, rad·s⁻¹·T⁻²; metadata only.
    #[serde(default)]
    pub s2_rad_per_s_t2: f64,
    /// Transition frequency at the bias field, rad/s; metadata only.
    #[serde(default)]
    pub omega0_rad_per_s: f64,
    pub t2_s: f64,
    pub working_point: WorkingPoint,
    /// Phase of the ac field relative to the sequence start, rad.
    #[serde(default)]
    pub phase_offset_rad: f64,
}

impl SensorConfig {
    /// Sensor with `S₁` back-solved from a measured phase response at
    /// half echo time `tau`: `S₁ = slope/(πτ)`.
    pub fn from_slope(
        slope_rad_per_t: f64,
        tau_s: f64,
        t2_s: f64,
        working_point: WorkingPoint,
    ) -> Self {
        SensorConfig {
            s1_rad_per_s_t: slope_rad_per_t / (PI * tau_s),
            s2_rad_per_s_t2: 0.0,
            omega0_rad_per_s: 0.0,
            t2_s,
            working_point,
            phase_offset_rad: 0.0,
        }
    }

    /// The 200 G working point of the 0.75 Hz demonstration.
    pub fn offset_200g() -> Self {
        Self::from_slope(
            DEMO_SLOPE_RAD_PER_T,
            DEMO_TAU_S,
            DEMO_T2_S,
            WorkingPoint::Offset200g,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2_s > 0.0 && self.t2_s.is_finite()) {
            return Err(Error::param(
                "t2_s",
                format!("must be > 0, got {}", self.t2_s),
            ));
        }
        if !self.s1_rad_per_s_t.is_finite() {
            return Err(Error::param("s1_rad_per_s_t", "must be finite"));
        }
        if !self.phase_offset_rad.is_finite() {
            return Err(Error::param("phase_offset_rad", "must be finite"));
        }
        Ok(())
    }

    /// `S₁` in Hz/T.
    pub fn s1_hz_per_t(&self) -> f64 {
        self.s1_rad_per_s_t / (2.0 * PI)
    }

    /// Phase response `dφ/dB_ac`, rad/T.
    pub fn slope(&self, tau_s: f64) -> f64 {
        PI * tau_s * self.s1_rad_per_s_t * self.phase_offset_rad.cos()
    }

    /// Echo amplitude `exp(−2τ/T₂)`.
    pub fn envelope(&self, tau_s: f64) -> f64 {
        (-2.0 * tau_s / self.t2_s).exp()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::param("tau_s", format!("must be > 0, got {tau}")))
    }
}

/// `φ = πτS₁B_ac·cos(offset)`.
pub fn echo_phase(sensor: &SensorConfig, tau_s: f64, b_ac_t: f64) -> Result<f64> {
    sensor.validate()?;
    check_tau(tau_s)?;
    Ok(sensor.slope(tau_s) * b_ac_t)
}

/// `∫₀^{2τ} s(t)·S₁B_ac sin(πt/τ + offset) dt = (4/π)τS₁B_ac·cos(offset)`.
pub fn echo_phase_integral(sensor: &SensorConfig, tau_s: f64, b_ac_t: f64) -> Result<f64> {
    Ok(echo_phase(sensor, tau_s, b_ac_t)? / COMPACT_TO_INTEGRAL)
}

/// [`echo_phase_integral`] by adaptive quadrature of the sign-weighted field.
pub fn echo_phase_quadrature(sensor: &SensorConfig, tau_s: f64, b_ac_t: f64) -> Result<f64> {
    sensor.validate()?;
    check_tau(tau_s)?;
    let amp = sensor.s1_rad_per_s_t * b_ac_t;
    let w = PI / tau_s;
    let f = |t: f64| amp * (w * t + sensor.phase_offset_rad).sin();
    let scale = amp.abs() * tau_s;
    let before = quad::integrate(f, 0.0, tau_s, 1e-15 * scale, 1e-13, 200);
    let after = quad::integrate(f, tau_s, 2.0 * tau_s, 1e-15 * scale, 1e-13, 200);
    if !(before.converged && after.converged) {
        return Err(Error::Integration {
            value: before.value - after.value,
            error_estimate: before.error + after.error,
        });
    }
    Ok(before.value - after.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingPoint {
    pub b_ac_t: f64,
    pub x_over_r: f64,
    pub y_over_r: f64,
    /// Unwrapped `atan2(X, Y)`.
    pub phi_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingRun {
    pub tau_s: f64,
    pub nu_op_hz: f64,
    pub points: Vec<SensingPoint>,
    pub repeats: u32,
    /// Measurement time per sweep point, `repeats·2τ`.
    pub t_total_s: f64,
    /// `exp(−2τ/T₂)` carried by the raw amplitude `R`.
    pub envelope: f64,
    pub readout_sigma: f64,
}

/// Maps an angle difference into `(−π, π]`.
fn wrap(d: f64) -> f64 {
    let r = (d + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Unwraps a phase sequence so adjacent values differ by at most π.
pub fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(phases.len());
    for (k, &p) in phases.iter().enumerate() {
        match out.last() {
            None => out.push(p),
            Some(&prev) => out.push(prev + wrap(p - phases[k - 1])),
        }
    }
    out
}

/// Simulated quadrature readout over a sweep of ac amplitudes, with additive
/// Gaussian noise `readout_sigma` on each normalized quadrature.
pub fn simulate_sweep(
    sensor: &SensorConfig,
    tau_s: f64,
    b_ac_t: &[f64],
    readout_sigma: f64,
    repeats: u32,
    seed: u64,
) -> Result<SensingRun> {
    sensor.validate()?;
    check_tau(tau_s)?;
    if !(readout_sigma >= 0.0 && readout_sigma.is_finite()) {
        return Err(Error::param(
            "readout_sigma",
            format!("must be >= 0, got {readout_sigma}"),
        ));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "magnetometry/readout"), 0);
    let mut raw = Vec::with_capacity(b_ac_t.len());
    for &b in b_ac_t {
        let phi = echo_phase(sensor, tau_s, b)?;
        let (s, c) = phi.sin_cos();
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        raw.push((b, s + readout_sigma * nx, c + readout_sigma * ny));
    }
    let wrapped: Vec<f64> = raw.iter().map(|&(_, x, y)| x.atan2(y)).collect();
    let phis = unwrap(&wrapped);
    Ok(SensingRun {
        tau_s,
        nu_op_hz: 1.0 / (2.0 * tau_s),
        points: raw
            .iter()
            .zip(phis)
            .map(|(&(b, x, y), phi)| SensingPoint {
                b_ac_t: b,
                x_over_r: x,
                y_over_r: y,
                phi_rad: phi,
            })
            .collect(),
        repeats: repeats.max(1),
        t_total_s: f64::from(repeats.max(1)) * 2.0 * tau_s,
        envelope: sensor.envelope(tau_s),
        readout_sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseFit {
    /// rad/T.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Largest wrapped phase step between adjacent sweep points that still
/// unwraps unambiguously.
pub const MAX_UNWRAP_STEP: f64 = 0.75 * PI;

/// Ordinary least squares of the unwrapped phase against `B_ac`.
pub fn fit_response(run: &SensingRun) -> Result<ResponseFit> {
    if run.points.len() < 5 {
        return Err(Error::SamplingDensity(format!(
            "need at least 5 sweep points, got {}",
            run.points.len()
        )));
    }
    let wrapped: Vec<f64> = run
        .points
        .iter()
        .map(|p| p.x_over_r.atan2(p.y_over_r))
        .collect();
    for (k, w) in wrapped.windows(2).enumerate() {
        let d = wrap(w[1] - w[0]);
        if d.abs() > MAX_UNWRAP_STEP {
            return Err(Error::SamplingDensity(format!(
                "phase step {d:.3} rad between points {k} and {} is ambiguous",
                k + 1
            )));
        }
    }
    let phis = unwrap(&wrapped);
    let b: Vec<f64> = run.points.iter().map(|p| p.b_ac_t).collect();
    let fit = stats::fit_line(&b, &phis)
        .ok_or_else(|| Error::SamplingDensity("sweep amplitudes are degenerate".into()))?;
    Ok(ResponseFit {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        residuals: fit.residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub delta_b_min_t: f64,
    /// T/√Hz.
    pub eta_t_per_sqrt_hz: f64,
}

/// `δB_min = δφ/slope`, `η = δB_min·√T_total`.
pub fn sensitivity(
    delta_phi_rad: f64,
    slope_rad_per_t: f64,
    t_total_s: f64,
) -> Result<Sensitivity> {
    if !(delta_phi_rad >= 0.0 && delta_phi_rad.is_finite()) {
        return Err(Error::param(
            "delta_phi_rad",
            format!("must be >= 0, got {delta_phi_rad}"),
        ));
    }
    if slope_rad_per_t == 0.0 {
        return Err(Error::InsensitiveConfiguration(
            "zero phase response (first-order insensitive working point)".into(),
        ));
    }
    if !(slope_rad_per_t > 0.0 && slope_rad_per_t.is_finite()) {
        return Err(Error::param(
            "slope",
            format!("must be > 0, got {slope_rad_per_t}"),
        ));
    }
    if !(t_total_s > 0.0 && t_total_s.is_finite()) {
        return Err(Error::param(
            "t_total_s",
            format!("must be > 0, got {t_total_s}"),
        ));
    }
    let db = delta_phi_rad / slope_rad_per_t;
    Ok(Sensitivity {
        delta_b_min_t: db,
        eta_t_per_sqrt_hz: db * t_total_s.sqrt(),
    })
}

/// Operating conditions for the low-frequency (66 mHz) scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowFrequencyScenario {
    pub sensor: SensorConfig,
    pub tau_s: f64,
    /// Phase noise per point, rad.
    pub delta_phi_rad: f64,
    pub repeats: u32,
}

impl LowFrequencyScenario {
    /// Working point `bias_offset_g` above the insensitive field, operated at
    /// `nu_op_hz`, derived from the 200 G demonstration:
    ///
    /// - `S₁` scales linearly with the offset (quadratic Zeeman shift);
    /// - the echo is read out at the same fraction `2τ/T₂` of the coherence
    ///   time, so the echo amplitude and therefore the phase noise per point
    ///   are unchanged;
    /// - each point averages the same number of measurements.
    pub fn new(bias_offset_g: f64, nu_op_hz: f64) -> Self {
        let base = SensorConfig::offset_200g();
        let tau = 1.0 / (2.0 * nu_op_hz);
        let readout_fraction = 2.0 * DEMO_TAU_S / DEMO_T2_S;
        let sensor = SensorConfig {
            s1_rad_per_s_t: base.s1_rad_per_s_t * bias_offset_g / 200.0,
            t2_s: 2.0 * tau / readout_fraction,
            working_point: if bias_offset_g == 6.0 {
                WorkingPoint::Offset6g
            } else {
                WorkingPoint::Custom
            },
            ..base
        };
        LowFrequencyScenario {
            sensor,
            tau_s: tau,
            delta_phi_rad: DEMO_DELTA_PHI_RAD * base.envelope(DEMO_TAU_S) / sensor.envelope(tau),
            repeats: DEMO_REPEATS,
        }
    }

    /// The 6 G, 66 mHz example.
    pub fn offset_6g() -> Self {
        Self::new(6.0, 0.066)
    }

    pub fn t_total_s(&self) -> f64 {
        f64::from(self.repeats) * 2.0 * self.tau_s
    }

    pub fn sensitivity(&self) -> Result<Sensitivity> {
        sensitivity(
            self.delta_phi_rad,
            self.sensor.slope(self.tau_s),
            self.t_total_s(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units;

    #[test]
    fn zero_field_zero_phase() {
        let s = SensorConfig::offset_200g();
        assert_eq!(echo_phase(&s, 0.666, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn back_solved_s1() {
        let s = SensorConfig::offset_200g();
        // 1.614 rad·s⁻¹·µT⁻¹
        assert!((s.s1_rad_per_s_t * units::TESLA_PER_MICROTESLA - 1.614).abs() < 5e-4);
        let slope = echo_phase(&s, 0.666, units::microtesla(1.0)).unwrap();
        assert!((slope - 3.376).abs() < 1e-12);
        let phi = echo_phase(&s, 0.666, units::microtesla(0.9306)).unwrap();
        assert!((phi - PI).abs() < 1e-3);
    }

    #[test]
    fn quadrature_matches_integral_form() {
        let mut s = SensorConfig::offset_200g();
        for &tau in &[1e-3, 0.05, 0.666, 7.0, 100.0] {
            for &offset in &[0.0, 0.4] {
                s.phase_offset_rad = offset;
                let b = units::microtesla(0.37);
                let q = echo_phase_quadrature(&s, tau, b).unwrap();
                let c = echo_phase_integral(&s, tau, b).unwrap();
                assert!((q / c - 1.0).abs() < 1e-9, "tau {tau}: {q} vs {c}");
                let compact = echo_phase(&s, tau, b).unwrap();
                assert!((compact / c - COMPACT_TO_INTEGRAL).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_quadratures_are_normalized() {
        let s = SensorConfig::offset_200g();
        let bs: Vec<f64> = (0..40)
            .map(|k| units::microtesla(0.05 * k as f64))
            .collect();
        let run = simulate_sweep(&s, 0.666, &bs, 0.0, 4, 1).unwrap();
        assert_eq!((run.points[0].x_over_r, run.points[0].y_over_r), (0.0, 1.0));
        for p in &run.points {
            assert!((p.x_over_r.powi(2) + p.y_over_r.powi(2) - 1.0).abs() < 1e-12);
        }
        assert_eq!(run.nu_op_hz * 2.0 * run.tau_s, 1.0);
        let fit = fit_response(&run).unwrap();
        assert!((fit.slope / 3.376e6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_point_sweep_is_rejected() {
        let s = SensorConfig::offset_200g();
        let run = simulate_sweep(&s, 0.666, &[1e-7], 0.0, 4, 1).unwrap();
        assert!(matches!(fit_response(&run), Err(Error::SamplingDensity(_))));
    }

    #[test]
    fn coarse_sweep_is_rejected() {
        let s = SensorConfig::offset_200g();
        let bs: Vec<f64> = (0..8).map(|k| units::microtesla(0.8 * k as f64)).collect();
        let run = simulate_sweep(&s, 0.666, &bs, 0.0, 4, 1).unwrap();
        assert!(matches!(fit_response(&run), Err(Error::SamplingDensity(_))));
    }

    #[test]
    fn sensitivity_numbers() {
        let s = sensitivity(0.016, 3.376e6, 5.328).unwrap();
        assert!((units::to_nanotesla(s.delta_b_min_t) - 4.74).abs() < 5e-3);
        let rounded = units::to_nanotesla(4.7e-9 * 5.328f64.sqrt());
        assert!((rounded - 10.85).abs() < 5e-3);
        assert_eq!(sensitivity(0.0, 3.376e6, 5.328).unwrap().delta_b_min_t, 0.0);
        assert!(matches!(
            sensitivity(0.016, 0.0, 5.328),
            Err(Error::InsensitiveConfiguration(_))
        ));
    }

    #[test]
    fn phase_offset_scales_response() {
        let mut s = SensorConfig::offset_200g();
        s.phase_offset_rad = PI / 3.0;
        let phi = echo_phase(&s, 0.666, units::microtesla(1.0)).unwrap();
        assert!((phi - 0.5 * 3.376).abs() < 1e-12);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let truth: Vec<f64> = (0..50).map(|k| 0.4 * k as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|p| p.sin().atan2(p.cos())).collect();
        let u = unwrap(&wrapped);
        for (a, b) in u.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
