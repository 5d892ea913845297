//! Parametric bath spectra and stationary Gaussian-Markovian noise.
//!
//! A Lorentzian component with coupling `b` (Hz) and correlation time `τc`
//! corresponds to an Ornstein–Uhlenbeck detuning process ξ(t) with variance
//! `(2πb)²` and autocorrelation `(2πb)² e^{-|t|/τc}`. The reported density
//! ([`evaluate_psd`]) is `(1/π)·2b²τc/(1+ω²τc²)` at `ω = 2πν`, which
//! integrates over ω to `b²` per component.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::units;

/// One-sided bath spectrum model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectralModel {
    SingleLorentzian {
        b_hz: f64,
        tau_c_s: f64,
    },
    /// Slow + fast Lorentzian. Both components share `b_hz` unless
    /// `b_fast_hz` is given.
    DoubleLorentzian {
        b_hz: f64,
        tau_c_slow_s: f64,
        tau_c_fast_s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_fast_hz: Option<f64>,
    },
    /// `S(ν) = amplitude · ν^(−alpha)` with ν in Hz. Fit-only: it has no
    /// stationary Markovian realization here.
    PowerLaw {
        amplitude: f64,
        alpha: f64,
    },
    /// Flat internal density `S_ω = level` (rad²/s). Diagnostic model for
    /// checking the filter normalization.
    White {
        level_rad2_per_s: f64,
    },
}

/// One exponentially correlated component in internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    /// Variance of ξ, rad²/s².
    pub variance: f64,
    pub tau_c: f64,
}

impl SpectralModel {
    pub fn single(b_hz: f64, tau_c_s: f64) -> Self {
        SpectralModel::SingleLorentzian { b_hz, tau_c_s }
    }

    pub fn double(b_hz: f64, tau_c_slow_s: f64, tau_c_fast_s: f64) -> Self {
        SpectralModel::DoubleLorentzian {
            b_hz,
            tau_c_slow_s,
            tau_c_fast_s,
            b_fast_hz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn finite_nonneg(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        }
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        }
        match *self {
            SpectralModel::SingleLorentzian { b_hz, tau_c_s } => {
                finite_nonneg("b_hz", b_hz)?;
                positive("tau_c_s", tau_c_s)
            }
            SpectralModel::DoubleLorentzian {
                b_hz,
                tau_c_slow_s,
                tau_c_fast_s,
                b_fast_hz,
            } => {
                finite_nonneg("b_hz", b_hz)?;
                if let Some(bf) = b_fast_hz {
                    finite_nonneg("b_fast_hz", bf)?;
                }
                positive("tau_c_slow_s", tau_c_slow_s)?;
                positive("tau_c_fast_s", tau_c_fast_s)?;
                if tau_c_slow_s < tau_c_fast_s {
                    return Err(Error::param(
                        "tau_c_fast_s",
                        format!(
                            "tau_c_fast_s ({tau_c_fast_s}) exceeds tau_c_slow_s ({tau_c_slow_s})"
                        ),
                    ));
                }
                Ok(())
            }
            SpectralModel::PowerLaw { amplitude, alpha } => {
                finite_nonneg("amplitude", amplitude)?;
                if !alpha.is_finite() {
                    return Err(Error::param("alpha", "must be finite"));
                }
                Ok(())
            }
            SpectralModel::White { level_rad2_per_s } => {
                finite_nonneg("level_rad2_per_s", level_rad2_per_s)
            }
        }
    }

    /// Short identifier used in trajectory and report metadata.
    pub fn tag(&self) -> String {
        match *self {
            SpectralModel::SingleLorentzian { b_hz, tau_c_s } => {
                format!("single-lorentzian(b={b_hz}Hz,tau_c={tau_c_s}s)")
            }
            SpectralModel::DoubleLorentzian {
                b_hz,
                tau_c_slow_s,
                tau_c_fast_s,
                b_fast_hz,
            } => match b_fast_hz {
                None => format!(
                    "double-lorentzian(b={b_hz}Hz,tau_slow={tau_c_slow_s}s,tau_fast={tau_c_fast_s}s)"
                ),
                Some(bf) => format!(
                    "double-lorentzian(b_slow={b_hz}Hz,b_fast={bf}Hz,tau_slow={tau_c_slow_s}s,tau_fast={tau_c_fast_s}s)"
                ),
            },
            SpectralModel::PowerLaw { amplitude, alpha } => {
                format!("power-law(A={amplitude},alpha={alpha})")
            }
            SpectralModel::White { level_rad2_per_s } => format!("white(S0={level_rad2_per_s})"),
        }
    }

    /// Lorentzian components as OU processes in internal units. Empty for
    /// non-Lorentzian kinds.
    pub fn ou_components(&self) -> Vec<OuParams> {
        let var = |b: f64| {
            let w = units::hz_to_rad(b);
            w * w
        };
        match *self {
            SpectralModel::SingleLorentzian { b_hz, tau_c_s } => vec![OuParams {
                variance: var(b_hz),
                tau_c: tau_c_s,
            }],
            SpectralModel::DoubleLorentzian {
                b_hz,
                tau_c_slow_s,
                tau_c_fast_s,
                b_fast_hz,
            } => vec![
                OuParams {
                    variance: var(b_hz),
                    tau_c: tau_c_slow_s,
                },
                OuParams {
                    variance: var(b_fast_hz.unwrap_or(b_hz)),
                    tau_c: tau_c_fast_s,
                },
            ],
            _ => Vec::new(),
        }
    }

    pub fn is_lorentzian(&self) -> bool {
        matches!(
            self,
            SpectralModel::SingleLorentzian { .. } | SpectralModel::DoubleLorentzian { .. }
        )
    }

    /// Shortest correlation time of the model, if it has one.
    pub fn fastest_tau_c(&self) -> Option<f64> {
        self.ou_components()
            .iter()
            .map(|c| c.tau_c)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Internal two-sided angular density `S_ω(ω)` of ξ, rad²/s.
    pub fn internal_psd(&self, omega: f64) -> f64 {
        match *self {
            SpectralModel::PowerLaw { amplitude, alpha } => {
                let nu = units::rad_to_hz(omega);
                units::psd_report_to_internal(amplitude * nu.powf(-alpha))
            }
            SpectralModel::White { level_rad2_per_s } => level_rad2_per_s,
            _ => self
                .ou_components()
                .iter()
                .map(|c| 2.0 * c.variance * c.tau_c / (1.0 + omega * omega * c.tau_c * c.tau_c))
                .sum(),
        }
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "frequency must be finite and >= 0, got {nu}"
        )))
    }
}

/// Reported spectral density at frequency `nu_hz`.
///
/// Lorentzian kinds return `Σ (1/π)·2b²τc/(ω²τc²+1)` with `ω = 2πν`, in
/// Hz² per rad/s. Power laws return `A·ν^(−α)` and reject `ν = 0` when
/// `α > 0`.
pub fn evaluate_psd(model: &SpectralModel, nu_hz: f64) -> Result<f64> {
    model.validate()?;
    check_nu(nu_hz)?;
    if let SpectralModel::PowerLaw { amplitude, alpha } = *model {
        if nu_hz == 0.0 && alpha > 0.0 {
            return Err(Error::Domain("power law diverges at nu = 0".into()));
        }
        return Ok(amplitude * nu_hz.powf(-alpha));
    }
    Ok(units::psd_internal_to_report(
        model.internal_psd(units::hz_to_rad(nu_hz)),
    ))
}

/// Autocorrelation `Σ b²e^{−lag/τc}` in Hz² (report convention).
pub fn autocorrelation(model: &SpectralModel, lag_s: f64) -> Result<f64> {
    Ok(autocorrelation_internal(model, lag_s)? / (4.0 * PI * PI))
}

/// Autocorrelation of ξ in rad²/s².
pub fn autocorrelation_internal(model: &SpectralModel, lag_s: f64) -> Result<f64> {
    model.validate()?;
    if !model.is_lorentzian() {
        return Err(Error::UnsupportedModel(format!(
            "{} has no exponential autocorrelation",
            model.tag()
        )));
    }
    if !(lag_s.is_finite() && lag_s >= 0.0) {
        return Err(Error::Domain(format!("lag must be >= 0, got {lag_s}")));
    }
    Ok(model
        .ou_components()
        .iter()
        .map(|c| c.variance * (-lag_s / c.tau_c).exp())
        .sum())
}

/// A uniformly sampled realization of ξ(t), rad/s; sample `k` sits at `k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub model_tag: String,
}

impl NoiseTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }
}

/// Exact discretization of one OU component.
#[derive(Debug, Clone)]
pub struct OuProcess {
    pub params: OuParams,
    pub x: f64,
}

impl OuProcess {
    /// Starts from the stationary distribution.
    pub fn stationary(params: OuParams, rng: &mut StreamRng) -> Self {
        let g: f64 = rng.sample(StandardNormal);
        OuProcess {
            params,
            x: params.variance.sqrt() * g,
        }
    }

    /// `x ← x·e^{−dt/τc} + σ√(1−e^{−2dt/τc})·g`.
    pub fn step(&mut self, dt: f64, rng: &mut StreamRng) -> f64 {
        let a = (-dt / self.params.tau_c).exp();
        let s = (self.params.variance * -(-2.0 * dt / self.params.tau_c).exp_m1()).sqrt();
        let g: f64 = rng.sample(StandardNormal);
        self.x = self.x * a + s * g;
        self.x
    }

    /// Advances by `dt` and returns `∫ x dt` over the step, both drawn from
    /// their exact joint Gaussian law conditioned on the current value.
    pub fn step_with_integral(&mut self, dt: f64, rng: &mut StreamRng) -> f64 {
        let OuParams { variance, tau_c } = self.params;
        let u = dt / tau_c;
        let e1 = -(-u).exp_m1(); // 1 − a
        let e2 = -(-2.0 * u).exp_m1(); // 1 − a²
        let a = 1.0 - e1;
        let vxx = variance * e2;
        let vxi = variance * tau_c * e1 * e1;
        let vii = 2.0 * variance * tau_c * tau_c * integral_variance_shape(u);
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let mean_i = tau_c * e1 * self.x;
        let sx = vxx.sqrt();
        let (cross, cond) = if sx > 0.0 {
            let c = vxi / sx;
            (c, (vii - c * c).max(0.0).sqrt())
        } else {
            (0.0, vii.max(0.0).sqrt())
        };
        let integral = mean_i + cross * g1 + cond * g2;
        self.x = a * self.x + sx * g1;
        integral
    }
}

/// `u − 2(1−e^{−u}) + (1−e^{−2u})/2`, with a series for small `u` where the
/// closed form cancels catastrophically.
fn integral_variance_shape(u: f64) -> f64 {
    if u < 0.05 {
        // Σ_{k≥3} (−1)^{k+1} (2^{k−1} − 2) u^k / k!
        let mut sum = 0.0;
        let mut term = u * u / 2.0; // u^k/k! at k = 2
        for k in 3..24 {
            term *= u / k as f64;
            let coef = (2f64.powi(k - 1) - 2.0) * if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += coef * term;
        }
        sum
    } else {
        u + 2.0 * (-u).exp_m1() - 0.5 * (-2.0 * u).exp_m1()
    }
}

fn validate_sampling(model: &SpectralModel, dt: f64, duration: f64) -> Result<()> {
    model.validate()?;
    if !model.is_lorentzian() {
        return Err(Error::UnsupportedModel(format!(
            "{} cannot be sampled as a stationary Markovian process",
            model.tag()
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt_s", format!("must be > 0, got {dt}")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::param(
            "duration_s",
            format!("must be >= dt ({dt}), got {duration}"),
        ));
    }
    let fastest = model.fastest_tau_c().unwrap_or(f64::INFINITY);
    if dt > fastest / 10.0 {
        return Err(Error::Resolution(format!(
            "dt = {dt} s exceeds tau_c_fast/10 = {} s",
            fastest / 10.0
        )));
    }
    Ok(())
}

/// One realization of the sum of independent OU components.
///
/// The sample count is `round(duration/dt)`. Component `c` draws from stream
/// `c` of a seed derived from `seed`, so the result is a pure function of
/// the arguments.
pub fn sample_trajectory(
    model: &SpectralModel,
    dt: f64,
    duration: f64,
    seed: u64,
) -> Result<NoiseTrajectory> {
    validate_sampling(model, dt, duration)?;
    let n = ((duration / dt).round() as usize).max(1);
    let samples = synthesize(model, dt, n, seed, 0);
    Ok(NoiseTrajectory {
        dt,
        samples,
        seed,
        model_tag: model.tag(),
    })
}

/// Samples for trajectory `index` of a family sharing `seed`.
pub(crate) fn synthesize(
    model: &SpectralModel,
    dt: f64,
    n: usize,
    seed: u64,
    index: u64,
) -> Vec<f64> {
    let mut samples = vec![0.0; n];
    for (c, params) in model.ou_components().into_iter().enumerate() {
        if params.variance == 0.0 {
            continue;
        }
        let mut rng = rng::stream(rng::derive_seed(seed, &format!("ou-component-{c}")), index);
        let mut p = OuProcess::stationary(params, &mut rng);
        samples[0] += p.x;
        for s in samples.iter_mut().skip(1) {
            *s += p.step(dt, &mut rng);
        }
    }
    samples
}
