//! Spectrum reconstruction from decoupling decay rates and parametric
//! spectrum fits.
//!
//! A CPMG train with spacing τ admits noise mainly near `ν = 1/(2τ)`, so
//! `Γ(τ) ≈ κ(n)·S(1/(2τ))`. `κ(n)` is the per-unit-time kernel weight
//! `4π² ∫₀^{4nπ} F(n,z)/z² dz` (fundamental and third-harmonic passbands);
//! the neglected higher harmonics enter `σ_S` as a systematic.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coherence::{self, Amplitude, CoherenceCurve};
use crate::error::{Error, Result};
use crate::filter::{self, ChiOptions, PulseSequence};
use crate::lsq::{self, LmOptions};
use crate::noise::{self, SpectralModel};
use crate::periodogram::BinnedPoint;
use crate::quad;
use crate::stats;
use crate::units;

/// Relative systematic on reconstructed points from harmonics beyond the
/// third.
pub const HARMONIC_SYSTEMATIC: f64 = 0.05;
/// Smallest `n` for which the passband is narrow enough for the δ-filter
/// picture.
pub const MIN_TIGHT_PULSES: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub tau_s: f64,
    /// `Γ = 1/T₂`, 1/s.
    pub gamma: f64,
    pub sigma_gamma: f64,
    /// Why this point is unusable, if it is.
    pub flag: Option<String>,
}

impl RatePoint {
    pub fn is_valid(&self) -> bool {
        self.flag.is_none()
    }
}

/// Input to [`decay_rates`].
#[derive(Debug, Clone, Copy)]
pub enum RateSource<'a> {
    /// Forward model: `Γ = χ(nτ)/(nτ)`.
    Model(&'a SpectralModel),
    /// Measured decays, one curve per spacing (`sequence.tau_s` must be set).
    Curves(&'a [CoherenceCurve]),
}

fn check_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::param("tau_grid", "empty"));
    }
    if tau_grid.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::param("tau_grid", "spacings must be positive"));
    }
    if tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("tau_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// Decay rate per spacing. Failures are returned as flagged points rather
/// than errors.
pub fn decay_rates(source: RateSource, n: u32, tau_grid: &[f64]) -> Result<Vec<RatePoint>> {
    check_grid(tau_grid)?;
    match source {
        RateSource::Model(model) => {
            model.validate()?;
            Ok(crate::par::map_slice(tau_grid, |&tau| {
                let seq = match PulseSequence::cpmg(n, tau) {
                    Ok(s) => s,
                    Err(e) => return flagged(tau, e),
                };
                match filter::chi_with(model, &seq, &ChiOptions::default()) {
                    Ok(c) => {
                        let t = seq.total_time();
                        RatePoint {
                            tau_s: tau,
                            gamma: c.value / t,
                            sigma_gamma: c.error / t,
                            flag: None,
                        }
                    }
                    Err(e) => flagged(tau, e),
                }
            }))
        }
        RateSource::Curves(curves) => Ok(tau_grid
            .iter()
            .map(|&tau| {
                let curve = curves.iter().find(|c| {
                    c.sequence
                        .tau_s
                        .is_some_and(|t| (t - tau).abs() <= 1e-12 * tau)
                });
                let Some(curve) = curve else {
                    return flagged(
                        tau,
                        Error::DegenerateData(format!("no curve recorded at tau = {tau} s")),
                    );
                };
                match coherence::extract_t2(curve, Amplitude::Fixed) {
                    Ok(fit) => RatePoint {
                        tau_s: tau,
                        gamma: 1.0 / fit.t2,
                        sigma_gamma: fit.t2_stderr / (fit.t2 * fit.t2),
                        flag: None,
                    },
                    Err(e) => flagged(tau, e),
                }
            })
            .collect()),
    }
}

fn flagged(tau: f64, e: Error) -> RatePoint {
    RatePoint {
        tau_s: tau,
        gamma: f64::NAN,
        sigma_gamma: f64::NAN,
        flag: Some(e.to_string()),
    }
}

/// `∫₀^{4nπ} F(n,z)/z² dz`.
fn kernel_weight(n: u32) -> f64 {
    let f = |z: f64| {
        if z <= 0.0 {
            0.0
        } else {
            filter::cpmg_filter(n, z) / (z * z)
        }
    };
    (0..4 * n as usize)
        .map(|k| {
            let a = k as f64 * PI;
            quad::integrate(f, a, a + PI, 0.0, 1e-12, 100).value
        })
        .sum()
}

/// Filter weight `κ(n)` linking `Γ(τ)` to the reported density at
/// `ν = 1/(2τ)`.
pub fn kappa(n: u32) -> f64 {
    4.0 * PI * PI * kernel_weight(n.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub nu_hz: f64,
    pub s: f64,
    pub sigma_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub points: Vec<SpectrumPoint>,
    /// Frequency range implied by the spacing grid, Hz.
    pub band: (f64, f64),
    pub method_tag: String,
}

impl SpectrumEstimate {
    pub fn new(
        points: Vec<SpectrumPoint>,
        band: (f64, f64),
        method_tag: impl Into<String>,
    ) -> Result<Self> {
        if points.windows(2).any(|w| w[1].nu_hz <= w[0].nu_hz) {
            return Err(Error::Domain(
                "frequencies must be strictly increasing".into(),
            ));
        }
        for p in &points {
            if !(p.nu_hz > 0.0 && p.s.is_finite() && p.sigma_s > 0.0 && p.sigma_s.is_finite()) {
                return Err(Error::Domain(format!("invalid spectrum point {p:?}")));
            }
        }
        Ok(SpectrumEstimate {
            points,
            band,
            method_tag: method_tag.into(),
        })
    }

    /// From log-binned periodogram values in internal units.
    pub fn from_periodogram(bins: &[BinnedPoint]) -> Result<Self> {
        let points: Vec<SpectrumPoint> = bins
            .iter()
            .map(|b| SpectrumPoint {
                nu_hz: b.nu_hz,
                s: units::psd_internal_to_report(b.density),
                sigma_s: units::psd_internal_to_report(b.sigma).max(f64::MIN_POSITIVE),
            })
            .collect();
        let band = match (points.first(), points.last()) {
            (Some(a), Some(b)) => (a.nu_hz, b.nu_hz),
            _ => return Err(Error::DegenerateData("empty periodogram".into())),
        };
        Self::new(points, band, "periodogram")
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.nu_hz).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReconstructMethod {
    /// `S = Γ/κ(n)` at `ν = 1/(2τ)`.
    #[default]
    DeltaFilter,
    /// Regularized least squares for `S` on the grid nodes (piecewise linear
    /// in log ν), using the full filter.
    LinearInversion { regularization: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReconstructOptions {
    /// Permit `n < 8` with the passband width folded into `σ_S`.
    pub widened: bool,
    pub method: ReconstructMethod,
}

/// Spectrum estimate from decay rates measured with `n`-pulse CPMG.
pub fn reconstruct(
    rates: &[RatePoint],
    n: u32,
    opts: &ReconstructOptions,
) -> Result<SpectrumEstimate> {
    let mut valid: Vec<&RatePoint> = rates
        .iter()
        .filter(|r| r.is_valid() && r.gamma.is_finite())
        .collect();
    if valid.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "need at least 3 valid rate points, got {}",
            valid.len()
        )));
    }
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let systematic = if n >= MIN_TIGHT_PULSES {
        HARMONIC_SYSTEMATIC
    } else if opts.widened {
        HARMONIC_SYSTEMATIC.max(1.0 / f64::from(n))
    } else {
        return Err(Error::ApproximationQuality(format!(
            "n = {n} gives a passband wider than 20 % of its centre; use n >= {MIN_TIGHT_PULSES} or widened mode"
        )));
    };
    // Ascending frequency = descending spacing.
    valid.sort_by(|a, b| b.tau_s.total_cmp(&a.tau_s));
    let band = (
        1.0 / (2.0 * valid[0].tau_s),
        1.0 / (2.0 * valid[valid.len() - 1].tau_s),
    );
    match opts.method {
        ReconstructMethod::DeltaFilter => {
            let k = kappa(n);
            let points = valid
                .iter()
                .map(|r| {
                    let s = r.gamma / k;
                    let stat = r.sigma_gamma.max(0.0) / k;
                    SpectrumPoint {
                        nu_hz: 1.0 / (2.0 * r.tau_s),
                        s,
                        sigma_s: (stat * stat + (systematic * s).powi(2))
                            .sqrt()
                            .max(f64::MIN_POSITIVE),
                    }
                })
                .collect();
            SpectrumEstimate::new(points, band, "delta-filter")
        }
        ReconstructMethod::LinearInversion { regularization } => {
            linear_inversion(&valid, n, regularization, band)
        }
    }
}

/// Hat function `k` over nodes in `ln ν`, flat beyond the end nodes.
fn hat(nodes: &[f64], k: usize, x: f64) -> f64 {
    let m = nodes.len();
    if x <= nodes[0] {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if x >= nodes[m - 1] {
        return if k == m - 1 { 1.0 } else { 0.0 };
    }
    let j = nodes.partition_point(|&v| v <= x) - 1;
    let w = (x - nodes[j]) / (nodes[j + 1] - nodes[j]);
    if k == j {
        1.0 - w
    } else if k == j + 1 {
        w
    } else {
        0.0
    }
}

fn linear_inversion(
    rates: &[&RatePoint],
    n: u32,
    regularization: f64,
    band: (f64, f64),
) -> Result<SpectrumEstimate> {
    if !(regularization >= 0.0) {
        return Err(Error::param("regularization", "must be >= 0"));
    }
    let m = rates.len();
    let nus: Vec<f64> = rates.iter().map(|r| 1.0 / (2.0 * r.tau_s)).collect();
    let nodes: Vec<f64> = nus.iter().map(|v| v.ln()).collect();
    let opts = ChiOptions {
        periods: 64,
        rel_tol: 1e-8,
        ..ChiOptions::default()
    };
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|j| (0..m).map(move |k| (j, k))).collect();
    let entries = crate::par::map_slice(&cells, |&(j, k)| {
        let seq = PulseSequence::cpmg(n, rates[j].tau_s)?;
        let psd = |w: f64| {
            let nu = units::rad_to_hz(w);
            if nu <= 0.0 {
                units::psd_report_to_internal(if k == 0 { 1.0 } else { 0.0 })
            } else {
                units::psd_report_to_internal(hat(&nodes, k, nu.ln()))
            }
        };
        let at_inf = units::psd_report_to_internal(if k == m - 1 { 1.0 } else { 0.0 });
        let c = filter::chi_of_density(psd, at_inf, &seq, &opts)?;
        Ok(c.value / seq.total_time())
    });
    let mut a: DMatrix<f64> = DMatrix::zeros(m, m);
    for (&(j, k), e) in cells.iter().zip(entries) {
        a[(j, k)] = e?;
    }
    let gamma_scale = rates
        .iter()
        .map(|r| r.gamma.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let w: Vec<f64> = rates
        .iter()
        .map(|r| {
            1.0 / r
                .sigma_gamma
                .max(1e-3 * r.gamma.abs())
                .max(1e-12 * gamma_scale)
        })
        .collect();
    let mut aw = a.clone();
    let mut gw = DVector::zeros(m);
    for j in 0..m {
        for k in 0..m {
            aw[(j, k)] *= w[j];
        }
        gw[j] = rates[j].gamma * w[j];
    }
    let mut d: DMatrix<f64> = DMatrix::zeros(m.saturating_sub(2), m);
    for r in 0..m.saturating_sub(2) {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    let ata = aw.transpose() * &aw;
    let dtd = d.transpose() * &d;
    let lambda = regularization * ata.trace() / dtd.trace().max(1.0);
    let mtx = &ata + &dtd * lambda;
    let inv = mtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateData("inversion matrix is singular".into()))?;
    let s = &inv * (aw.transpose() * gw);
    let cov = &inv * &ata * &inv;
    let points = (0..m)
        .map(|k| SpectrumPoint {
            nu_hz: nus[k],
            s: s[k],
            sigma_s: cov[(k, k)].max(0.0).sqrt().max(f64::MIN_POSITIVE),
        })
        .collect();
    SpectrumEstimate::new(points, band, "linear-inversion")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    SingleLorentzian,
    /// Shared `b` for both components.
    DoubleLorentzian,
    /// Independent `b` for the fast component.
    DoubleLorentzianTwoAmplitude,
    PowerLaw,
}

impl FitKind {
    pub fn parameter_count(self) -> usize {
        match self {
            FitKind::SingleLorentzian | FitKind::PowerLaw => 2,
            FitKind::DoubleLorentzian => 3,
            FitKind::DoubleLorentzianTwoAmplitude => 4,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            FitKind::SingleLorentzian => &["b_hz", "tau_c_s"],
            FitKind::DoubleLorentzian => &["b_hz", "tau_c_slow_s", "tau_c_fast_s"],
            FitKind::DoubleLorentzianTwoAmplitude => {
                &["b_hz", "tau_c_slow_s", "tau_c_fast_s", "b_fast_hz"]
            }
            FitKind::PowerLaw => &["amplitude", "alpha"],
        }
    }

    /// Natural parameters → internal (log / ordered) coordinates.
    fn to_internal(self, nat: &[f64]) -> Result<Vec<f64>> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::Domain(format!(
                    "initial {name} must be positive, got {v}"
                )))
            }
        };
        if nat.len() != self.parameter_count() {
            return Err(Error::param(
                "init",
                format!("{self:?} takes {} parameters", self.parameter_count()),
            ));
        }
        Ok(match self {
            FitKind::SingleLorentzian => vec![pos(nat[0], "b")?, pos(nat[1], "tau_c")?],
            FitKind::DoubleLorentzian | FitKind::DoubleLorentzianTwoAmplitude => {
                let (ts, tf) = (nat[1], nat[2]);
                let ratio = (ts / tf - 1.0).max(1e-3);
                let mut v = vec![pos(nat[0], "b")?, pos(tf, "tau_c_fast")?, ratio.ln()];
                if self == FitKind::DoubleLorentzianTwoAmplitude {
                    v.push(pos(nat[3], "b_fast")?);
                }
                v
            }
            FitKind::PowerLaw => vec![pos(nat[0], "amplitude")?, nat[1]],
        })
    }

    /// Internal → natural parameters and the Jacobian `∂nat/∂int`.
    fn to_natural(self, p: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let k = p.len();
        let mut jac = DMatrix::zeros(k, k);
        let nat = match self {
            FitKind::SingleLorentzian => {
                let v = vec![p[0].exp(), p[1].exp()];
                jac[(0, 0)] = v[0];
                jac[(1, 1)] = v[1];
                v
            }
            FitKind::DoubleLorentzian | FitKind::DoubleLorentzianTwoAmplitude => {
                let b = p[0].exp();
                let tf = p[1].exp();
                let eu = p[2].exp();
                let ts = tf * (1.0 + eu);
                jac[(0, 0)] = b;
                jac[(1, 1)] = ts;
                jac[(1, 2)] = tf * eu;
                jac[(2, 1)] = tf;
                let mut v = vec![b, ts, tf];
                if k == 4 {
                    let bf = p[3].exp();
                    jac[(3, 3)] = bf;
                    v.push(bf);
                }
                v
            }
            FitKind::PowerLaw => {
                let a = p[0].exp();
                jac[(0, 0)] = a;
                jac[(1, 1)] = 1.0;
                vec![a, p[1]]
            }
        };
        (nat, jac)
    }

    fn model(self, nat: &[f64]) -> SpectralModel {
        match self {
            FitKind::SingleLorentzian => SpectralModel::single(nat[0], nat[1]),
            FitKind::DoubleLorentzian => SpectralModel::double(nat[0], nat[1], nat[2]),
            FitKind::DoubleLorentzianTwoAmplitude => SpectralModel::DoubleLorentzian {
                b_hz: nat[0],
                tau_c_slow_s: nat[1],
                tau_c_fast_s: nat[2],
                b_fast_hz: Some(nat[3]),
            },
            FitKind::PowerLaw => SpectralModel::PowerLaw {
                amplitude: nat[0],
                alpha: nat[1],
            },
        }
    }
}

/// Reported density of a fit model in closed form (no validation, so it is
/// safe inside the optimizer).
fn model_density(kind: FitKind, nat: &[f64], nu: f64) -> f64 {
    let lor = |b: f64, tau: f64| {
        let w = 2.0 * PI * nu * tau;
        2.0 * b * b * tau / (PI * (1.0 + w * w))
    };
    match kind {
        FitKind::SingleLorentzian => lor(nat[0], nat[1]),
        FitKind::DoubleLorentzian => lor(nat[0], nat[1]) + lor(nat[0], nat[2]),
        FitKind::DoubleLorentzianTwoAmplitude => lor(nat[0], nat[1]) + lor(nat[3], nat[2]),
        FitKind::PowerLaw => nat[0] * nu.powf(-nat[1]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub parameters: Vec<FitParameter>,
    /// `‖(S_model − S)/σ_S‖`.
    pub residual_norm: f64,
    /// Weighted residuals per point.
    pub residuals: Vec<f64>,
    /// Covariance of the natural parameters (order of `parameters`).
    pub covariance: Vec<Vec<f64>>,
    /// Small-sample Akaike criterion with known errors: `χ² + 2k + 2k(k+1)/(N−k−1)`.
    pub aicc: f64,
    pub converged: bool,
    pub rank_deficient: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.parameters
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.stderr)
    }

    /// The fitted spectrum as a model.
    pub fn model(&self) -> SpectralModel {
        let nat: Vec<f64> = self.parameters.iter().map(|p| p.value).collect();
        self.kind.model(&nat)
    }

    /// Fitted density at `nu`.
    pub fn evaluate(&self, nu: f64) -> f64 {
        let nat: Vec<f64> = self.parameters.iter().map(|p| p.value).collect();
        model_density(self.kind, &nat, nu)
    }
}

/// Indices of local curvature minima of `ln S` against `ln ν` (knees),
/// ordered by increasing frequency.
fn knees(spec: &SpectrumEstimate) -> Vec<usize> {
    let pts: Vec<(f64, f64)> = spec
        .points
        .iter()
        .filter(|p| p.s > 0.0)
        .map(|p| (p.nu_hz.ln(), p.s.ln()))
        .collect();
    if pts.len() < 3 {
        return Vec::new();
    }
    let d2: Vec<f64> = (1..pts.len() - 1)
        .map(|i| {
            let (x0, y0) = pts[i - 1];
            let (x1, y1) = pts[i];
            let (x2, y2) = pts[i + 1];
            2.0 * ((y2 - y1) / (x2 - x1) - (y1 - y0) / (x1 - x0)) / (x2 - x0)
        })
        .collect();
    let floor = d2.iter().cloned().fold(0.0, f64::min) * 0.2;
    let mut out = Vec::new();
    for i in 0..d2.len() {
        let left = if i == 0 { f64::INFINITY } else { d2[i - 1] };
        let right = if i + 1 == d2.len() {
            f64::INFINITY
        } else {
            d2[i + 1]
        };
        if d2[i] < floor && d2[i] <= left && d2[i] <= right {
            out.push(i + 1);
        }
    }
    // Map back to spectrum indices (positive points only).
    let positive: Vec<usize> = (0..spec.points.len())
        .filter(|&k| spec.points[k].s > 0.0)
        .collect();
    out.into_iter().map(|i| positive[i]).collect()
}

fn low_frequency_level(spec: &SpectrumEstimate) -> f64 {
    spec.points
        .iter()
        .map(|p| p.s)
        .find(|&s| s > 0.0)
        .unwrap_or(1.0)
}

/// Default initial guesses in natural parameters, most plausible first.
fn initial_guesses(spec: &SpectrumEstimate, kind: FitKind) -> Vec<Vec<f64>> {
    let tau_at = |k: usize| 1.0 / (2.0 * PI * spec.points[k].nu_hz);
    let ks = knees(spec);
    let s0 = low_frequency_level(spec);
    let nu_lo = spec.points[0].nu_hz;
    let nu_hi = spec.points[spec.points.len() - 1].nu_hz;
    let mid_tau = 1.0 / (2.0 * PI * (nu_lo * nu_hi).sqrt());
    // S(0) = 2b²Στ/π
    let b_from = |tsum: f64| (PI * s0 / (2.0 * tsum)).sqrt();
    match kind {
        FitKind::SingleLorentzian => {
            let mut taus: Vec<f64> = ks.iter().map(|&k| tau_at(k)).collect();
            taus.push(mid_tau);
            taus.into_iter().map(|t| vec![b_from(t), t]).collect()
        }
        FitKind::DoubleLorentzian | FitKind::DoubleLorentzianTwoAmplitude => {
            let mut pairs = Vec::new();
            if ks.len() >= 2 {
                pairs.push((tau_at(ks[0]), tau_at(ks[ks.len() - 1])));
            }
            if let Some(&k) = ks.first() {
                pairs.push((tau_at(k), tau_at(k) / 10.0));
            }
            if let Some(&k) = ks.last() {
                pairs.push((tau_at(k) * 10.0, tau_at(k)));
            }
            pairs.push((1.0 / (2.0 * PI * nu_lo), 1.0 / (2.0 * PI * nu_hi)));
            pairs.push((mid_tau * 10.0, mid_tau / 10.0));
            // Coarse grid over the band for spectra without clean knees.
            let grid = log_grid(1.0 / (2.0 * PI * nu_hi), 1.0 / (2.0 * PI * nu_lo), 5);
            for (a, &tf) in grid.iter().enumerate() {
                for &ts in &grid[a + 1..] {
                    pairs.push((ts, tf));
                }
            }
            pairs
                .into_iter()
                .map(|(ts, tf)| {
                    let b = b_from(ts + tf);
                    let mut v = vec![b, ts, tf];
                    if kind == FitKind::DoubleLorentzianTwoAmplitude {
                        v.push(b);
                    }
                    v
                })
                .collect()
        }
        FitKind::PowerLaw => {
            let (x, y): (Vec<f64>, Vec<f64>) = spec
                .points
                .iter()
                .filter(|p| p.s > 0.0)
                .map(|p| (p.nu_hz.ln(), p.s.ln()))
                .unzip();
            match stats::fit_line(&x, &y) {
                Some(f) => vec![vec![f.intercept.exp(), -f.slope]],
                None => vec![vec![s0, 1.0]],
            }
        }
    }
}

/// Weighted least-squares fit of a parametric spectrum.
///
/// Starts from `init` (natural parameters) when given and from knee-based
/// guesses, keeping the lowest-cost converged result; the ordering
/// `τs ≥ τf` removes the slow/fast swap symmetry.
pub fn fit_model(
    spec: &SpectrumEstimate,
    kind: FitKind,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    let k = kind.parameter_count();
    let npts = spec.points.len();
    if npts < k + 2 {
        return Err(Error::DegenerateData(format!(
            "{kind:?} needs at least {} points, got {npts}",
            k + 2
        )));
    }
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(p) = init {
        starts.push(kind.to_internal(p)?);
    }
    starts.extend(
        initial_guesses(spec, kind)
            .into_iter()
            .filter_map(|g| kind.to_internal(&g).ok()),
    );
    let res = |p: &[f64]| {
        let (nat, _) = kind.to_natural(p);
        spec.points
            .iter()
            .map(|q| (model_density(kind, &nat, q.nu_hz) - q.s) / q.sigma_s)
            .collect::<Vec<f64>>()
    };
    let opts = LmOptions {
        max_iterations: 1000,
        ..LmOptions::default()
    };
    let mut best: Option<lsq::LmReport> = None;
    for x0 in &starts {
        let rep = lsq::minimize(res, x0, &opts);
        let better = match &best {
            None => true,
            Some(b) => {
                (rep.converged() && !b.converged())
                    || (rep.converged() == b.converged() && rep.cost < b.cost)
            }
        };
        if better {
            best = Some(rep);
        }
    }
    let rep = best.ok_or_else(|| Error::FitFailure {
        reason: "no usable starting point".into(),
        best: None,
    })?;
    let (nat, jac) = kind.to_natural(&rep.params);
    if !rep.converged() || !rep.cost.is_finite() {
        return Err(Error::FitFailure {
            reason: format!("{kind:?} fit did not converge ({:?})", rep.termination),
            best: Some(nat),
        });
    }
    let cov = &jac * &rep.covariance * jac.transpose();
    let names = kind.parameter_names();
    let chi2 = 2.0 * rep.cost;
    let kf = k as f64;
    let aicc = chi2 + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (npts as f64 - kf - 1.0);
    Ok(FitResult {
        kind,
        parameters: (0..k)
            .map(|i| FitParameter {
                name: names[i].to_string(),
                value: nat[i],
                stderr: cov[(i, i)].max(0.0).sqrt(),
            })
            .collect(),
        residual_norm: rep.residual_norm(),
        residuals: rep.residuals.clone(),
        covariance: (0..k)
            .map(|i| (0..k).map(|j| cov[(i, j)]).collect())
            .collect(),
        aicc,
        converged: true,
        rank_deficient: rep.rank_deficient,
        iterations: rep.iterations,
    })
}

/// One entry of [`compare_models`].
#[derive(Debug, Clone, PartialEq)]
pub struct RankedFit {
    pub kind: FitKind,
    pub outcome: std::result::Result<FitResult, Error>,
}

/// Fits double-Lorentzian, single-Lorentzian and power-law families and
/// ranks them by AICc (failed fits last).
pub fn compare_models(spec: &SpectrumEstimate) -> Result<Vec<RankedFit>> {
    let (lo, hi) = match (spec.points.first(), spec.points.last()) {
        (Some(a), Some(b)) => (a.nu_hz, b.nu_hz),
        _ => return Err(Error::Range("empty spectrum".into())),
    };
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Range(format!(
            "spectrum spans {lo}..{hi} Hz, less than one decade"
        )));
    }
    let mut out: Vec<RankedFit> = [
        FitKind::DoubleLorentzian,
        FitKind::SingleLorentzian,
        FitKind::PowerLaw,
    ]
    .into_iter()
    .map(|kind| RankedFit {
        kind,
        outcome: fit_model(spec, kind, None),
    })
    .collect();
    out.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => x.aicc.total_cmp(&y.aicc),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => std::cmp::Ordering::Equal,
    });
    Ok(out)
}

/// Exact spectrum samples of `model` on `nus`, with relative σ `rel_sigma`.
pub fn sample_spectrum(
    model: &SpectralModel,
    nus: &[f64],
    rel_sigma: f64,
) -> Result<SpectrumEstimate> {
    let points = nus
        .iter()
        .map(|&nu| {
            let s = noise::evaluate_psd(model, nu)?;
            Ok(SpectrumPoint {
                nu_hz: nu,
                s,
                sigma_s: (rel_sigma * s).max(f64::MIN_POSITIVE),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let band = (nus[0], nus[nus.len() - 1]);
    SpectrumEstimate::new(points, band, "model")
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}
