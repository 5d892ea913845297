//! Kinetic Monte Carlo of a flip-flopping nuclear spin bath.
//!
//! Spins sit around the probe (at the origin) and contribute
//! `ξ = Σᵢ Aᵢ nᵢ` with `Aᵢ = 2π·coupling_scale/rᵢ³` and `nᵢ = ±1`. Every pair
//! within `pairing_cutoff` can exchange its two spins when they are
//! anti-aligned. Pairs touching the frozen core flip at `rate_slow`, all
//! others at `rate_fast`. Evolution is exact and event-driven (Gillespie
//! direct method over a binary sum tree of pair propensities).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions};
use crate::noise::NoiseTrajectory;
use crate::rng::{self, StreamRng};
use crate::units;

/// Spins closer than this to the probe are rejected.
pub const MIN_PROBE_DISTANCE_NM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    RandomUniformInSphere,
    /// The `n_spins` sites nearest the probe of a simple cubic lattice with
    /// the probe on a vacant site.
    CubicLattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub n_spins: usize,
    pub geometry: Geometry,
    pub density_per_nm3: f64,
    pub coupling_scale_hz_nm3: f64,
    pub frozen_core_radius_nm: f64,
    pub rate_slow_per_s: f64,
    pub rate_fast_per_s: f64,
    pub pairing_cutoff_nm: f64,
    pub seed: u64,
}

impl Default for BathConfig {
    /// Two-region bath whose field spectrum is clearly double-Lorentzian.
    /// The six nearest sites form a frozen core holding about 70 % of the
    /// field variance. The pairing cutoff reaches a few shells, so each spin
    /// has dozens of partners and relaxes at a well-defined rate instead of
    /// by slow spin diffusion.
    fn default() -> Self {
        BathConfig {
            n_spins: 256,
            geometry: Geometry::CubicLattice,
            density_per_nm3: 0.1,
            coupling_scale_hz_nm3: 10.0,
            frozen_core_radius_nm: 2.2,
            rate_slow_per_s: 0.03,
            rate_fast_per_s: 10.0,
            pairing_cutoff_nm: 4.0,
            seed: 1,
        }
    }
}

impl BathConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be > 0, got {v}")))
            }
        };
        if self.n_spins < 2 {
            return Err(Error::param("n_spins", "need at least two spins"));
        }
        positive("density_per_nm3", self.density_per_nm3)?;
        positive("coupling_scale_hz_nm3", self.coupling_scale_hz_nm3)?;
        positive("frozen_core_radius_nm", self.frozen_core_radius_nm)?;
        positive("rate_slow_per_s", self.rate_slow_per_s)?;
        positive("rate_fast_per_s", self.rate_fast_per_s)?;
        positive("pairing_cutoff_nm", self.pairing_cutoff_nm)?;
        if self.rate_slow_per_s > self.rate_fast_per_s {
            return Err(Error::param(
                "rate_slow_per_s",
                format!(
                    "rate_slow_per_s ({}) exceeds rate_fast_per_s ({})",
                    self.rate_slow_per_s, self.rate_fast_per_s
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub rate: f64,
    /// Either member lies inside the frozen core.
    pub slow: bool,
}

/// What a per-pair rate hook sees.
#[derive(Debug, Clone, Copy)]
pub struct PairInfo {
    pub i: usize,
    pub j: usize,
    pub distance_nm: f64,
    pub slow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathState {
    pub positions: Vec<[f64; 3]>,
    /// Coupling to the probe, rad/s.
    pub couplings: Vec<f64>,
    pub occupations: Vec<i8>,
    pub in_core: Vec<bool>,
    pub pairs: Vec<Pair>,
    pub time: f64,
    /// Non-fatal construction notes (isolated spins, …).
    pub warnings: Vec<String>,
    /// Seed for evolution streams and the number of streams consumed.
    pub seed: u64,
    pub evolutions: u64,
    adjacency: Vec<Vec<usize>>,
}

fn norm(p: &[f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

fn place_random(config: &BathConfig, rng: &mut StreamRng) -> Vec<[f64; 3]> {
    let radius = (3.0 * config.n_spins as f64
        / (4.0 * std::f64::consts::PI * config.density_per_nm3))
        .cbrt();
    let mut out = Vec::with_capacity(config.n_spins);
    while out.len() < config.n_spins {
        let p = [
            radius * (2.0 * rng.random::<f64>() - 1.0),
            radius * (2.0 * rng.random::<f64>() - 1.0),
            radius * (2.0 * rng.random::<f64>() - 1.0),
        ];
        let r = norm(&p);
        // The probe occupies its own site.
        if r <= radius && r >= MIN_PROBE_DISTANCE_NM {
            out.push(p);
        }
    }
    out
}

fn place_lattice(config: &BathConfig) -> Vec<[f64; 3]> {
    let a = config.density_per_nm3.powf(-1.0 / 3.0);
    let half = ((config.n_spins as f64).cbrt() / 2.0).ceil() as i64 + 2;
    let mut sites: Vec<([i64; 3], i64)> = Vec::new();
    for x in -half..=half {
        for y in -half..=half {
            for z in -half..=half {
                let r2 = x * x + y * y + z * z;
                // The probe occupies the origin site.
                if r2 > 0 {
                    sites.push(([x, y, z], r2));
                }
            }
        }
    }
    sites.sort_by(|u, v| u.1.cmp(&v.1).then(u.0.cmp(&v.0)));
    sites
        .into_iter()
        .take(config.n_spins)
        .map(|(c, _)| [c[0] as f64 * a, c[1] as f64 * a, c[2] as f64 * a])
        .collect()
}

/// Places spins, draws infinite-temperature occupations and builds the pair
/// list. Deterministic given `config.seed`.
pub fn build_bath(config: &BathConfig) -> Result<BathState> {
    config.validate()?;
    let positions = match config.geometry {
        Geometry::RandomUniformInSphere => {
            let mut rng = rng::stream(rng::derive_seed(config.seed, "bath/geometry"), 0);
            place_random(config, &mut rng)
        }
        Geometry::CubicLattice => place_lattice(config),
    };
    build_bath_from_positions(config, positions, |p| {
        if p.slow {
            config.rate_slow_per_s
        } else {
            config.rate_fast_per_s
        }
    })
}

/// Builds a bath from explicit positions; `rate` assigns each pair its
/// flip-flop rate.
pub fn build_bath_from_positions<R>(
    config: &BathConfig,
    positions: Vec<[f64; 3]>,
    rate: R,
) -> Result<BathState>
where
    R: Fn(&PairInfo) -> f64,
{
    config.validate()?;
    if positions.len() < 2 {
        return Err(Error::param("n_spins", "need at least two spins"));
    }
    let mut couplings = Vec::with_capacity(positions.len());
    let mut in_core = Vec::with_capacity(positions.len());
    for (k, p) in positions.iter().enumerate() {
        let r = norm(p);
        if !(r >= MIN_PROBE_DISTANCE_NM) {
            return Err(Error::Geometry(format!(
                "spin {k} at r = {r} nm coincides with the probe (< {MIN_PROBE_DISTANCE_NM} nm)"
            )));
        }
        couplings.push(units::hz_to_rad(config.coupling_scale_hz_nm3) / (r * r * r));
        in_core.push(r < config.frozen_core_radius_nm);
    }

    let n = positions.len();
    let mut pairs = Vec::new();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(&positions[i], &positions[j]);
            if d <= config.pairing_cutoff_nm {
                let slow = in_core[i] || in_core[j];
                let info = PairInfo {
                    i,
                    j,
                    distance_nm: d,
                    slow,
                };
                let r = rate(&info);
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::param(
                        "rate",
                        format!("pair ({i}, {j}) got rate {r}"),
                    ));
                }
                adjacency[i].push(pairs.len());
                adjacency[j].push(pairs.len());
                pairs.push(Pair {
                    i,
                    j,
                    rate: r,
                    slow,
                });
            }
        }
    }

    let isolated: Vec<usize> = (0..n).filter(|&k| adjacency[k].is_empty()).collect();
    let mut warnings = Vec::new();
    if !isolated.is_empty() {
        warnings.push(format!(
            "{} spin(s) have no partner within {} nm and never flip: {:?}",
            isolated.len(),
            config.pairing_cutoff_nm,
            &isolated[..isolated.len().min(16)]
        ));
    }

    let mut occ_rng = rng::stream(rng::derive_seed(config.seed, "bath/occupations"), 0);
    let occupations = (0..n)
        .map(|_| if occ_rng.random::<bool>() { 1 } else { -1 })
        .collect();

    Ok(BathState {
        positions,
        couplings,
        occupations,
        in_core,
        pairs,
        time: 0.0,
        warnings,
        seed: rng::derive_seed(config.seed, "bath/evolve"),
        evolutions: 0,
        adjacency,
    })
}

impl BathState {
    pub fn field(&self) -> f64 {
        self.couplings
            .iter()
            .zip(&self.occupations)
            .map(|(a, &n)| a * f64::from(n))
            .sum()
    }

    pub fn magnetization(&self) -> i64 {
        self.occupations.iter().map(|&n| i64::from(n)).sum()
    }

    /// Field variance at infinite temperature, `Σ Aᵢ²`, rad²/s².
    pub fn field_variance(&self) -> f64 {
        self.couplings.iter().map(|a| a * a).sum()
    }

    /// Pair indices touching spin `k`.
    pub fn pairs_of(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }

    /// Replaces occupations with fresh fair coin flips from `rng`.
    pub fn randomize_occupations(&mut self, rng: &mut StreamRng) {
        for n in &mut self.occupations {
            *n = if rng.random::<bool>() { 1 } else { -1 };
        }
    }
}

/// Binary sum tree over pair propensities.
#[derive(Debug, Clone)]
struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + values.len()].copy_from_slice(values);
        for k in (1..size).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        SumTree { size, nodes }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn set(&mut self, idx: usize, value: f64) {
        let mut k = idx + self.size;
        self.nodes[k] = value;
        k /= 2;
        while k >= 1 {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            k /= 2;
        }
    }

    /// Leaf whose cumulative interval contains `u ∈ [0, total)`.
    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.size
    }
}

/// One flip-flop event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub i: usize,
    pub j: usize,
}

/// Event counts and active-pair exposure per rate class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateStats {
    pub slow_events: u64,
    pub fast_events: u64,
    /// ∫ (number of active slow pairs) dt.
    pub slow_exposure: f64,
    pub fast_exposure: f64,
}

impl RateStats {
    /// Empirical per-pair rates with Poisson standard errors:
    /// `((slow, σ), (fast, σ))`.
    pub fn empirical_rates(&self) -> ((f64, f64), (f64, f64)) {
        let est = |e: u64, x: f64| {
            let e = e as f64;
            (e / x, e.sqrt() / x)
        };
        (
            est(self.slow_events, self.slow_exposure),
            est(self.fast_events, self.fast_exposure),
        )
    }

    /// Ratio slow/fast with its propagated standard error.
    pub fn rate_ratio(&self) -> (f64, f64) {
        let ((s, ss), (f, sf)) = self.empirical_rates();
        let ratio = s / f;
        (ratio, ratio * ((ss / s).powi(2) + (sf / f).powi(2)).sqrt())
    }
}

/// Event-driven evolution of a bath's occupations.
pub struct BathWalker<'a> {
    bath: &'a BathState,
    occupations: Vec<i8>,
    tree: SumTree,
    rng: StreamRng,
    time: f64,
    next_event: f64,
    field: f64,
    active_slow: usize,
    active_fast: usize,
    pub stats: RateStats,
    log: Option<Vec<Event>>,
}

impl<'a> BathWalker<'a> {
    /// Starts from `occupations` (or the bath's own) at the bath's time.
    pub fn new(
        bath: &'a BathState,
        occupations: Option<Vec<i8>>,
        rng: StreamRng,
        keep_log: bool,
    ) -> Self {
        let occupations = occupations.unwrap_or_else(|| bath.occupations.clone());
        let mut active_slow = 0;
        let mut active_fast = 0;
        let props: Vec<f64> = bath
            .pairs
            .iter()
            .map(|p| {
                if occupations[p.i] != occupations[p.j] {
                    if p.slow {
                        active_slow += 1;
                    } else {
                        active_fast += 1;
                    }
                    p.rate
                } else {
                    0.0
                }
            })
            .collect();
        let field = bath
            .couplings
            .iter()
            .zip(&occupations)
            .map(|(a, &n)| a * f64::from(n))
            .sum();
        let mut walker = BathWalker {
            bath,
            occupations,
            tree: SumTree::new(&props),
            rng,
            time: bath.time,
            next_event: f64::INFINITY,
            field,
            active_slow,
            active_fast,
            stats: RateStats::default(),
            log: keep_log.then(Vec::new),
        };
        walker.schedule();
        walker
    }

    fn schedule(&mut self) {
        let total = self.tree.total();
        self.next_event = if total > 0.0 {
            let u: f64 = self.rng.random();
            self.time - (1.0 - u).ln() / total
        } else {
            f64::INFINITY
        };
    }

    fn expose(&mut self, dt: f64) {
        self.stats.slow_exposure += self.active_slow as f64 * dt;
        self.stats.fast_exposure += self.active_fast as f64 * dt;
    }

    fn fire(&mut self) {
        let u = self.rng.random::<f64>() * self.tree.total();
        let idx = self.tree.find(u);
        let pair = self.bath.pairs[idx];
        debug_assert_ne!(self.occupations[pair.i], self.occupations[pair.j]);
        self.occupations[pair.i] = -self.occupations[pair.i];
        self.occupations[pair.j] = -self.occupations[pair.j];
        self.field += 2.0
            * (self.bath.couplings[pair.i] * f64::from(self.occupations[pair.i])
                + self.bath.couplings[pair.j] * f64::from(self.occupations[pair.j]));
        if pair.slow {
            self.stats.slow_events += 1;
        } else {
            self.stats.fast_events += 1;
        }
        if let Some(log) = &mut self.log {
            log.push(Event {
                t: self.time,
                i: pair.i,
                j: pair.j,
            });
        }
        for &spin in &[pair.i, pair.j] {
            for &pk in &self.bath.adjacency[spin] {
                let p = self.bath.pairs[pk];
                let was = self.tree.nodes[pk + self.tree.size] > 0.0;
                let now = self.occupations[p.i] != self.occupations[p.j] && p.rate > 0.0;
                if was != now {
                    self.tree.set(pk, if now { p.rate } else { 0.0 });
                    let counter = if p.slow {
                        &mut self.active_slow
                    } else {
                        &mut self.active_fast
                    };
                    if now {
                        *counter += 1;
                    } else {
                        *counter -= 1;
                    }
                }
            }
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn occupations(&self) -> &[i8] {
        &self.occupations
    }

    /// Advances by `dt`, returning the exact integral of ξ over the step.
    pub fn integrate(&mut self, dt: f64) -> f64 {
        let end = self.time + dt;
        let mut acc = 0.0;
        while self.next_event <= end {
            let step = self.next_event - self.time;
            acc += self.field * step;
            self.expose(step);
            self.time = self.next_event;
            self.fire();
            self.schedule();
        }
        let step = end - self.time;
        acc += self.field * step;
        self.expose(step);
        self.time = end;
        acc
    }

    /// Advances to the next event (if any occurs before `limit`) and returns
    /// whether one fired.
    pub fn step_event(&mut self, limit: f64) -> bool {
        if self.next_event <= limit {
            let step = self.next_event - self.time;
            self.expose(step);
            self.time = self.next_event;
            self.fire();
            self.schedule();
            true
        } else {
            let step = limit - self.time;
            self.expose(step);
            self.time = limit;
            false
        }
    }

    pub fn take_log(&mut self) -> Vec<Event> {
        self.log.take().unwrap_or_default()
    }
}

/// Output of [`evolve`].
#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    /// ξ(t) sampled every `sample_dt` starting at the initial time.
    pub trajectory: NoiseTrajectory,
    pub events: Vec<Event>,
    pub initial_occupations: Vec<i8>,
    pub start_time: f64,
    pub stats: RateStats,
}

/// Runs the bath for `duration`, sampling ξ every `sample_dt`, and leaves
/// `state` at the final configuration.
pub fn evolve(state: &mut BathState, duration: f64, sample_dt: f64) -> Result<FieldTrajectory> {
    if !(sample_dt.is_finite() && sample_dt > 0.0) {
        return Err(Error::param(
            "sample_dt_s",
            format!("must be > 0, got {sample_dt}"),
        ));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::param(
            "duration_s",
            format!("must be > 0, got {duration}"),
        ));
    }
    let n = ((duration / sample_dt).round() as usize).max(1);
    let stream_seed = state.seed;
    let stream_index = state.evolutions;
    let initial = state.occupations.clone();
    let start = state.time;
    let (samples, events, stats, final_occ) = {
        let rng = rng::stream(stream_seed, stream_index);
        let mut walker = BathWalker::new(state, None, rng, true);
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            let target = start + k as f64 * sample_dt;
            while walker.step_event(target) {}
            samples.push(walker.field());
        }
        while walker.step_event(start + duration) {}
        let events = walker.take_log();
        (samples, events, walker.stats, walker.occupations.clone())
    };
    state.occupations = final_occ;
    state.time = start + duration;
    state.evolutions += 1;
    Ok(FieldTrajectory {
        trajectory: NoiseTrajectory {
            dt: sample_dt,
            samples,
            seed: stream_seed ^ stream_index,
            model_tag: "bath-kmc".into(),
        },
        events,
        initial_occupations: initial,
        start_time: start,
        stats,
    })
}

/// Sample autocovariance at uniformly spaced lags.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

/// Unbiased sample autocovariance `1/(N−k) Σ (xᵢ − x̄)(xᵢ₊ₖ − x̄)` for lags up
/// to `max_lag`, computed with an FFT.
pub fn estimate_autocorrelation(traj: &NoiseTrajectory, max_lag: f64) -> Result<CorrelationCurve> {
    let n = traj.samples.len();
    if n < 10 {
        return Err(Error::Estimation(format!("{n} samples are too few")));
    }
    if !(max_lag >= 0.0) || max_lag > traj.duration() / 5.0 {
        return Err(Error::Estimation(format!(
            "max_lag {max_lag} s exceeds duration/5 = {} s",
            traj.duration() / 5.0
        )));
    }
    let k_max = (max_lag / traj.dt).floor() as usize;
    let mean = traj.samples.iter().sum::<f64>() / n as f64;
    let sums = crate::periodogram::lagged_products(
        &traj.samples.iter().map(|x| x - mean).collect::<Vec<_>>(),
        k_max,
    );
    let values = sums
        .iter()
        .enumerate()
        .map(|(k, s)| s / (n - k) as f64)
        .collect();
    Ok(CorrelationCurve {
        lags: (0..=k_max).map(|k| k as f64 * traj.dt).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFit {
    pub tau_c: f64,
    pub tau_c_stderr: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    /// 1 − RSS/TSS.
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoExponentialFit {
    pub tau_slow: f64,
    pub tau_fast: f64,
    pub amplitude_slow: f64,
    pub amplitude_fast: f64,
    pub residual_norm: f64,
}

fn check_curve(curve: &CorrelationCurve) -> Result<()> {
    if curve.values.len() < 10 || curve.lags.len() != curve.values.len() {
        return Err(Error::Estimation(
            "need at least 10 correlation points".into(),
        ));
    }
    if !(curve.values[0] > 0.0) {
        return Err(Error::Estimation("lag-0 value must be positive".into()));
    }
    let last = *curve.values.last().unwrap();
    if last >= 0.95 * curve.values[0] {
        return Err(Error::FitFailure {
            reason: "correlation does not decay over the supplied lags".into(),
            best: None,
        });
    }
    Ok(())
}

fn initial_tau(curve: &CorrelationCurve) -> f64 {
    let c0 = curve.values[0];
    curve
        .values
        .iter()
        .position(|&v| v < c0 / std::f64::consts::E)
        .map(|k| curve.lags[k].max(curve.lags[1]))
        .unwrap_or(*curve.lags.last().unwrap())
}

/// Least-squares fit of `c·exp(−t/τc)`.
pub fn fit_correlation_time(curve: &CorrelationCurve) -> Result<CorrelationFit> {
    check_curve(curve)?;
    let res = |p: &[f64]| {
        let (c, tau) = (p[0].exp(), p[1].exp());
        curve
            .lags
            .iter()
            .zip(&curve.values)
            .map(|(&t, &v)| c * (-t / tau).exp() - v)
            .collect::<Vec<_>>()
    };
    let x0 = [curve.values[0].ln(), initial_tau(curve).ln()];
    let rep = lsq::minimize(res, &x0, &LmOptions::default());
    if !rep.converged() {
        return Err(Error::FitFailure {
            reason: "correlation-time fit did not converge".into(),
            best: Some(rep.params.iter().map(|p| p.exp()).collect()),
        });
    }
    let tau = rep.params[1].exp();
    let se = rep.std_errors(rep.residual_variance());
    let mean = curve.values.iter().sum::<f64>() / curve.values.len() as f64;
    let tss: f64 = curve.values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(CorrelationFit {
        tau_c: tau,
        tau_c_stderr: tau * se[1],
        amplitude: rep.params[0].exp(),
        residual_norm: rep.residual_norm(),
        r_squared: 1.0 - 2.0 * rep.cost / tss,
    })
}

/// Least-squares fit of `c_s·exp(−t/τ_s) + c_f·exp(−t/τ_f)` with `τ_s ≥ τ_f`.
pub fn fit_two_exponentials(curve: &CorrelationCurve) -> Result<TwoExponentialFit> {
    check_curve(curve)?;
    let unpack = |p: &[f64]| {
        let tf = p[1].exp();
        (p[0].exp(), tf * (1.0 + p[2].exp()), p[3].exp(), tf)
    };
    let res = |p: &[f64]| {
        let (cs, ts, cf, tf) = unpack(p);
        curve
            .lags
            .iter()
            .zip(&curve.values)
            .map(|(&t, &v)| cs * (-t / ts).exp() + cf * (-t / tf).exp() - v)
            .collect::<Vec<_>>()
    };
    let t0 = initial_tau(curve);
    let c0 = curve.values[0];
    let mut best: Option<lsq::LmReport> = None;
    for (split, ratio) in [(0.5, 10.0f64), (0.8, 30.0), (0.2, 5.0), (0.5, 100.0)] {
        let x0 = [
            (c0 * split).ln(),
            (t0 / ratio.sqrt()).ln(),
            (ratio - 1.0).ln(),
            (c0 * (1.0 - split)).ln(),
        ];
        let rep = lsq::minimize(res, &x0, &LmOptions::default());
        if best.as_ref().is_none_or(|b| rep.cost < b.cost) {
            best = Some(rep);
        }
    }
    let rep = best.expect("at least one start");
    let (cs, ts, cf, tf) = unpack(&rep.params);
    Ok(TwoExponentialFit {
        tau_slow: ts,
        tau_fast: tf,
        amplitude_slow: cs,
        amplitude_fast: cf,
        residual_norm: rep.residual_norm(),
    })
}
