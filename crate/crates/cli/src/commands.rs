//! Subcommand bodies. Each reads the validated [`Config`] and writes through
//! one [`OutputSink`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ddspec::bath::{build_bath, evolve};
use ddspec::coherence::{
    extract_t2, mc_decay, scaling_exponent, CoherenceCurve, CoherencePoint, McOptions, NoiseSource,
    Provenance, SequenceDescriptor,
};
use ddspec::filter::{chi_with, ChiOptions, PulseSequence, SequenceKind};
use ddspec::magnetometry::{fit_response, sensitivity, simulate_sweep};
use ddspec::noise::{autocorrelation_internal, sample_trajectory, SpectralModel};
use ddspec::periodogram::{log_bin, welch};
use ddspec::rng::derive_seed;
use ddspec::spectroscopy::{
    compare_models, decay_rates, log_grid, reconstruct, RateSource, ReconstructOptions,
    SpectrumEstimate, SpectrumPoint,
};
use ddspec::stats::moments;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, DecayMethod};
use crate::datasets::{
    read_csv, sniff, to_csv, CoherenceRow, EventRow, FitCurveRow, RateRow, Schema, SensingRow,
    SpectrumRow, T2Row, TrajectoryRow,
};
use crate::error::{CliError, CliResult, ConfigError};
use crate::manifest::{sha256_hex, OutputFile, OutputSink, RunManifest};
use crate::plot::{export_plotdata, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceProfile {
    Fast,
    Strict,
}

impl ToleranceProfile {
    pub fn name(self) -> &'static str {
        match self {
            ToleranceProfile::Fast => "fast",
            ToleranceProfile::Strict => "strict",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fast" => Some(ToleranceProfile::Fast),
            "strict" => Some(ToleranceProfile::Strict),
            _ => None,
        }
    }

    fn chi_rel_tol(self) -> f64 {
        match self {
            ToleranceProfile::Fast => 1e-8,
            ToleranceProfile::Strict => 1e-10,
        }
    }

    fn trajectories(self) -> usize {
        match self {
            ToleranceProfile::Fast => 10_000,
            ToleranceProfile::Strict => 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateNoise,
    SimulateBath,
    Decay,
    Reconstruct,
    Fit,
    Sense,
    Report,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::SimulateNoise,
        Command::SimulateBath,
        Command::Decay,
        Command::Reconstruct,
        Command::Fit,
        Command::Sense,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateNoise => "simulate-noise",
            Command::SimulateBath => "simulate-bath",
            Command::Decay => "decay",
            Command::Reconstruct => "reconstruct",
            Command::Fit => "fit",
            Command::Sense => "sense",
            Command::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Everything a subcommand may read or record besides its outputs.
pub struct RunContext<'a> {
    pub config: &'a Config,
    /// Directory that relative paths in the config refer to.
    pub base_dir: PathBuf,
    pub root_seed: u64,
    pub profile: ToleranceProfile,
    pub derived_seeds: BTreeMap<String, u64>,
    pub inputs: Vec<OutputFile>,
}

impl RunContext<'_> {
    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.root_seed, label);
        self.derived_seeds.insert(label.to_string(), s);
        s
    }

    fn model(&self) -> CliResult<SpectralModel> {
        self.config
            .model
            .ok_or_else(|| ConfigError::Missing("model.kind".into()).into())
    }

    fn chi_options(&self) -> ChiOptions {
        ChiOptions {
            rel_tol: self
                .config
                .chi_rel_tol
                .unwrap_or(self.profile.chi_rel_tol()),
            ..ChiOptions::default()
        }
    }

    fn read_input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(OutputFile {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

pub fn run(command: Command, ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    match command {
        Command::SimulateNoise => simulate_noise(ctx, sink),
        Command::SimulateBath => simulate_bath(ctx, sink),
        Command::Decay => decay(ctx, sink),
        Command::Reconstruct => reconstruct_cmd(ctx, sink),
        Command::Fit => fit(ctx, sink),
        Command::Sense => sense(ctx, sink),
        Command::Report => report(ctx, sink),
    }
}

fn simulate_noise(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let model = ctx.model()?;
    let cfg = &ctx.config.noise;
    let seed = ctx.seed("noise/trajectory");
    let tr = sample_trajectory(&model, cfg.dt_s, cfg.duration_s, seed)?;
    let rows: Vec<TrajectoryRow> = tr
        .times()
        .zip(&tr.samples)
        .map(|(t, &x)| TrajectoryRow {
            t_s: t,
            xi_rad_per_s: x,
        })
        .collect();
    sink.write("trajectory.csv", &to_csv(&rows, Schema::Trajectory))?;
    let m = moments(&tr.samples);
    sink.write_json(
        "simulate-noise.json",
        &json!({
            "model": model,
            "samples": tr.samples.len(),
            "dt_s": tr.dt,
            "mean_rad_per_s": m.mean,
            "variance_rad2_per_s2": m.variance,
            "expected_variance_rad2_per_s2": autocorrelation_internal(&model, 0.0)?,
        }),
    )
}

fn simulate_bath(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let section = ctx.config.bath.clone();
    let samples = (section.duration_s / section.sample_dt_s).round() as usize;
    if section.analyze && section.segment_len > samples {
        return Err(ConfigError::Range(format!(
            "bath.segment_len ({}) exceeds the {samples} samples set by bath.duration_s / bath.sample_dt_s",
            section.segment_len
        ))
        .into());
    }
    let mut bc = section.config.clone();
    bc.seed = ctx.seed("bath/kmc");
    let mut state = build_bath(&bc)?;
    let initial_magnetization = state.magnetization();
    let ft = evolve(&mut state, section.duration_s, section.sample_dt_s)?;

    let tr = &ft.trajectory;
    let rows: Vec<TrajectoryRow> = tr
        .times()
        .zip(&tr.samples)
        .map(|(t, &x)| TrajectoryRow {
            t_s: ft.start_time + t,
            xi_rad_per_s: x,
        })
        .collect();
    sink.write("bath_trajectory.csv", &to_csv(&rows, Schema::Trajectory))?;
    let events: Vec<EventRow> = ft
        .events
        .iter()
        .map(|e| EventRow {
            t_s: e.t,
            i: e.i,
            j: e.j,
        })
        .collect();
    sink.write("bath_events.csv", &to_csv(&events, Schema::Events))?;

    let ((slow, slow_se), (fast, fast_se)) = ft.stats.empirical_rates();
    let (ratio, ratio_se) = ft.stats.rate_ratio();
    let mut summary = json!({
        "n_spins": state.positions.len(),
        "core_spins": state.in_core.iter().filter(|&&c| c).count(),
        "pairs": state.pairs.len(),
        "field_variance_rad2_per_s2": state.field_variance(),
        "magnetization_initial": initial_magnetization,
        "magnetization_final": state.magnetization(),
        "events": events.len(),
        "slow_events": ft.stats.slow_events,
        "fast_events": ft.stats.fast_events,
        "rate_slow_per_s": [slow, slow_se],
        "rate_fast_per_s": [fast, fast_se],
        "rate_ratio": [ratio, ratio_se],
        "configured_rate_ratio": bc.rate_slow_per_s / bc.rate_fast_per_s,
        "warnings": state.warnings,
    });

    if section.analyze {
        let dt = section.sample_dt_s;
        let seg = section.segment_len;
        let p = welch(&tr.samples, dt, seg)?;
        let bins = log_bin(
            &p,
            section.bins_per_decade,
            2.0 / (seg as f64 * dt),
            0.1 / dt,
        );
        let spec = SpectrumEstimate::from_periodogram(&bins)?;
        sink.write(
            "bath_spectrum.csv",
            &to_csv(&spectrum_rows(&spec), Schema::Spectrum),
        )?;
        summary["model_ranking"] = ranking_json(&compare_models(&spec)?, &[]);
    }
    sink.write_json("simulate-bath.json", &summary)
}

fn decay(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let model = ctx.model()?;
    let cfg = ctx.config;
    let d = &cfg.decay;
    let taus = cfg.grid.taus();
    let opts = ctx.chi_options();
    let trajectories = d.trajectories.unwrap_or(ctx.profile.trajectories());
    let mut t2_rows = Vec::with_capacity(taus.len());
    let mut files = Vec::with_capacity(taus.len());
    for (k, &tau) in taus.iter().enumerate() {
        let curve = match d.method {
            DecayMethod::Analytic => {
                let mut points = Vec::with_capacity(d.n_pulses.len());
                for &n in &d.n_pulses {
                    let seq = PulseSequence::cpmg(n, tau)?;
                    let chi = chi_with(&model, &seq, &opts)?;
                    points.push(CoherencePoint {
                        t_s: seq.total_time(),
                        c: (-chi.value).exp(),
                        sigma_c: 0.0,
                    });
                }
                CoherenceCurve::new(
                    points,
                    SequenceDescriptor {
                        kind: SequenceKind::Cpmg,
                        tau_s: Some(tau),
                    },
                    Provenance::Analytic,
                )?
            }
            DecayMethod::MonteCarlo => {
                let mc = McOptions {
                    trajectories,
                    seed: ctx.seed(&format!("decay/monte-carlo/{k}")),
                    integrator: d.integrator,
                };
                mc_decay(NoiseSource::Model(&model), tau, &d.n_pulses, &mc)?
            }
        };
        let rows: Vec<CoherenceRow> = curve
            .points
            .iter()
            .map(|p| CoherenceRow {
                t_s: p.t_s,
                c: p.c,
                sigma_c: p.sigma_c,
            })
            .collect();
        let name = format!("decay_tau_{k:02}.csv");
        sink.write(&name, &to_csv(&rows, Schema::Coherence))?;
        // A curve that is flat or already gone at its first point has no
        // resolvable T₂; it is reported and left out of the table.
        match extract_t2(&curve, d.amplitude) {
            Ok(fit) => {
                t2_rows.push(T2Row {
                    tau_s: tau,
                    t2_s: fit.t2,
                    sigma_t2_s: fit.t2_stderr,
                });
                files.push(json!({"tau_s": tau, "file": name, "T2_s": fit.t2, "sigma_T2_s": fit.t2_stderr}));
            }
            Err(e) => files.push(json!({"tau_s": tau, "file": name, "unresolved": e.to_string()})),
        }
    }
    if t2_rows.is_empty() {
        return Err(ddspec::Error::FitFailure {
            reason: "no decay curve on the grid yields a T2".into(),
            best: None,
        }
        .into());
    }
    sink.write("t2.csv", &to_csv(&t2_rows, Schema::T2Table))?;
    let scaling = if t2_rows.len() >= 3 {
        let pairs: Vec<(f64, f64)> = t2_rows.iter().map(|r| (r.tau_s, r.t2_s)).collect();
        let s = scaling_exponent(&pairs)?;
        json!({"beta": s.beta, "beta_stderr": s.beta_stderr, "log_prefactor": s.log_prefactor})
    } else {
        Value::Null
    };
    let method = match d.method {
        DecayMethod::Analytic => json!({"kind": "analytic", "chi_rel_tol": opts.rel_tol}),
        DecayMethod::MonteCarlo => {
            json!({"kind": "monte-carlo", "trajectories": trajectories, "integrator": d.integrator})
        }
    };
    sink.write_json(
        "decay.json",
        &json!({
            "model": model,
            "n_pulses": d.n_pulses,
            "method": method,
            "curves": files,
            "scaling": scaling,
        }),
    )
}

fn spectrum_rows(spec: &SpectrumEstimate) -> Vec<SpectrumRow> {
    spec.points
        .iter()
        .map(|p| SpectrumRow {
            nu_hz: p.nu_hz,
            s: p.s,
            sigma_s: p.sigma_s,
        })
        .collect()
}

fn reconstruct_cmd(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let model = ctx.model()?;
    let cfg = &ctx.config.reconstruct;
    let taus = ctx.config.grid.taus();
    let rates = decay_rates(RateSource::Model(&model), cfg.n_pulses, &taus)?;
    let rows: Vec<RateRow> = rates
        .iter()
        .map(|r| RateRow {
            tau_s: r.tau_s,
            nu_hz: 1.0 / (2.0 * r.tau_s),
            gamma_per_s: r.gamma,
            sigma_gamma_per_s: r.sigma_gamma,
            flag: r.flag.clone().unwrap_or_default(),
        })
        .collect();
    sink.write("rates.csv", &to_csv(&rows, Schema::Rates))?;
    let spec = reconstruct(
        &rates,
        cfg.n_pulses,
        &ReconstructOptions {
            widened: cfg.widened,
            method: cfg.method,
        },
    )?;
    sink.write(
        "spectrum.csv",
        &to_csv(&spectrum_rows(&spec), Schema::Spectrum),
    )?;
    sink.write_json(
        "reconstruct.json",
        &json!({
            "model": model,
            "n_pulses": cfg.n_pulses,
            "method": cfg.method,
            "band_Hz": [spec.band.0, spec.band.1],
            "points": spec.points.len(),
            "flagged_rates": rows.iter().filter(|r| !r.flag.is_empty()).count(),
        }),
    )
}

fn ranking_json(
    ranked: &[ddspec::spectroscopy::RankedFit],
    only: &[ddspec::spectroscopy::FitKind],
) -> Value {
    let list: Vec<Value> = ranked
        .iter()
        .filter(|r| only.is_empty() || only.contains(&r.kind))
        .map(|r| match &r.outcome {
            Ok(f) => json!({
                "kind": r.kind,
                "status": "ok",
                "parameters": f.parameters,
                "residual_norm": f.residual_norm,
                "aicc": f.aicc,
                "converged": f.converged,
                "rank_deficient": f.rank_deficient,
            }),
            Err(e) => json!({"kind": r.kind, "status": "failed", "error": e.to_string()}),
        })
        .collect();
    Value::Array(list)
}

fn fit(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let rel = ctx
        .config
        .fit
        .spectrum_path
        .clone()
        .ok_or_else(|| ConfigError::Missing("fit.spectrum_path".into()))?;
    let path = ctx.base_dir.join(rel);
    ctx.read_input(&path)?;
    let rows: Vec<SpectrumRow> = read_csv(&path, Schema::Spectrum)?;
    if rows.is_empty() {
        return Err(CliError::data(&path, "no spectrum points"));
    }
    let points: Vec<SpectrumPoint> = rows
        .iter()
        .map(|r| SpectrumPoint {
            nu_hz: r.nu_hz,
            s: r.s,
            sigma_s: r.sigma_s,
        })
        .collect();
    let lo = points.iter().map(|p| p.nu_hz).fold(f64::INFINITY, f64::min);
    let hi = points
        .iter()
        .map(|p| p.nu_hz)
        .fold(f64::NEG_INFINITY, f64::max);
    let spec = SpectrumEstimate::new(points, (lo, hi), "csv")
        .map_err(|e| CliError::data(&path, e.to_string()))?;
    let ranked = compare_models(&spec)?;
    let kinds = &ctx.config.fit.kinds;
    let best = ranked
        .iter()
        .filter(|r| kinds.is_empty() || kinds.contains(&r.kind))
        .find_map(|r| r.outcome.as_ref().ok());
    let Some(best) = best else {
        return Err(ddspec::Error::FitFailure {
            reason: "no requested model could be fitted".into(),
            best: None,
        }
        .into());
    };
    let curve: Vec<FitCurveRow> = log_grid(lo, hi.max(lo * (1.0 + 1e-9)), 200)
        .into_iter()
        .map(|nu| FitCurveRow {
            nu_hz: nu,
            s_fit: best.evaluate(nu),
        })
        .collect();
    sink.write("fit_curve.csv", &to_csv(&curve, Schema::FitCurve))?;
    sink.write_json(
        "fit.json",
        &json!({
            "spectrum_path": path.display().to_string(),
            "points": spec.points.len(),
            "best": best.kind,
            "ranking": ranking_json(&ranked, kinds),
        }),
    )
}

fn sense(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let sensor = ctx.config.sensor;
    let sw = ctx.config.sweep.clone();
    let seed = ctx.seed("sense/readout");
    let run = simulate_sweep(
        &sensor,
        sw.tau_s,
        &sw.amplitudes(),
        sw.readout_sigma_rad,
        sw.repeats,
        seed,
    )?;
    let rows: Vec<SensingRow> = run
        .points
        .iter()
        .map(|p| SensingRow {
            b_ac_t: p.b_ac_t,
            x_over_r: p.x_over_r,
            y_over_r: p.y_over_r,
            phi_rad: p.phi_rad,
        })
        .collect();
    sink.write("sensing.csv", &to_csv(&rows, Schema::Sensing))?;
    let fit = fit_response(&run)?;
    let dphi = moments(&fit.residuals).variance.sqrt();
    let measured = sensitivity(dphi, fit.slope, run.t_total_s)?;
    let nominal = sensitivity(sw.readout_sigma_rad, sensor.slope(sw.tau_s), run.t_total_s)?;
    sink.write_json(
        "response_fit.json",
        &json!({
            "tau_s": run.tau_s,
            "nu_op_Hz": run.nu_op_hz,
            "t_total_s": run.t_total_s,
            "envelope": run.envelope,
            "slope_rad_per_T": fit.slope,
            "slope_stderr_rad_per_T": fit.slope_stderr,
            "intercept_rad": fit.intercept,
            "residuals_rad": fit.residuals,
            "delta_phi_rad": dphi,
            "delta_B_min_T": measured.delta_b_min_t,
            "eta_T_per_sqrt_Hz": measured.eta_t_per_sqrt_hz,
            "nominal": {
                "slope_rad_per_T": sensor.slope(sw.tau_s),
                "delta_phi_rad": sw.readout_sigma_rad,
                "delta_B_min_T": nominal.delta_b_min_t,
                "eta_T_per_sqrt_Hz": nominal.eta_t_per_sqrt_hz,
            },
        }),
    )
}

fn read_json(path: &Path) -> Option<Value> {
    fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
}

fn report(ctx: &mut RunContext, sink: &mut OutputSink) -> CliResult<()> {
    let dir = sink.dir().to_path_buf();
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let name_of = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };

    let fit_summary = read_json(&dir.join("fit.json"));
    let response = read_json(&dir.join("response_fit.json"));
    let mut plots = Vec::new();
    for path in &entries {
        let name = name_of(path);
        if !name.ends_with(".csv") || name.ends_with(".plot.csv") {
            continue;
        }
        let Some(schema) = sniff(path)? else { continue };
        let dataset = match schema {
            Schema::Coherence => Dataset::Coherence(read_csv(path, schema)?),
            Schema::Trajectory => Dataset::Trajectory(read_csv(path, schema)?),
            Schema::T2Table => Dataset::T2Table(read_csv(path, schema)?),
            Schema::Rates => Dataset::Rates(read_csv(path, schema)?),
            Schema::Spectrum => {
                // Overlay the fitted curve on the spectrum it was fitted to.
                let fitted_here = fit_summary
                    .as_ref()
                    .and_then(|f| f["spectrum_path"].as_str().map(PathBuf::from))
                    .and_then(|p| p.canonicalize().ok())
                    .is_some_and(|p| path.canonicalize().ok().as_ref() == Some(&p));
                let fit = if fitted_here && dir.join("fit_curve.csv").exists() {
                    Some(read_csv(&dir.join("fit_curve.csv"), Schema::FitCurve)?)
                } else {
                    None
                };
                Dataset::Spectrum {
                    points: read_csv(path, schema)?,
                    fit,
                }
            }
            Schema::Sensing => {
                let points: Vec<SensingRow> = read_csv(path, schema)?;
                let residuals = response.as_ref().and_then(|r| {
                    r["residuals_rad"]
                        .as_array()
                        .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<_>>())
                });
                let residuals = residuals.filter(|r| r.len() == points.len());
                Dataset::Sensing { points, residuals }
            }
            Schema::Events | Schema::FitCurve => continue,
        };
        ctx.read_input(path)?;
        let stem = name.trim_end_matches(".csv");
        let style = dataset.natural_style();
        let out = export_plotdata(&dataset, style, ctx.config.svg)?;
        sink.write(&format!("{stem}.plot.csv"), &out.table_csv)?;
        sink.write(&format!("{stem}.plot.json"), &out.axes_json)?;
        if let Some(svg) = &out.svg {
            sink.write(&format!("{stem}.svg"), svg.as_bytes())?;
        }
        plots.push((name, style));
    }

    let mut md = String::from("# ddspec report\n\n");
    let manifests: Vec<RunManifest> = entries
        .iter()
        .filter(|p| {
            name_of(p).ends_with(".manifest.json") && name_of(p) != RunManifest::file_name("report")
        })
        .filter_map(|p| RunManifest::load(p).ok())
        .collect();
    if !manifests.is_empty() {
        md.push_str("## Runs\n\n| command | status | seed | outputs |\n|---|---|---|---|\n");
        for m in &manifests {
            let status = match &m.status {
                crate::manifest::Status::Ok => "ok".to_string(),
                crate::manifest::Status::Failed(r) => format!("failed ({})", r.class),
            };
            md.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                m.command,
                status,
                m.seeds.root,
                m.outputs.len()
            ));
        }
        md.push('\n');
    }
    if let Some(d) = read_json(&dir.join("decay.json")) {
        md.push_str("## Coherence decay\n\n");
        if let Some(b) = d["scaling"]["beta"].as_f64() {
            let se = d["scaling"]["beta_stderr"].as_f64().unwrap_or(f64::NAN);
            md.push_str(&format!(
                "Scaling exponent β = {b:.3} ± {se:.3} (1/T₂ ∝ τ^β).\n\n"
            ));
        }
        md.push_str("| τ (s) | T₂ (s) |\n|---|---|\n");
        for c in d["curves"].as_array().into_iter().flatten() {
            if let Some(why) = c["unresolved"].as_str() {
                md.push_str(&format!(
                    "| {:.4} | unresolved: {why} |\n",
                    c["tau_s"].as_f64().unwrap_or(f64::NAN)
                ));
                continue;
            }
            md.push_str(&format!(
                "| {:.4} | {:.4} |\n",
                c["tau_s"].as_f64().unwrap_or(f64::NAN),
                c["T2_s"].as_f64().unwrap_or(f64::NAN)
            ));
        }
        md.push('\n');
    }
    if let Some(f) = &fit_summary {
        md.push_str("## Spectrum fit\n\n| model | residual norm | AICc |\n|---|---|---|\n");
        for r in f["ranking"].as_array().into_iter().flatten() {
            md.push_str(&format!(
                "| {} | {} | {} |\n",
                r["kind"].as_str().unwrap_or("?"),
                r["residual_norm"]
                    .as_f64()
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "failed".into()),
                r["aicc"]
                    .as_f64()
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_default(),
            ));
        }
        md.push('\n');
    }
    if let Some(r) = &response {
        md.push_str("## Magnetometry\n\n");
        let g = |k: &str| r[k].as_f64().unwrap_or(f64::NAN);
        md.push_str(&format!(
            "Phase response {:.4} ± {:.4} rad/µT, δφ = {:.4} rad, δB_min = {:.3} nT, η = {:.3} nT/√Hz over T = {:.3} s.\n\n",
            g("slope_rad_per_T") * 1e-6,
            g("slope_stderr_rad_per_T") * 1e-6,
            g("delta_phi_rad"),
            g("delta_B_min_T") * 1e9,
            g("eta_T_per_sqrt_Hz") * 1e9,
            g("t_total_s"),
        ));
    }
    if let Some(b) = read_json(&dir.join("simulate-bath.json")) {
        md.push_str("## Bath\n\n");
        md.push_str(&format!(
            "{} events; slow/fast rate ratio {:.4e} ± {:.1e} (configured {:.4e}).\n\n",
            b["events"],
            b["rate_ratio"][0].as_f64().unwrap_or(f64::NAN),
            b["rate_ratio"][1].as_f64().unwrap_or(f64::NAN),
            b["configured_rate_ratio"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    if !plots.is_empty() {
        md.push_str("## Plot data\n\n");
        for (name, style) in &plots {
            md.push_str(&format!("- `{name}` → {} panel\n", style.name()));
        }
    }
    sink.write("report.md", md.as_bytes())
}
