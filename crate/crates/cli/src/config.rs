//! TOML run configuration.
//!
//! Parsing happens in three passes. The text is first read as a generic TOML
//! table, so syntax errors carry a line and column. Every key is then checked
//! against a fixed schema, and a key that only lacks (or misspells) its unit
//! suffix is reported as such rather than as unknown. Finally the typed
//! [`Config`] is assembled with defaults and cross-key range checks.

use std::fmt::Display;
use std::path::PathBuf;

use ddspec::bath::{BathConfig, Geometry};
use ddspec::coherence::{Amplitude, Integrator};
use ddspec::magnetometry::{SensorConfig, WorkingPoint};
use ddspec::noise::SpectralModel;
use ddspec::spectroscopy::{FitKind, ReconstructMethod};
use toml::{Table, Value};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ty {
    Float,
    Int,
    Bool,
    Str,
    IntList,
    StrList,
}

struct Key {
    name: &'static str,
    /// Unit suffix carried by the key name, without the leading underscore.
    unit: Option<&'static str>,
    ty: Ty,
}

const fn key(name: &'static str, unit: Option<&'static str>, ty: Ty) -> Key {
    Key { name, unit, ty }
}

struct Section {
    name: &'static str,
    keys: &'static [Key],
}

const TOP: &[Key] = &[key("seed", None, Ty::Int)];

const SECTIONS: &[Section] = &[
    Section {
        name: "model",
        keys: &[
            key("kind", None, Ty::Str),
            key("b_Hz", Some("Hz"), Ty::Float),
            key("b_fast_Hz", Some("Hz"), Ty::Float),
            key("tau_c_s", Some("s"), Ty::Float),
            key("tau_c_slow_s", Some("s"), Ty::Float),
            key("tau_c_fast_s", Some("s"), Ty::Float),
            key("level_rad2_per_s", Some("rad2_per_s"), Ty::Float),
            key("amplitude_Hz", Some("Hz"), Ty::Float),
            key("alpha", None, Ty::Float),
        ],
    },
    Section {
        name: "noise",
        keys: &[
            key("dt_s", Some("s"), Ty::Float),
            key("duration_s", Some("s"), Ty::Float),
        ],
    },
    Section {
        name: "grid",
        keys: &[
            key("tau_min_s", Some("s"), Ty::Float),
            key("tau_max_s", Some("s"), Ty::Float),
            key("tau_count", None, Ty::Int),
            key("spacing", None, Ty::Str),
        ],
    },
    Section {
        name: "decay",
        keys: &[
            key("n_pulses", None, Ty::IntList),
            key("method", None, Ty::Str),
            key("trajectories", None, Ty::Int),
            key("integrator", None, Ty::Str),
            key("dt_s", Some("s"), Ty::Float),
            key("amplitude", None, Ty::Str),
        ],
    },
    Section {
        name: "reconstruct",
        keys: &[
            key("n_pulses", None, Ty::Int),
            key("method", None, Ty::Str),
            key("regularization", None, Ty::Float),
            key("widened", None, Ty::Bool),
        ],
    },
    Section {
        name: "fit",
        keys: &[
            key("spectrum_path", None, Ty::Str),
            key("kinds", None, Ty::StrList),
        ],
    },
    Section {
        name: "bath",
        keys: &[
            key("n_spins", None, Ty::Int),
            key("geometry", None, Ty::Str),
            key("density_per_nm3", Some("per_nm3"), Ty::Float),
            key("coupling_scale_Hz_nm3", Some("Hz_nm3"), Ty::Float),
            key("frozen_core_radius_nm", Some("nm"), Ty::Float),
            key("rate_slow_per_s", Some("per_s"), Ty::Float),
            key("rate_fast_per_s", Some("per_s"), Ty::Float),
            key("pairing_cutoff_nm", Some("nm"), Ty::Float),
            key("duration_s", Some("s"), Ty::Float),
            key("sample_dt_s", Some("s"), Ty::Float),
            key("analyze", None, Ty::Bool),
            key("segment_len", None, Ty::Int),
            key("bins_per_decade", None, Ty::Int),
        ],
    },
    Section {
        name: "sensor",
        keys: &[
            key("s1_rad_per_s_T", Some("rad_per_s_T"), Ty::Float),
            key("t2_s", Some("s"), Ty::Float),
            key("working_point", None, Ty::Str),
            key("phase_offset_rad", Some("rad"), Ty::Float),
        ],
    },
    Section {
        name: "sweep",
        keys: &[
            key("B_min_T", Some("T"), Ty::Float),
            key("B_max_T", Some("T"), Ty::Float),
            key("B_count", None, Ty::Int),
            key("tau_s", Some("s"), Ty::Float),
            key("readout_sigma_rad", Some("rad"), Ty::Float),
            key("repeats", None, Ty::Int),
        ],
    },
    Section {
        name: "solver",
        keys: &[key("chi_rel_tol", None, Ty::Float)],
    },
    Section {
        name: "output",
        keys: &[key("svg", None, Ty::Bool)],
    },
];

/// Suffixes recognised as an attempt at a unit, right or wrong.
const UNIT_WORDS: &[&str] = &[
    "s",
    "ms",
    "us",
    "ns",
    "min",
    "h",
    "Hz",
    "hz",
    "kHz",
    "MHz",
    "T",
    "mT",
    "uT",
    "nT",
    "G",
    "rad",
    "deg",
    "nm",
    "m",
    "per_s",
    "per_nm3",
    "nm3",
    "Hz_nm3",
    "rad2_per_s",
    "rad_per_s_T",
    "rad_per_T",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauSpacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    pub dt_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub tau_min_s: f64,
    pub tau_max_s: f64,
    pub tau_count: usize,
    pub spacing: TauSpacing,
}

impl GridSection {
    pub fn taus(&self) -> Vec<f64> {
        let n = self.tau_count;
        if n == 1 {
            return vec![self.tau_min_s];
        }
        (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                match self.spacing {
                    TauSpacing::Log => self.tau_min_s * (self.tau_max_s / self.tau_min_s).powf(f),
                    TauSpacing::Linear => self.tau_min_s + (self.tau_max_s - self.tau_min_s) * f,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySection {
    pub n_pulses: Vec<u32>,
    pub method: DecayMethod,
    /// `None` defers to the tolerance profile.
    pub trajectories: Option<usize>,
    pub integrator: Integrator,
    pub amplitude: Amplitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructSection {
    pub n_pulses: u32,
    pub method: ReconstructMethod,
    pub widened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSection {
    pub spectrum_path: Option<PathBuf>,
    /// Empty means every model.
    pub kinds: Vec<FitKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSection {
    /// The seed field is replaced by a derived seed at run time.
    pub config: BathConfig,
    pub duration_s: f64,
    pub sample_dt_s: f64,
    pub analyze: bool,
    pub segment_len: usize,
    pub bins_per_decade: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub b_min_t: f64,
    pub b_max_t: f64,
    pub b_count: usize,
    pub tau_s: f64,
    pub readout_sigma_rad: f64,
    pub repeats: u32,
}

impl SweepSection {
    pub fn amplitudes(&self) -> Vec<f64> {
        let n = self.b_count;
        (0..n)
            .map(|k| self.b_min_t + (self.b_max_t - self.b_min_t) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: Option<u64>,
    pub model: Option<SpectralModel>,
    pub noise: NoiseSection,
    pub grid: GridSection,
    pub decay: DecaySection,
    pub reconstruct: ReconstructSection,
    pub fit: FitSection,
    pub bath: BathSection,
    pub sensor: SensorConfig,
    pub sweep: SweepSection,
    /// `None` defers to the tolerance profile.
    pub chi_rel_tol: Option<f64>,
    pub svg: bool,
    /// `section.key = value` for every default that was filled in.
    pub defaults_applied: Vec<String>,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| syntax_error(text, &e))?;
    check_schema(&table)?;
    build(&table)
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rsplit('\n')
        .next()
        .map(|l| l.chars().count())
        .unwrap_or(0)
        + 1;
    ConfigError::Syntax {
        line,
        column,
        message: e.message().trim().to_string(),
    }
}

fn check_schema(table: &Table) -> Result<(), ConfigError> {
    for (name, value) in table {
        if let Some(section) = SECTIONS.iter().find(|s| s.name == name) {
            let Value::Table(inner) = value else {
                return Err(ConfigError::InvalidValue {
                    key: name.clone(),
                    reason: "expected a table".into(),
                });
            };
            for (k, v) in inner {
                let path = format!("{name}.{k}");
                check_key(section.keys, k, v, &path)?;
            }
        } else {
            check_key(TOP, name, value, name)?;
        }
    }
    Ok(())
}

fn check_key(keys: &[Key], k: &str, v: &Value, path: &str) -> Result<(), ConfigError> {
    match keys.iter().find(|key| key.name == k) {
        Some(key) => check_type(key.ty, v, path),
        None => Err(unknown(keys, k, path)),
    }
}

fn unknown(keys: &[Key], k: &str, path: &str) -> ConfigError {
    for key in keys {
        let Some(unit) = key.unit else { continue };
        let stem = &key.name[..key.name.len() - unit.len() - 1];
        let wrong_unit = k
            .strip_prefix(stem)
            .and_then(|rest| rest.strip_prefix('_'))
            .is_some_and(|u| UNIT_WORDS.contains(&u));
        if k == stem || wrong_unit {
            let section = path
                .rsplit_once('.')
                .map(|(s, _)| format!("{s}."))
                .unwrap_or_default();
            return ConfigError::UnitSuffix {
                key: path.to_string(),
                expected: format!("{section}{}", key.name),
            };
        }
    }
    let hint = if SECTIONS.iter().any(|s| s.name == k) {
        Some("sections must be tables".to_string())
    } else {
        None
    };
    ConfigError::UnknownKey {
        key: path.to_string(),
        hint,
    }
}

fn check_type(ty: Ty, v: &Value, path: &str) -> Result<(), ConfigError> {
    let ok = match ty {
        Ty::Float => matches!(v, Value::Float(_) | Value::Integer(_)),
        Ty::Int => matches!(v, Value::Integer(_)),
        Ty::Bool => matches!(v, Value::Boolean(_)),
        Ty::Str => matches!(v, Value::String(_)),
        Ty::IntList => {
            matches!(v, Value::Array(a) if a.iter().all(|x| matches!(x, Value::Integer(_))))
        }
        Ty::StrList => {
            matches!(v, Value::Array(a) if a.iter().all(|x| matches!(x, Value::String(_))))
        }
    };
    if ok {
        Ok(())
    } else {
        let want = match ty {
            Ty::Float => "a number",
            Ty::Int => "an integer",
            Ty::Bool => "a boolean",
            Ty::Str => "a string",
            Ty::IntList => "an array of integers",
            Ty::StrList => "an array of strings",
        };
        Err(ConfigError::InvalidValue {
            key: path.to_string(),
            reason: format!("expected {want}, got {}", v.type_str()),
        })
    }
}

/// Typed access to one (possibly absent) section, recording defaults.
struct Reader<'a> {
    section: &'static str,
    table: Option<&'a Table>,
    defaults: &'a mut Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(root: &'a Table, section: &'static str, defaults: &'a mut Vec<String>) -> Self {
        Reader {
            section,
            table: root.get(section).and_then(Value::as_table),
            defaults,
        }
    }

    fn path(&self, k: &str) -> String {
        format!("{}.{k}", self.section)
    }

    fn raw(&self, k: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(k))
    }

    fn default<T: Display>(&mut self, k: &str, v: T) -> T {
        self.defaults.push(format!("{} = {v}", self.path(k)));
        v
    }

    fn opt_f64(&self, k: &str) -> Option<f64> {
        self.raw(k).map(|v| match v {
            Value::Integer(i) => *i as f64,
            Value::Float(f) => *f,
            _ => unreachable!("checked by schema"),
        })
    }

    fn f64(&mut self, k: &str, default: f64) -> f64 {
        match self.opt_f64(k) {
            Some(v) => v,
            None => self.default(k, default),
        }
    }

    fn req_f64(&self, k: &str) -> Result<f64, ConfigError> {
        self.opt_f64(k)
            .ok_or_else(|| ConfigError::Missing(self.path(k)))
    }

    fn opt_int(&self, k: &str) -> Option<i64> {
        self.raw(k).and_then(Value::as_integer)
    }

    fn count(&mut self, k: &str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = match self.opt_int(k) {
            Some(v) => v,
            None => return Ok(self.default(k, default)),
        };
        if v < min as i64 {
            return Err(ConfigError::Range(format!(
                "{} = {v} must be >= {min}",
                self.path(k)
            )));
        }
        usize::try_from(v)
            .map_err(|_| ConfigError::Range(format!("{} = {v} is too large", self.path(k))))
    }

    fn bool(&mut self, k: &str, default: bool) -> bool {
        match self.raw(k).and_then(Value::as_bool) {
            Some(v) => v,
            None => self.default(k, default),
        }
    }

    fn opt_str(&self, k: &str) -> Option<&'a str> {
        self.raw(k).and_then(Value::as_str)
    }

    fn choice<T: Copy>(
        &mut self,
        k: &str,
        options: &[(&str, T)],
        default: &str,
    ) -> Result<T, ConfigError> {
        let name = match self.opt_str(k) {
            Some(s) => s,
            None => self.default(k, default),
        };
        lookup(&self.path(k), name, options)
    }

    fn present(&self, k: &str) -> bool {
        self.raw(k).is_some()
    }
}

fn lookup<T: Copy>(path: &str, name: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
    options
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| ConfigError::InvalidValue {
            key: path.to_string(),
            reason: format!(
                "`{name}` is not one of {}",
                options
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        })
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Range(format!("{path} = {v} must be > 0")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Range(format!("{path} = {v} must be >= 0")))
    }
}

/// `lo < hi`, reported with both key names.
fn ordered(lo_key: &str, lo: f64, hi_key: &str, hi: f64) -> Result<(), ConfigError> {
    if lo < hi {
        Ok(())
    } else {
        Err(ConfigError::Range(format!(
            "{lo_key} >= {hi_key} ({lo} >= {hi})"
        )))
    }
}

fn build(root: &Table) -> Result<Config, ConfigError> {
    let mut defaults = Vec::new();
    let seed = match root.get("seed").and_then(Value::as_integer) {
        Some(s) if s < 0 => return Err(ConfigError::Range(format!("seed = {s} must be >= 0"))),
        Some(s) => Some(s as u64),
        None => None,
    };
    let model = build_model(root)?;

    let mut r = Reader::new(root, "noise", &mut defaults);
    let noise = NoiseSection {
        dt_s: r.f64("dt_s", 0.01),
        duration_s: r.f64("duration_s", 100.0),
    };
    positive("noise.dt_s", noise.dt_s)?;
    positive("noise.duration_s", noise.duration_s)?;
    ordered(
        "noise.dt_s",
        noise.dt_s,
        "noise.duration_s",
        noise.duration_s,
    )?;

    let mut r = Reader::new(root, "grid", &mut defaults);
    let grid = GridSection {
        tau_min_s: r.f64("tau_min_s", 0.05),
        tau_max_s: r.f64("tau_max_s", 12.0),
        tau_count: r.count("tau_count", 8, 1)?,
        spacing: r.choice(
            "spacing",
            &[("log", TauSpacing::Log), ("linear", TauSpacing::Linear)],
            "log",
        )?,
    };
    positive("grid.tau_min_s", grid.tau_min_s)?;
    positive("grid.tau_max_s", grid.tau_max_s)?;
    if grid.tau_count > 1 {
        ordered(
            "grid.tau_min_s",
            grid.tau_min_s,
            "grid.tau_max_s",
            grid.tau_max_s,
        )?;
    }

    let decay = build_decay(root, &mut defaults)?;

    let mut r = Reader::new(root, "reconstruct", &mut defaults);
    let n_pulses = r.count("n_pulses", 32, 1)?;
    let method = r.choice(
        "method",
        &[("delta-filter", false), ("linear-inversion", true)],
        "delta-filter",
    )?;
    let method = if method {
        let reg = r.f64("regularization", 1e-3);
        non_negative("reconstruct.regularization", reg)?;
        ReconstructMethod::LinearInversion {
            regularization: reg,
        }
    } else {
        if r.present("regularization") {
            return Err(ConfigError::UnknownKey {
                key: "reconstruct.regularization".into(),
                hint: Some("only used with method = \"linear-inversion\"".into()),
            });
        }
        ReconstructMethod::DeltaFilter
    };
    let reconstruct = ReconstructSection {
        n_pulses: u32::try_from(n_pulses)
            .map_err(|_| ConfigError::Range("reconstruct.n_pulses is too large".into()))?,
        method,
        widened: r.bool("widened", false),
    };

    let r = Reader::new(root, "fit", &mut defaults);
    let kinds = match r.raw("kinds").and_then(Value::as_array) {
        Some(list) => list
            .iter()
            .map(|v| lookup("fit.kinds", v.as_str().unwrap_or_default(), FIT_KINDS))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let fit = FitSection {
        spectrum_path: r.opt_str("spectrum_path").map(PathBuf::from),
        kinds,
    };

    let bath = build_bath(root, &mut defaults)?;
    let sensor = build_sensor(root, &mut defaults)?;

    let mut r = Reader::new(root, "sweep", &mut defaults);
    let sweep = SweepSection {
        b_min_t: r.f64("B_min_T", 0.0),
        b_max_t: r.f64("B_max_T", 2e-6),
        b_count: r.count("B_count", 81, 5)?,
        tau_s: r.f64("tau_s", ddspec::magnetometry::DEMO_TAU_S),
        readout_sigma_rad: r.f64(
            "readout_sigma_rad",
            ddspec::magnetometry::DEMO_DELTA_PHI_RAD,
        ),
        repeats: r.count("repeats", ddspec::magnetometry::DEMO_REPEATS as usize, 1)? as u32,
    };
    ordered(
        "sweep.B_min_T",
        sweep.b_min_t,
        "sweep.B_max_T",
        sweep.b_max_t,
    )?;
    positive("sweep.tau_s", sweep.tau_s)?;
    non_negative("sweep.readout_sigma_rad", sweep.readout_sigma_rad)?;

    let r = Reader::new(root, "solver", &mut defaults);
    let chi_rel_tol = r.opt_f64("chi_rel_tol");
    if let Some(t) = chi_rel_tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(ConfigError::Range(format!(
                "solver.chi_rel_tol = {t} must lie in (0, 1)"
            )));
        }
    }

    let mut r = Reader::new(root, "output", &mut defaults);
    let svg = r.bool("svg", true);

    Ok(Config {
        seed,
        model,
        noise,
        grid,
        decay,
        reconstruct,
        fit,
        bath,
        sensor,
        sweep,
        chi_rel_tol,
        svg,
        defaults_applied: defaults,
    })
}

const FIT_KINDS: &[(&str, FitKind)] = &[
    ("single-lorentzian", FitKind::SingleLorentzian),
    ("double-lorentzian", FitKind::DoubleLorentzian),
    (
        "double-lorentzian-two-amplitude",
        FitKind::DoubleLorentzianTwoAmplitude,
    ),
    ("power-law", FitKind::PowerLaw),
];

#[derive(Clone, Copy)]
enum ModelKind {
    Single,
    Double,
    White,
    PowerLaw,
}

fn build_model(root: &Table) -> Result<Option<SpectralModel>, ConfigError> {
    if root.get("model").is_none() {
        return Ok(None);
    }
    let mut scratch = Vec::new();
    let r = Reader::new(root, "model", &mut scratch);
    let kind_name = r
        .opt_str("kind")
        .ok_or_else(|| ConfigError::Missing("model.kind".into()))?;
    let kind = lookup(
        "model.kind",
        kind_name,
        &[
            ("single-lorentzian", ModelKind::Single),
            ("double-lorentzian", ModelKind::Double),
            ("white", ModelKind::White),
            ("power-law", ModelKind::PowerLaw),
        ],
    )?;
    let allowed: &[&str] = match kind {
        ModelKind::Single => &["b_Hz", "tau_c_s"],
        ModelKind::Double => &["b_Hz", "tau_c_slow_s", "tau_c_fast_s", "b_fast_Hz"],
        ModelKind::White => &["level_rad2_per_s"],
        ModelKind::PowerLaw => &["amplitude_Hz", "alpha"],
    };
    if let Some(t) = r.table {
        if let Some(extra) = t
            .keys()
            .find(|k| *k != "kind" && !allowed.contains(&k.as_str()))
        {
            return Err(ConfigError::UnknownKey {
                key: format!("model.{extra}"),
                hint: Some(format!("not a parameter of {kind_name}")),
            });
        }
    }
    let model = match kind {
        ModelKind::Single => {
            let (b, tc) = (r.req_f64("b_Hz")?, r.req_f64("tau_c_s")?);
            non_negative("model.b_Hz", b)?;
            positive("model.tau_c_s", tc)?;
            SpectralModel::single(b, tc)
        }
        ModelKind::Double => {
            let (b, ts, tf) = (
                r.req_f64("b_Hz")?,
                r.req_f64("tau_c_slow_s")?,
                r.req_f64("tau_c_fast_s")?,
            );
            let b_fast = r.opt_f64("b_fast_Hz");
            non_negative("model.b_Hz", b)?;
            if let Some(bf) = b_fast {
                non_negative("model.b_fast_Hz", bf)?;
            }
            positive("model.tau_c_slow_s", ts)?;
            positive("model.tau_c_fast_s", tf)?;
            if tf > ts {
                return Err(ConfigError::Range(format!(
                    "tau_c_fast_s > tau_c_slow_s ({tf} > {ts}) in [model]"
                )));
            }
            SpectralModel::DoubleLorentzian {
                b_hz: b,
                tau_c_slow_s: ts,
                tau_c_fast_s: tf,
                b_fast_hz: b_fast,
            }
        }
        ModelKind::White => {
            let level = r.req_f64("level_rad2_per_s")?;
            non_negative("model.level_rad2_per_s", level)?;
            SpectralModel::White {
                level_rad2_per_s: level,
            }
        }
        ModelKind::PowerLaw => {
            let (a, alpha) = (r.req_f64("amplitude_Hz")?, r.req_f64("alpha")?);
            positive("model.amplitude_Hz", a)?;
            if !alpha.is_finite() {
                return Err(ConfigError::Range(format!(
                    "model.alpha = {alpha} must be finite"
                )));
            }
            SpectralModel::PowerLaw {
                amplitude: a,
                alpha,
            }
        }
    };
    Ok(Some(model))
}

fn build_decay(root: &Table, defaults: &mut Vec<String>) -> Result<DecaySection, ConfigError> {
    let mut r = Reader::new(root, "decay", defaults);
    let n_pulses: Vec<u32> = match r.raw("n_pulses").and_then(Value::as_array) {
        Some(list) => list
            .iter()
            .map(|v| {
                let n = v.as_integer().unwrap_or(0);
                u32::try_from(n).ok().filter(|&n| n >= 1).ok_or_else(|| {
                    ConfigError::Range(format!("decay.n_pulses entry {n} must be >= 1"))
                })
            })
            .collect::<Result<_, _>>()?,
        None => {
            let d = vec![1, 2, 4, 8, 16, 32, 64];
            r.default("n_pulses", format!("{d:?}"));
            d
        }
    };
    if n_pulses.len() < 2 {
        return Err(ConfigError::Range(
            "decay.n_pulses needs at least two entries".into(),
        ));
    }
    if n_pulses.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::Range(
            "decay.n_pulses must be strictly increasing".into(),
        ));
    }
    let method = r.choice(
        "method",
        &[
            ("analytic", DecayMethod::Analytic),
            ("monte-carlo", DecayMethod::MonteCarlo),
        ],
        "analytic",
    )?;
    let trajectories = match r.opt_int("trajectories") {
        Some(t) if t < ddspec::coherence::MIN_TRAJECTORIES as i64 => {
            return Err(ConfigError::Range(format!(
                "decay.trajectories = {t} must be >= {}",
                ddspec::coherence::MIN_TRAJECTORIES
            )))
        }
        Some(t) => Some(t as usize),
        None => None,
    };
    let exact = r.choice(
        "integrator",
        &[("exact", true), ("trapezoid", false)],
        "exact",
    )?;
    let dt = r.opt_f64("dt_s");
    if let Some(dt) = dt {
        positive("decay.dt_s", dt)?;
        if exact {
            return Err(ConfigError::UnknownKey {
                key: "decay.dt_s".into(),
                hint: Some("only used with integrator = \"trapezoid\"".into()),
            });
        }
    }
    let integrator = if exact {
        Integrator::Exact
    } else {
        Integrator::Trapezoid { dt }
    };
    let amplitude = r.choice(
        "amplitude",
        &[("fixed", Amplitude::Fixed), ("free", Amplitude::Free)],
        "fixed",
    )?;
    Ok(DecaySection {
        n_pulses,
        method,
        trajectories,
        integrator,
        amplitude,
    })
}

fn build_bath(root: &Table, defaults: &mut Vec<String>) -> Result<BathSection, ConfigError> {
    let d = BathConfig::default();
    let mut r = Reader::new(root, "bath", defaults);
    let config = BathConfig {
        n_spins: r.count("n_spins", d.n_spins, 2)?,
        geometry: r.choice(
            "geometry",
            &[
                ("cubic-lattice", Geometry::CubicLattice),
                ("random-uniform-in-sphere", Geometry::RandomUniformInSphere),
            ],
            "cubic-lattice",
        )?,
        density_per_nm3: r.f64("density_per_nm3", d.density_per_nm3),
        coupling_scale_hz_nm3: r.f64("coupling_scale_Hz_nm3", d.coupling_scale_hz_nm3),
        frozen_core_radius_nm: r.f64("frozen_core_radius_nm", d.frozen_core_radius_nm),
        rate_slow_per_s: r.f64("rate_slow_per_s", d.rate_slow_per_s),
        rate_fast_per_s: r.f64("rate_fast_per_s", d.rate_fast_per_s),
        pairing_cutoff_nm: r.f64("pairing_cutoff_nm", d.pairing_cutoff_nm),
        seed: 0,
    };
    for (k, v) in [
        ("bath.density_per_nm3", config.density_per_nm3),
        ("bath.coupling_scale_Hz_nm3", config.coupling_scale_hz_nm3),
        ("bath.frozen_core_radius_nm", config.frozen_core_radius_nm),
        ("bath.rate_slow_per_s", config.rate_slow_per_s),
        ("bath.rate_fast_per_s", config.rate_fast_per_s),
        ("bath.pairing_cutoff_nm", config.pairing_cutoff_nm),
    ] {
        positive(k, v)?;
    }
    if config.rate_slow_per_s > config.rate_fast_per_s {
        return Err(ConfigError::Range(format!(
            "rate_slow_per_s > rate_fast_per_s ({} > {}) in [bath]",
            config.rate_slow_per_s, config.rate_fast_per_s
        )));
    }
    let section = BathSection {
        config,
        duration_s: r.f64("duration_s", 30.0),
        sample_dt_s: r.f64("sample_dt_s", 1e-3),
        analyze: r.bool("analyze", true),
        segment_len: r.count("segment_len", 4096, 8)?,
        bins_per_decade: r.count("bins_per_decade", 8, 1)?,
    };
    positive("bath.duration_s", section.duration_s)?;
    positive("bath.sample_dt_s", section.sample_dt_s)?;
    ordered(
        "bath.sample_dt_s",
        section.sample_dt_s,
        "bath.duration_s",
        section.duration_s,
    )?;
    Ok(section)
}

fn build_sensor(root: &Table, defaults: &mut Vec<String>) -> Result<SensorConfig, ConfigError> {
    let d = SensorConfig::offset_200g();
    let mut r = Reader::new(root, "sensor", defaults);
    let sensor = SensorConfig {
        s1_rad_per_s_t: r.f64("s1_rad_per_s_T", d.s1_rad_per_s_t),
        t2_s: r.f64("t2_s", d.t2_s),
        working_point: r.choice(
            "working_point",
            &[
                ("zefoz-near", WorkingPoint::ZefozNear),
                ("offset200g", WorkingPoint::Offset200g),
                ("offset6g", WorkingPoint::Offset6g),
                ("custom", WorkingPoint::Custom),
            ],
            "offset200g",
        )?,
        phase_offset_rad: r.f64("phase_offset_rad", d.phase_offset_rad),
        ..d
    };
    positive("sensor.t2_s", sensor.t2_s)?;
    if !sensor.s1_rad_per_s_t.is_finite() {
        return Err(ConfigError::Range(
            "sensor.s1_rad_per_s_T must be finite".into(),
        ));
    }
    Ok(sensor)
}
