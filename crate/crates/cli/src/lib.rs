//! Command-line front end: configuration, CSV interchange, plot exports and
//! reproducible run manifests.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::commands::{Command, RunContext, ToleranceProfile};
use crate::config::parse_config;
use crate::error::{CliError, CliResult, ConfigError, ErrorRecord, EXIT_OK};
use crate::manifest::{sha256_hex, ConfigRecord, OutputSink, RunManifest, Seeds, Status, Timing};

pub use crate::config::Config;
pub use crate::plot::{export_plotdata, Dataset, Style};

#[derive(Debug, Parser)]
#[command(
    name = "ddspec",
    version,
    about = "Dynamical-decoupling noise spectroscopy toolkit"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "ddspec-out")]
    pub out: PathBuf,

    /// Worker threads. Affects speed only.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = ToleranceProfile::Fast)]
    pub tolerance_profile: ToleranceProfile,

    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Subcommand)]
pub enum CliCommand {
    /// Sample a noise trajectory from the configured spectral model.
    SimulateNoise,
    /// Run the spin-bath kinetic Monte Carlo and analyse its field.
    SimulateBath,
    /// CPMG coherence decays over the τ grid, with T₂ and scaling exponent.
    Decay,
    /// Decay rates over the τ grid and the spectrum they imply.
    Reconstruct,
    /// Fit spectral models to a spectrum CSV.
    Fit,
    /// Simulated ac-field sweep, phase-response fit and sensitivity.
    Sense,
    /// Plot data for every dataset in the output directory, and a summary.
    Report,
    /// Repeat the run recorded in a manifest.
    Replay {
        /// Manifest written by an earlier run.
        manifest: PathBuf,
    },
}

impl CliCommand {
    fn command(&self) -> Option<Command> {
        Some(match self {
            CliCommand::SimulateNoise => Command::SimulateNoise,
            CliCommand::SimulateBath => Command::SimulateBath,
            CliCommand::Decay => Command::Decay,
            CliCommand::Reconstruct => Command::Reconstruct,
            CliCommand::Fit => Command::Fit,
            CliCommand::Sense => Command::Sense,
            CliCommand::Report => Command::Report,
            CliCommand::Replay { .. } => return None,
        })
    }
}

/// A fully resolved run request.
struct Request {
    command: Command,
    config_text: String,
    config_path: Option<PathBuf>,
    base_dir: PathBuf,
    seed_override: Option<u64>,
    profile: ToleranceProfile,
    replayed_from: Option<String>,
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                error::EXIT_CONFIG
            } else {
                EXIT_OK
            };
            let _ = e.print();
            if code != EXIT_OK {
                emit(&CliError::Usage(e.kind().to_string()).record());
            }
            return code;
        }
    };
    execute(&cli, argv)
}

fn emit(record: &ErrorRecord) {
    eprintln!("{}", serde_json::json!({ "error": record }));
}

fn execute(cli: &Cli, argv: Vec<String>) -> i32 {
    let started = SystemTime::now();
    let clock = Instant::now();
    let request = match resolve(cli) {
        Ok(r) => r,
        Err(e) => {
            // Nothing to run, but the failure is still recorded if possible.
            let name = cli.command.command().map(Command::name).unwrap_or("replay");
            let m = failed_manifest(name, &argv, cli, &e, started, clock);
            let _ = write_manifest(&cli.out, &m);
            emit(&e.record());
            return e.exit_code();
        }
    };
    let (produced, result, threads) =
        match with_threads(cli.threads, || run_request(&request, &cli.out)) {
            Ok(((p, r), n)) => (p, r, n),
            Err(e) => (Produced::default(), Err(e), 0),
        };
    let status = match result {
        Ok(()) => Status::Ok,
        Err(e) => {
            emit(&e.record());
            Status::Failed(e.record())
        }
    };
    let code = match &status {
        Status::Ok => EXIT_OK,
        Status::Failed(r) => r.exit_code,
    };
    let manifest = RunManifest {
        tool: "ddspec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: request.command.name().into(),
        argv,
        config: ConfigRecord {
            path: request
                .config_path
                .as_ref()
                .map(|p| p.display().to_string()),
            base_dir: request.base_dir.display().to_string(),
            sha256: sha256_hex(request.config_text.as_bytes()),
            text: request.config_text.clone(),
        },
        tolerance_profile: request.profile.name().into(),
        seeds: Seeds {
            root: produced.root_seed,
            derived: produced.derived,
        },
        defaults_applied: produced.defaults,
        inputs: produced.inputs,
        outputs: produced.outputs,
        status,
        timing: Timing {
            started_unix_s: unix_seconds(started),
            wall_s: clock.elapsed().as_secs_f64(),
            threads,
        },
        replayed_from: request.replayed_from.clone(),
    };
    match write_manifest(&cli.out, &manifest) {
        Ok(()) => code,
        Err(e) => {
            emit(&e.record());
            if code == EXIT_OK {
                e.exit_code()
            } else {
                code
            }
        }
    }
}

fn unix_seconds(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn failed_manifest(
    command: &str,
    argv: &[String],
    cli: &Cli,
    e: &CliError,
    started: SystemTime,
    clock: Instant,
) -> RunManifest {
    RunManifest {
        tool: "ddspec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        argv: argv.to_vec(),
        config: ConfigRecord {
            path: cli.config.as_ref().map(|p| p.display().to_string()),
            base_dir: String::new(),
            sha256: String::new(),
            text: String::new(),
        },
        tolerance_profile: cli.tolerance_profile.name().into(),
        seeds: Seeds {
            root: cli.seed.unwrap_or(0),
            derived: Default::default(),
        },
        defaults_applied: Vec::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        status: Status::Failed(e.record()),
        timing: Timing {
            started_unix_s: unix_seconds(started),
            wall_s: clock.elapsed().as_secs_f64(),
            threads: cli.threads.unwrap_or(0),
        },
        replayed_from: None,
    }
}

fn write_manifest(out: &Path, m: &RunManifest) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join(RunManifest::file_name(&m.command));
    let mut text = serde_json::to_string_pretty(m).expect("serializable manifest");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

fn resolve(cli: &Cli) -> CliResult<Request> {
    if let CliCommand::Replay { manifest } = &cli.command {
        let m = RunManifest::load(manifest)?;
        let command = Command::parse(&m.command)
            .ok_or_else(|| CliError::data(manifest, format!("unknown command `{}`", m.command)))?;
        let profile = ToleranceProfile::parse(&m.tolerance_profile).ok_or_else(|| {
            CliError::data(
                manifest,
                format!("unknown profile `{}`", m.tolerance_profile),
            )
        })?;
        if sha256_hex(m.config.text.as_bytes()) != m.config.sha256 {
            return Err(CliError::data(
                manifest,
                "config text does not match its digest",
            ));
        }
        return Ok(Request {
            command,
            config_text: m.config.text,
            config_path: m.config.path.map(PathBuf::from),
            base_dir: PathBuf::from(m.config.base_dir),
            seed_override: Some(m.seeds.root),
            profile,
            replayed_from: Some(manifest.display().to_string()),
        });
    }
    let command = cli.command.command().expect("replay handled above");
    let (text, base_dir) = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            let dir = if dir.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                dir
            };
            (text, dir.canonicalize().map_err(|e| CliError::io(&dir, e))?)
        }
        None => (
            String::new(),
            std::env::current_dir().map_err(|e| CliError::io(".", e))?,
        ),
    };
    Ok(Request {
        command,
        config_text: text,
        config_path: cli.config.clone(),
        base_dir,
        seed_override: cli.seed,
        profile: cli.tolerance_profile,
        replayed_from: None,
    })
}

/// What a run produced, complete or not.
#[derive(Default)]
struct Produced {
    outputs: Vec<manifest::OutputFile>,
    inputs: Vec<manifest::OutputFile>,
    derived: std::collections::BTreeMap<String, u64>,
    defaults: Vec<String>,
    root_seed: u64,
}

fn run_request(req: &Request, out: &Path) -> (Produced, CliResult<()>) {
    let mut produced = Produced {
        root_seed: req.seed_override.unwrap_or(0),
        ..Produced::default()
    };
    let config = match parse_config(&req.config_text) {
        Ok(c) => c,
        Err(e) => return (produced, Err(e.into())),
    };
    let root_seed = req.seed_override.or(config.seed).unwrap_or_else(|| {
        produced.defaults.push("seed = 0".into());
        0
    });
    produced.root_seed = root_seed;
    produced
        .defaults
        .extend(config.defaults_applied.iter().cloned());
    let mut sink = match OutputSink::new(out) {
        Ok(s) => s,
        Err(e) => return (produced, Err(e)),
    };
    let mut ctx = RunContext {
        config: &config,
        base_dir: req.base_dir.clone(),
        root_seed,
        profile: req.profile,
        derived_seeds: Default::default(),
        inputs: Vec::new(),
    };
    let result = commands::run(req.command, &mut ctx, &mut sink);
    produced.derived = ctx.derived_seeds;
    produced.inputs = ctx.inputs;
    produced.outputs = sink.into_files();
    (produced, result)
}

/// Runs `f` on a pool of `threads` workers and reports the worker count.
fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> R + Send,
) -> CliResult<(R, usize)> {
    if threads == Some(0) {
        return Err(ConfigError::Range("--threads must be >= 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        let pool = b
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        let n = pool.current_num_threads();
        Ok((pool.install(f), n))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok((f(), 1))
    }
}
