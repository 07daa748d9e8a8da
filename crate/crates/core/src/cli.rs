//! `reprompt-control` subcommands: `run`, `plant-serve`, `report`.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or input error,
//! 3 plant I/O abort.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::backends::{
    build_backend, emulation_profile, Backend, BackendConfig, HttpConfig, LatencyMode,
    LatencyModel, Recorder, ReplayConfig, ScriptedConfig, ScriptedPolicy,
};
use crate::config::{load_twin_params, ConfigFile};
use crate::error::{Error, Result};
use crate::metrics::{self, Report, ReportFormat};
use crate::orchestrator::Controller;
use crate::plantio::{self, ClockMode, Plant, PlantServer, SimPlant, TcpPlant};
use crate::runlog::{LogHeader, RunLog, RunLogWriter};
use crate::twin::TwinParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PLANT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "reprompt-control",
    version,
    about = "Agentic heater control with validation and reprompting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a control experiment and print its report.
    Run(RunArgs),
    /// Serve the simulated plant over the TCP line protocol.
    PlantServe(ServeArgs),
    /// Compute metrics from a run log.
    Report(ReportArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `scripted:oracle`, `scripted:always_wrong`, `scripted:flip:<p>:<q>`
    /// (each optionally `@<seconds>` or `@<profile>`), `replay:<path>`, or
    /// `http:<model>@<base_url>`.
    #[arg(long)]
    pub backend: Option<String>,
    /// `sim` or `tcp:<host:port>`.
    #[arg(long, default_value = "sim")]
    pub plant: String,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:5555")]
    pub listen: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "lockstep")]
    pub mode: String,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "table")]
    pub format: String,
    #[arg(long)]
    pub points: Option<PathBuf>,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::PlantServe(args) => cmd_plant_serve(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn fail(code: i32, e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    code
}

fn parse_latency(spec: &str) -> Result<LatencyModel> {
    if emulation_profile(spec).is_some() {
        return Ok(LatencyModel::Profile { model: spec.into() });
    }
    let seconds: f64 = spec
        .parse()
        .map_err(|_| Error::config("--backend", format!("bad latency {spec:?}")))?;
    Ok(LatencyModel::Fixed { seconds })
}

/// Parses a `--backend` override. `current` supplies the latency model when a
/// scripted override does not name one.
pub fn parse_backend_override(
    spec: &str,
    current: Option<&BackendConfig>,
) -> Result<BackendConfig> {
    let bad = |msg: &str| Error::config("--backend", format!("{msg}: {spec:?}"));
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected <kind>:<args>"))?;
    let config = match kind {
        "scripted" => {
            let (policy_spec, latency) = match rest.split_once('@') {
                Some((p, l)) => (p, Some(parse_latency(l)?)),
                None => (rest, None),
            };
            let parts: Vec<&str> = policy_spec.split(':').collect();
            let policy = match parts.as_slice() {
                ["oracle"] => ScriptedPolicy::Oracle,
                ["always_wrong"] => ScriptedPolicy::AlwaysWrong,
                ["flip", p, q] => ScriptedPolicy::Flip {
                    p_wrong_first: p.parse().map_err(|_| bad("bad probability"))?,
                    p_correct_on_feedback: q.parse().map_err(|_| bad("bad probability"))?,
                },
                _ => return Err(bad("unknown scripted policy")),
            };
            let (seed, inherited) = match current {
                Some(BackendConfig::Scripted(s)) => (s.seed, s.latency.clone()),
                _ => (0, LatencyModel::None),
            };
            BackendConfig::Scripted(ScriptedConfig {
                policy,
                seed,
                latency: latency.unwrap_or(inherited),
            })
        }
        "replay" => BackendConfig::Replay(ReplayConfig {
            transcript_path: PathBuf::from(rest),
        }),
        "http" => {
            let (model, base_url) = rest
                .split_once('@')
                .ok_or_else(|| bad("expected http:<model>@<base_url>"))?;
            let mut http = match current {
                Some(BackendConfig::Http(h)) => h.clone(),
                _ => HttpConfig {
                    base_url: String::new(),
                    model: String::new(),
                    temperature: 0.0,
                    timeout: 60.0,
                    api_key_env: "LLM_API_KEY".into(),
                    max_tokens: 512,
                },
            };
            http.model = model.into();
            http.base_url = base_url.into();
            BackendConfig::Http(http)
        }
        _ => return Err(bad("unknown backend kind")),
    };
    config.validate("--backend")?;
    Ok(config)
}

fn apply_seed(config: &mut BackendConfig, seed: u64) {
    if let BackendConfig::Scripted(s) = config {
        s.seed = seed;
        if let LatencyModel::Lognormal { seed: ls, .. } = &mut s.latency {
            *ls = seed ^ 0x9e37_79b9_7f4a_7c15;
        }
    }
}

/// Loads the config and folds in command-line overrides.
pub fn prepare_run(args: &RunArgs) -> Result<(ConfigFile, BackendConfig)> {
    let mut cfg = ConfigFile::load(&args.config)?;
    if let Some(d) = args.duration {
        cfg.run.duration = d;
        cfg.run.validate()?;
    }
    let mut backend = cfg.operator_backend()?.clone();
    if let Some(spec) = &args.backend {
        backend = parse_backend_override(spec, Some(&backend))?;
    }
    if let Some(seed) = args.seed {
        apply_seed(&mut backend, seed);
    }
    Ok((cfg, backend))
}

fn open_plant(spec: &str, twin: TwinParams, mode: ClockMode) -> Result<Box<dyn Plant>> {
    if spec == "sim" {
        return Ok(Box::new(SimPlant::new(twin, mode)));
    }
    match spec.strip_prefix("tcp:") {
        Some(addr) => Ok(Box::new(TcpPlant::connect(
            addr,
            mode,
            Duration::from_secs(5),
        )?)),
        None => Err(Error::config(
            "--plant",
            format!("expected sim or tcp:<host:port>, got {spec:?}"),
        )),
    }
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let (cfg, backend_cfg) = match prepare_run(args) {
        Ok(x) => x,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let latency_mode = match cfg.run.clock_mode {
        ClockMode::Lockstep => LatencyMode::Simulated,
        ClockMode::Realtime => LatencyMode::Slept,
    };
    let mut backend: Box<dyn Backend> = match build_backend(&backend_cfg, latency_mode) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let label = backend.label();
    if let Some(path) = args.record.as_ref().or(cfg.output.transcript.as_ref()) {
        match File::create(path) {
            Ok(f) => backend = Box::new(Recorder::new(backend, BufWriter::new(f))),
            Err(e) => return fail(EXIT_CONFIG, Error::io(path, e)),
        }
    }
    let mut plant = match open_plant(&args.plant, cfg.twin, cfg.run.clock_mode) {
        Ok(p) => p,
        Err(e @ Error::PlantIo(_)) => return fail(EXIT_PLANT_IO, e),
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.log.clone())
        .unwrap_or_else(|| PathBuf::from("run.jsonl"));
    let header = LogHeader::new(&cfg.run, &cfg.twin, label);
    let mut writer = match RunLogWriter::create(&out, &header) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let mut controller = Controller::new(
        plant.as_mut(),
        backend.as_mut(),
        &cfg.agents.operator,
        &cfg.agents.operator_task,
        &cfg.run,
        cfg.twin,
    );
    let episodes = match controller.run_loop(&mut writer) {
        Ok(eps) => eps,
        Err(e @ Error::PlantIo(_)) => {
            return fail(
                EXIT_PLANT_IO,
                format!("{e} (partial log kept at {})", out.display()),
            )
        }
        Err(e @ Error::Backend(crate::BackendError::Config(_))) => return fail(EXIT_CONFIG, e),
        Err(e) => {
            return fail(
                EXIT_FAILURE,
                format!("{e} (partial log kept at {})", out.display()),
            )
        }
    };
    let report = match Report::from_log(&episodes, &cfg.run.thresholds, cfg.run.duration) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_FAILURE, e),
    };
    print!("{}", metrics::report(&report, ReportFormat::Table));
    if let Some(path) = &cfg.output.report {
        if let Err(e) = std::fs::write(path, metrics::report(&report, ReportFormat::Machine)) {
            return fail(EXIT_FAILURE, Error::io(path, e));
        }
    }
    EXIT_OK
}

pub fn cmd_plant_serve(args: &ServeArgs) -> i32 {
    let mode = match args.mode.as_str() {
        "lockstep" => ClockMode::Lockstep,
        "realtime" => ClockMode::Realtime,
        other => {
            return fail(
                EXIT_CONFIG,
                format!("--mode: expected realtime or lockstep, got {other:?}"),
            )
        }
    };
    let params = match &args.params {
        Some(p) => match load_twin_params(p) {
            Ok(p) => p,
            Err(e) => return fail(EXIT_CONFIG, e),
        },
        None => TwinParams::default(),
    };
    let listener = match TcpListener::bind(&args.listen) {
        Ok(l) => l,
        Err(e) => return fail(EXIT_CONFIG, format!("bind {}: {e}", args.listen)),
    };
    let addr = listener
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or_default();
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();

    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        return fail(EXIT_FAILURE, format!("signal handler: {e}"));
    }
    let mut server = PlantServer::new(params, mode);
    let result = plantio::serve(listener, &mut server, shutdown);
    let s = server.state();
    println!(
        "final state: t_heater={:.3} t_sensor={:.3} clock={:.3} duty={:.2}",
        s.t_heater,
        s.t_sensor,
        s.clock,
        server.duty()
    );
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => fail(EXIT_FAILURE, e),
    }
}

pub fn cmd_report(args: &ReportArgs) -> i32 {
    let format: ReportFormat = match args.format.parse() {
        Ok(f) => f,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let log = match RunLog::open(&args.log) {
        Ok(l) => l,
        Err(e @ Error::LogFormat { .. }) => {
            return fail(EXIT_CONFIG, format!("{}: {e}", args.log.display()))
        }
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let cfg = &log.header.config;
    let report = match Report::from_log(&log.episodes, &cfg.thresholds, cfg.duration) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", args.log.display())),
    };
    print!("{}", metrics::report(&report, format));
    if let Some(path) = &args.points {
        if let Err(e) = write_file(path, &metrics::points(&log.episodes)) {
            return fail(EXIT_FAILURE, e);
        }
    }
    EXIT_OK
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
