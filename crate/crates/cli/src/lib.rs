//! The `oculus` command: serve the robot bus, run rating sessions, export
//! pose traces and inject events.
//!
//! Exit codes are a stable contract: 0 success, 2 environment (ports,
//! files), 3 configuration (rule base), 64 usage.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use oculus_core::bus::robot::Fleet;
use oculus_core::bus::tcp::{BusClient, BusServer};
use oculus_core::bus::ws::WsBridge;
use oculus_core::bus::{Bus, Clock, FixedClock, MessageType, SystemClock, DEFAULT_PORT};
use oculus_core::harness::{
    run_session, summarize, BusGrader, ConsoleGrader, Grader, SessionConfig, SyntheticGrader,
};
use oculus_core::intent::{IntentConfig, RecommendationEvent};
use oculus_core::kinematics::{
    movement_sampled, DEFAULT_KEYFRAME_HZ, DEFAULT_MOVEMENT_MS, MIN_MOVEMENT_MS,
};
use oculus_core::mentality::MentalityState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ENVIRONMENT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "oculus", version, about = "Eye-robot expression simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the message bus with a fleet of robots until killed.
    Serve(ServeArgs),
    /// Run one rating session over the 20 grid states.
    Experiment(ExperimentArgs),
    /// Write the keyframe CSV for a movement between two states.
    PoseTrace(PoseTraceArgs),
    /// Publish one recommendation event to a running bus.
    Inject(InjectArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = "127.0.0.1".to_string())]
    pub host: String,
    #[arg(long, default_value_t = DEFAULT_PORT, value_parser = clap::value_parser!(u16).range(1024..))]
    pub port: u16,
    /// Browser bridge port; defaults to --port + 1.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1024..))]
    pub ws_port: Option<u16>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u8).range(1..))]
    pub robots: u8,
    /// Rule-base JSON; the built-in default when unset.
    #[arg(long, env = "OCULUS_RULEBASE")]
    pub rulebase: Option<PathBuf>,
    /// Directory for the session log.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub subject: String,
    /// Shuffle and synthetic-noise seed; derived from the clock when unset.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grade with the synthetic subject instead of a person.
    #[arg(long, conflicts_with = "remote")]
    pub synthetic: bool,
    /// Take grades as RATING.SUBMIT messages from a console connected to
    /// --port (TCP) or --port + 1 (WebSocket).
    #[arg(long)]
    pub remote: bool,
    #[arg(long, default_value_t = "127.0.0.1".to_string())]
    pub host: String,
    #[arg(long, default_value_t = DEFAULT_PORT, value_parser = clap::value_parser!(u16).range(1024..65535))]
    pub port: u16,
    /// How long a remote grade may take before the session aborts.
    #[arg(long, default_value_t = 120_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value = "a recommended book")]
    pub stimulus: String,
    #[arg(long, default_value_t = DEFAULT_MOVEMENT_MS)]
    pub duration_ms: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoseTraceArgs {
    /// Start state as `pleasure,arousal`.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub from: StateArg,
    /// End state as `pleasure,arousal`.
    #[arg(long, allow_hyphen_values = true)]
    pub to: StateArg,
    #[arg(long, default_value_t = DEFAULT_MOVEMENT_MS)]
    pub duration_ms: u64,
    #[arg(long, default_value_t = DEFAULT_KEYFRAME_HZ)]
    pub rate_hz: u32,
    /// Output file; stdout when unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long, default_value_t = "127.0.0.1".to_string())]
    pub host: String,
    #[arg(long, default_value_t = DEFAULT_PORT, value_parser = clap::value_parser!(u16).range(1024..))]
    pub port: u16,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub priority: u8,
    #[arg(long, default_value = "item")]
    pub item: String,
    #[arg(long, default_value = "injector")]
    pub source: String,
}

/// A `pleasure,arousal` pair as typed on the command line. Range checks
/// happen when it is turned into a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateArg(pub f64, pub f64);

impl FromStr for StateArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (pl, ar) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `pleasure,arousal`, got `{s}`"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(StateArg(num(pl)?, num(ar)?))
    }
}

impl StateArg {
    fn state(self, flag: &str) -> Result<MentalityState, Failure> {
        MentalityState::new(self.0, self.1).map_err(|e| Failure::usage(format!("--{flag}: {e}")))
    }
}

/// An error on its way to becoming an exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn environment(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ENVIRONMENT,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Experiment(a) => experiment(a, &mut io::stdout().lock()),
        Command::PoseTrace(a) => pose_trace(a),
        Command::Inject(a) => inject(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("oculus: {}", f.message);
            f.code
        }
    }
}

pub fn load_intent_config(path: Option<&Path>) -> Result<IntentConfig, Failure> {
    match path {
        None => Ok(IntentConfig::default_v1()),
        Some(p) => IntentConfig::from_path(p)
            .map_err(|e| Failure::config(format!("rule base {}: {e}", p.display()))),
    }
}

fn now_ms() -> u64 {
    SystemClock.now_ms()
}

pub fn serve(a: ServeArgs) -> Result<(), Failure> {
    // validate everything before opening any socket
    let config = Arc::new(load_intent_config(a.rulebase.as_deref())?);
    let ws_port = match a.ws_port {
        Some(p) => p,
        None => a.port.checked_add(1).ok_or_else(|| {
            Failure::usage("--port 65535 leaves no room for the bridge; set --ws-port")
        })?,
    };
    std::fs::create_dir_all(&a.out)
        .map_err(|e| Failure::environment(format!("{}: {e}", a.out.display())))?;

    let bus = Arc::new(Bus::new(Arc::new(SystemClock)));
    let server = BusServer::bind(Arc::clone(&bus), (a.host.as_str(), a.port)).map_err(|e| {
        Failure::environment(format!("cannot listen on {}:{}: {e}", a.host, a.port))
    })?;
    let bridge = WsBridge::bind(Arc::clone(&bus), (a.host.as_str(), ws_port))
        .map_err(|e| Failure::environment(format!("cannot listen on {}:{ws_port}: {e}", a.host)))?;
    let log_path = a.out.join(format!("bus-{}.jsonl", now_ms()));
    let log = File::create(&log_path)
        .map_err(|e| Failure::environment(format!("{}: {e}", log_path.display())))?;
    bus.set_log(Box::new(BufWriter::new(log)));
    let fleet =
        Fleet::attach(&bus, a.robots.into(), config).map_err(|e| Failure::config(e.to_string()))?;

    let stop = Arc::new(AtomicBool::new(false));
    fleet.spawn(Arc::clone(&stop));
    bridge.spawn(Arc::clone(&stop));
    let addr = server
        .local_addr()
        .map_err(|e| Failure::environment(e.to_string()))?;
    println!(
        "listening on {addr} (websocket {}:{ws_port}) with {} robots; log {}",
        a.host,
        a.robots,
        log_path.display()
    );
    let _ = io::stdout().flush();
    server.run(stop);
    Ok(())
}

pub fn experiment(a: ExperimentArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if a.duration_ms < MIN_MOVEMENT_MS {
        return Err(Failure::usage(format!(
            "--duration-ms {} is shorter than the {MIN_MOVEMENT_MS} ms minimum",
            a.duration_ms
        )));
    }
    let seed = a.seed.unwrap_or_else(now_ms);
    let cfg = SessionConfig {
        seed,
        subject_id: a.subject.clone(),
        stimulus: a.stimulus.clone(),
        movement_duration_ms: a.duration_ms,
    };
    let clock: Arc<dyn Clock> = if a.synthetic {
        Arc::new(FixedClock(0))
    } else {
        Arc::new(SystemClock)
    };
    let bus = Arc::new(Bus::new(clock));
    let mut publisher = bus
        .publisher("harness")
        .map_err(|e| Failure::environment(e.to_string()))?;
    let stop = Arc::new(AtomicBool::new(false));

    let mut grader: Box<dyn Grader> = if a.synthetic {
        Box::new(SyntheticGrader::new(seed))
    } else if a.remote {
        let ratings = bus.subscribe(&[MessageType::RatingSubmit]);
        let server = BusServer::bind(Arc::clone(&bus), (a.host.as_str(), a.port)).map_err(|e| {
            Failure::environment(format!("cannot listen on {}:{}: {e}", a.host, a.port))
        })?;
        let bridge =
            WsBridge::bind(Arc::clone(&bus), (a.host.as_str(), a.port + 1)).map_err(|e| {
                Failure::environment(format!("cannot listen on {}:{}: {e}", a.host, a.port + 1))
            })?;
        server.spawn(Arc::clone(&stop));
        bridge.spawn(Arc::clone(&stop));
        eprintln!(
            "waiting for ratings on {}:{} (websocket {})",
            a.host,
            a.port,
            a.port + 1
        );
        Box::new(
            BusGrader::new(ratings, Duration::from_millis(a.timeout_ms))
                .for_session(cfg.session_id()),
        )
    } else {
        Box::new(ConsoleGrader::new(io::stdin().lock(), io::stderr()))
    };

    let outcome = run_session(&cfg, grader.as_mut(), &mut publisher);
    stop.store(true, Ordering::Relaxed);
    let outcome = outcome.map_err(|e| match e {
        oculus_core::error::Error::OutOfRange { .. } | oculus_core::error::Error::Config(_) => {
            Failure::usage(e.to_string())
        }
        other => Failure::environment(other.to_string()),
    })?;
    let files = outcome
        .save(&a.out)
        .map_err(|e| Failure::environment(format!("{}: {e}", a.out.display())))?;

    let w = |r: io::Result<()>| r.map_err(|e| Failure::environment(e.to_string()));
    w(writeln!(
        out,
        "session {} seed {}: {} records, aborted: {}",
        outcome.session_id,
        outcome.seed,
        outcome.records.len(),
        outcome.aborted
    ))?;
    if let Some(reason) = &outcome.abort_reason {
        w(writeln!(out, "abort reason: {reason}"))?;
    }
    if !outcome.records.is_empty() {
        let summary =
            summarize(&outcome.records).map_err(|e| Failure::environment(e.to_string()))?;
        let path = a.out.join(format!("{}.summary.csv", outcome.session_id));
        File::create(&path)
            .map_err(oculus_core::error::Error::from)
            .and_then(|f| summary.write_csv(BufWriter::new(f)))
            .map_err(|e| Failure::environment(format!("{}: {e}", path.display())))?;
        w(write!(out, "{summary}"))?;
        w(writeln!(out, "summary: {}", path.display()))?;
    }
    w(writeln!(
        out,
        "records: {} {}",
        files.csv.display(),
        files.jsonl.display()
    ))?;
    w(writeln!(out, "meta: {}", files.meta.display()))?;
    Ok(())
}

pub fn pose_trace(a: PoseTraceArgs) -> Result<(), Failure> {
    let from = a.from.state("from")?;
    let to = a.to.state("to")?;
    let movement = movement_sampled(&from, &to, a.duration_ms, a.rate_hz)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let written = match &a.out {
        Some(p) => File::create(p)
            .map_err(oculus_core::error::Error::from)
            .and_then(|f| movement.write_csv(BufWriter::new(f))),
        None => movement.write_csv(io::stdout().lock()),
    };
    written.map_err(|e| Failure::environment(e.to_string()))
}

pub fn inject(a: InjectArgs) -> Result<(), Failure> {
    let event = RecommendationEvent::new(a.priority, a.item.clone(), now_ms())
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mut client =
        BusClient::connect((a.host.as_str(), a.port), &a.source, &[]).map_err(|e| {
            Failure::environment(format!("cannot reach bus at {}:{}: {e}", a.host, a.port))
        })?;
    client
        .send(MessageType::Recommendation, &event)
        .map_err(|e| Failure::environment(e.to_string()))?;
    // accepted messages get no reply; give a rejection a moment to arrive
    match client.recv(Duration::from_millis(300)) {
        Ok(Some(reply)) if reply.kind == MessageType::Error => Err(Failure::usage(format!(
            "bus rejected the event: {}",
            reply.payload["reason"]
        ))),
        _ => Ok(()),
    }
}
