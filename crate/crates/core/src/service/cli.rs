//! Command-line surface. `main` only calls [`run_cli`].

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use crate::feedback::FeedbackMode;
use crate::haptics::run_simulator;
use crate::melody::load_melody;
use crate::scoring::ScoreReport;
use crate::session::{replay, SessionConfig, SessionHeader};
use crate::stats::{one_way_anova, render_anova_table, GroupedData};

use super::audio::{read_pcm_or_wav, read_wav_file};
use super::config::EngineConfig;
use super::http::{self, AppState, DEFAULT_UI_BUFFER};
use super::runner::{OutputSinks, TrialRunner};
use super::ServiceError;

#[derive(Debug, Parser)]
#[command(name = "pitchcoach", version, about = "Pitch-training engine: tracking, feedback, logging, analysis")]
pub struct Cli {
    /// TOML file overriding [dsp], [layout], [feedback] and [scoring] defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial over a recording and write its session log
    Run(RunArgs),
    /// Replay a session log and re-score it
    Score { log: PathBuf },
    /// One-way ANOVA with Bonferroni-corrected pairwise tests over a CSV
    Anova {
        #[arg(long)]
        metric: String,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Serve the query endpoints and the /live protocol
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Listen for haptic frames and print the actuator state after each
    SimulateDevice {
        #[arg(long)]
        listen: String,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub melody: PathBuf,
    #[arg(long)]
    pub mode: FeedbackMode,
    /// WAV file, or `-` for stdin (WAV or raw s16le mono at 10 kHz)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub haptic_addr: Option<String>,
    #[arg(long)]
    pub trigger_addr: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<melody id>-<timestamp>`
    #[arg(long)]
    pub session_id: Option<String>,
    /// RFC 3339 creation time for the log header; defaults to now
    #[arg(long)]
    pub created_utc: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub session_id: String,
    pub log_path: PathBuf,
    pub score: ScoreReport,
}

fn read_input(input: &Path) -> Result<Vec<f32>, ServiceError> {
    if input.as_os_str() == "-" {
        let mut bytes = Vec::new();
        std::io::stdin().read_to_end(&mut bytes).map_err(ServiceError::internal)?;
        read_pcm_or_wav(&bytes).map_err(ServiceError::input)
    } else {
        read_wav_file(input).map_err(|e| ServiceError::input(format!("{}: {e}", input.display())))
    }
}

/// Run one trial from a recording. The log lands at `<out>/<session_id>.jsonl`.
pub fn run_trial(args: &RunArgs, config: &EngineConfig) -> Result<RunSummary, ServiceError> {
    let melody_text = std::fs::read_to_string(&args.melody)
        .map_err(|e| ServiceError::input(format!("{}: {e}", args.melody.display())))?;
    let melody = load_melody(&melody_text).map_err(|e| ServiceError::input(format!("{}: {e}", args.melody.display())))?;
    let samples = read_input(&args.input)?;
    run_samples(args, config, melody, &samples)
}

/// [`run_trial`] with the melody and audio already loaded.
pub fn run_samples(
    args: &RunArgs,
    config: &EngineConfig,
    melody: crate::melody::MelodyTrack,
    samples: &[f32],
) -> Result<RunSummary, ServiceError> {
    let created_utc = args.created_utc.unwrap_or_else(Utc::now);
    let session_id = args
        .session_id
        .clone()
        .unwrap_or_else(|| format!("{}-{}", melody.id, created_utc.format("%Y%m%dT%H%M%S%3fZ")));
    std::fs::create_dir_all(&args.out).map_err(ServiceError::internal)?;
    let log_path = args.out.join(format!("{session_id}.jsonl"));
    let file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&log_path)
        .map_err(|e| ServiceError::input(format!("{}: {e}", log_path.display())))?;
    let header = SessionHeader {
        session_id: session_id.clone(),
        created_utc,
        config: SessionConfig {
            mode: args.mode,
            melody_id: melody.id.clone(),
            melody,
            dsp: config.dsp.clone(),
            layout: config.layout.clone(),
            feedback: config.feedback.clone(),
            scoring: config.scoring.clone(),
        },
    };
    let mut sinks = OutputSinks::connect(args.haptic_addr.as_deref(), args.trigger_addr.as_deref())?;
    let mut runner = TrialRunner::new(header, std::io::BufWriter::new(file))?;
    sinks.dispatch(&runner.start()?)?;
    let hop = config.dsp.hop;
    for chunk in samples.chunks(hop * 16) {
        sinks.dispatch(&runner.push_audio(chunk)?)?;
    }
    let (score, tail, out) = runner.finish()?;
    sinks.dispatch(&tail)?;
    out.into_inner().map_err(ServiceError::internal)?.sync_all().map_err(ServiceError::internal)?;
    Ok(RunSummary {
        session_id,
        log_path,
        score,
    })
}

/// Replay and re-score a log. Fails if the stored score disagrees.
pub fn score_log(path: &Path) -> Result<ScoreReport, ServiceError> {
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::input(format!("{}: {e}", path.display())))?;
    let log = replay(&text).map_err(|e| ServiceError::input(format!("{}: {e}", path.display())))?;
    let score = log.rescore();
    match log.stored_score() {
        Some(stored) if *stored != score => Err(ServiceError::internal(format!(
            "{}: re-score differs from stored score",
            path.display()
        ))),
        _ => Ok(score),
    }
}

/// Read `group` plus the metric column (or `value`) and render the ANOVA table.
pub fn anova_report(metric: &str, csv_text: &str) -> Result<String, ServiceError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(ServiceError::input)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let group = col("group").ok_or_else(|| ServiceError::input("missing `group` column"))?;
    let value = col(metric)
        .or_else(|| col("value"))
        .ok_or_else(|| ServiceError::input(format!("missing `{metric}` or `value` column")))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(ServiceError::input)?;
        let line = i + 2;
        let label = rec.get(group).unwrap_or_default().to_string();
        let raw = rec.get(value).unwrap_or_default();
        let v: f64 = raw
            .parse()
            .map_err(|_| ServiceError::input(format!("line {line}: bad value {raw:?}")))?;
        if !v.is_finite() {
            return Err(ServiceError::input(format!("line {line}: non-finite value")));
        }
        rows.push((label, v));
    }
    let data = GroupedData::from_rows(rows).map_err(ServiceError::input)?;
    let result = one_way_anova(&data);
    Ok(render_anova_table(metric, &data, &result))
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, ServiceError> {
    match path {
        Some(p) => EngineConfig::load(p).map_err(ServiceError::Input),
        None => Ok(EngineConfig::default()),
    }
}

fn execute(cli: Cli, stdout: &mut impl Write) -> Result<(), ServiceError> {
    let config = load_config(cli.config.as_deref())?;
    let out = |s: &mut dyn Write, text: &str| s.write_all(text.as_bytes()).map_err(ServiceError::internal);
    match cli.command {
        Command::Run(args) => {
            let summary = run_trial(&args, &config)?;
            eprintln!("session {} -> {}", summary.session_id, summary.log_path.display());
            let json = serde_json::to_string_pretty(&summary.score).map_err(ServiceError::internal)?;
            out(stdout, &format!("{json}\n"))
        }
        Command::Score { log } => {
            let json = serde_json::to_string_pretty(&score_log(&log)?).map_err(ServiceError::internal)?;
            out(stdout, &format!("{json}\n"))
        }
        Command::Anova { metric, csv } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| ServiceError::input(format!("{}: {e}", csv.display())))?;
            out(stdout, &anova_report(&metric, &text)?)
        }
        Command::Serve { port, data, host } => {
            if !data.is_dir() {
                return Err(ServiceError::input(format!("{}: not a directory", data.display())));
            }
            let state = AppState {
                data_dir: data,
                config,
                ui_buffer: DEFAULT_UI_BUFFER,
            };
            let rt = tokio::runtime::Runtime::new().map_err(ServiceError::internal)?;
            rt.block_on(http::serve((host, port).into(), state))
                .map_err(ServiceError::internal)
        }
        Command::SimulateDevice { listen } => {
            let listener = TcpListener::bind(&listen).map_err(|e| ServiceError::input(format!("{listen}: {e}")))?;
            eprintln!("simulating device on {}", listener.local_addr().map_err(ServiceError::internal)?);
            run_simulator(listener, &config.layout, None, stdout, &mut std::io::stderr())
                .map(|_| ())
                .map_err(ServiceError::internal)
        }
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
