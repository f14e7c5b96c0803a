//! The `/live` protocol: JSON control messages in, JSON stream messages out,
//! binary frames carry s16le PCM at 10 kHz.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dsp::PitchFrame;
use crate::feedback::{FeedbackEvent, FeedbackMode, TrialState};
use crate::melody::{load_melody, MelodyTrack};
use crate::scoring::ScoreReport;
use crate::session::{SessionConfig, SessionHeader};

use super::audio::PcmDecoder;
use super::config::EngineConfig;
use super::runner::{TrialOutput, TrialRunner};
use super::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    Hello,
    StartTrial { melody_id: String, mode: FeedbackMode },
    StopTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    PitchFrame(PitchFrame),
    FeedbackEvent(FeedbackEvent),
    ScoreReport {
        t_ms: f64,
        session_id: String,
        score: ScoreReport,
    },
    TrialState {
        t_ms: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        #[serde(flatten)]
        state: TrialState,
    },
    Error {
        message: String,
    },
}

impl StreamMessage {
    pub fn t_ms(&self) -> Option<f64> {
        match self {
            Self::PitchFrame(f) => Some(f.t_ms),
            Self::FeedbackEvent(e) => Some(e.t_ms),
            Self::ScoreReport { t_ms, .. } | Self::TrialState { t_ms, .. } => Some(*t_ms),
            Self::Error { .. } => None,
        }
    }

    /// Only pitch frames may be dropped under backpressure.
    pub fn droppable(&self) -> bool {
        matches!(self, Self::PitchFrame(_))
    }

    fn error(message: impl std::fmt::Display) -> Self {
        Self::Error {
            message: message.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stream message serialises")
    }
}

fn from_output(output: TrialOutput, session_id: &str) -> StreamMessage {
    match output {
        TrialOutput::Pitch(f) => StreamMessage::PitchFrame(f),
        TrialOutput::Event(e) => StreamMessage::FeedbackEvent(e),
        TrialOutput::State { t_ms, state } => StreamMessage::TrialState {
            t_ms,
            session_id: Some(session_id.to_string()),
            state,
        },
        TrialOutput::Score { t_ms, score } => StreamMessage::ScoreReport {
            t_ms,
            session_id: session_id.to_string(),
            score,
        },
    }
}

/// Melody files (`*.json`) in `dir`, sorted by id. Unreadable files are skipped.
pub fn load_catalog(dir: &Path) -> Vec<MelodyTrack> {
    let mut out: Vec<MelodyTrack> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .filter_map(|p| std::fs::read_to_string(&p).ok())
            .filter_map(|t| load_melody(&t).ok())
            .collect(),
        Err(_) => Vec::new(),
    };
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

struct Active {
    session_id: String,
    runner: TrialRunner<File>,
}

/// One connection's protocol state. Synchronous; the transport feeds it.
pub struct LiveSession {
    data_dir: PathBuf,
    config: EngineConfig,
    greeted: bool,
    decoder: PcmDecoder,
    active: Option<Active>,
    clock: Box<dyn FnMut() -> DateTime<Utc> + Send>,
}

impl LiveSession {
    /// `data_dir` holds `melodies/` and `sessions/`.
    pub fn new(data_dir: impl Into<PathBuf>, config: EngineConfig) -> Self {
        Self::with_clock(data_dir, config, Box::new(Utc::now))
    }

    pub fn with_clock(
        data_dir: impl Into<PathBuf>,
        config: EngineConfig,
        clock: Box<dyn FnMut() -> DateTime<Utc> + Send>,
    ) -> Self {
        Self {
            data_dir: data_dir.into(),
            config,
            greeted: false,
            decoder: PcmDecoder::default(),
            active: None,
            clock,
        }
    }

    pub fn active_session(&self) -> Option<&str> {
        self.active.as_ref().map(|a| a.session_id.as_str())
    }

    /// Parse and handle one text message.
    pub fn handle_text(&mut self, text: &str) -> Vec<StreamMessage> {
        match serde_json::from_str::<ControlMessage>(text) {
            Ok(msg) => self.handle_control(msg),
            Err(e) => vec![StreamMessage::error(format!("bad control message: {e}"))],
        }
    }

    pub fn handle_control(&mut self, msg: ControlMessage) -> Vec<StreamMessage> {
        match (msg, self.greeted) {
            (ControlMessage::Hello, _) => {
                self.greeted = true;
                let (session_id, state) = match &self.active {
                    Some(a) => (Some(a.session_id.clone()), a.runner.state()),
                    None => (None, TrialState::default()),
                };
                vec![StreamMessage::TrialState {
                    t_ms: 0.0,
                    session_id,
                    state,
                }]
            }
            (_, false) => vec![StreamMessage::error("hello required first")],
            (ControlMessage::StartTrial { melody_id, mode }, true) => self.start(&melody_id, mode),
            (ControlMessage::StopTrial, true) => self.stop(),
        }
    }

    fn start(&mut self, melody_id: &str, mode: FeedbackMode) -> Vec<StreamMessage> {
        if let Some(a) = &self.active {
            return vec![StreamMessage::error(format!("trial {} already active", a.session_id))];
        }
        let Some(melody) = load_catalog(&self.data_dir.join("melodies"))
            .into_iter()
            .find(|m| m.id == melody_id)
        else {
            return vec![StreamMessage::error(format!("unknown melody {melody_id:?}"))];
        };
        match self.open_trial(melody, mode) {
            Ok(msgs) => msgs,
            Err(e) => vec![StreamMessage::error(e)],
        }
    }

    fn open_trial(&mut self, melody: MelodyTrack, mode: FeedbackMode) -> Result<Vec<StreamMessage>, ServiceError> {
        let sessions = self.data_dir.join("sessions");
        std::fs::create_dir_all(&sessions).map_err(ServiceError::internal)?;
        let created_utc = (self.clock)();
        let base = format!("{}-{}", melody.id, created_utc.format("%Y%m%dT%H%M%S%3fZ"));
        let (session_id, file) = (0..1000)
            .find_map(|n| {
                let id = if n == 0 { base.clone() } else { format!("{base}-{n}") };
                let path = sessions.join(format!("{id}.jsonl"));
                OpenOptions::new().write(true).create_new(true).open(path).ok().map(|f| (id, f))
            })
            .ok_or_else(|| ServiceError::internal("could not allocate a session file"))?;
        let header = SessionHeader {
            session_id: session_id.clone(),
            created_utc,
            config: SessionConfig {
                mode,
                melody_id: melody.id.clone(),
                melody,
                dsp: self.config.dsp.clone(),
                layout: self.config.layout.clone(),
                feedback: self.config.feedback.clone(),
                scoring: self.config.scoring.clone(),
            },
        };
        let mut runner = TrialRunner::new(header, file)?;
        let outputs = runner.start()?;
        self.decoder = PcmDecoder::default();
        let msgs = outputs.into_iter().map(|o| from_output(o, &session_id)).collect();
        self.active = Some(Active { session_id, runner });
        Ok(msgs)
    }

    fn stop(&mut self) -> Vec<StreamMessage> {
        let Some(Active { session_id, runner }) = self.active.take() else {
            return vec![StreamMessage::error("no active trial")];
        };
        match runner.finish() {
            Ok((_, outputs, _)) => outputs.into_iter().map(|o| from_output(o, &session_id)).collect(),
            Err(e) => vec![StreamMessage::error(e)],
        }
    }

    /// Binary PCM. Audio outside a trial is discarded.
    pub fn push_audio(&mut self, bytes: &[u8]) -> Vec<StreamMessage> {
        let Some(active) = self.active.as_mut() else {
            return Vec::new();
        };
        let samples = self.decoder.push(bytes);
        match active.runner.push_audio(&samples) {
            Ok(outputs) => outputs
                .into_iter()
                .map(|o| from_output(o, &active.session_id))
                .collect(),
            Err(e) => vec![StreamMessage::error(e)],
        }
    }

    /// Called when the connection closes mid-trial: the trial is stopped so
    /// the log is complete.
    pub fn close(&mut self) {
        if let Some(Active { runner, .. }) = self.active.take() {
            let _ = runner.finish();
        }
    }
}

/// Bounded queue toward one UI connection. When full, the oldest pitch frame
/// is evicted; other messages are never dropped.
#[derive(Debug)]
pub struct UiOutbox {
    queue: VecDeque<StreamMessage>,
    capacity: usize,
    dropped: usize,
}

impl UiOutbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, msg: StreamMessage) {
        if self.queue.len() >= self.capacity {
            if let Some(pos) = self.queue.iter().position(StreamMessage::droppable) {
                self.queue.remove(pos);
                self.dropped += 1;
            } else if msg.droppable() {
                self.dropped += 1;
                return;
            }
        }
        self.queue.push_back(msg);
    }

    pub fn drain(&mut self) -> Vec<StreamMessage> {
        self.queue.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }
}
