//! Drives one trial from raw samples: DSP, feedback state machine, session
//! log. Used by both `run` and the live connection.

use std::io::Write;
use std::net::TcpStream;

use serde::{Deserialize, Serialize};

use crate::dsp::{PitchFrame, PitchTracker};
use crate::feedback::{EventPayload, FeedbackEvent, Phase, Trial, TrialState};
use crate::haptics::encode_haptic_frame;
use crate::scoring::ScoreReport;
use crate::session::{score_session_frames, LogRecord, SegmentBoundary, SessionHeader, SessionWriter};

use super::ServiceError;

/// Everything a trial produces, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrialOutput {
    Pitch(PitchFrame),
    Event(FeedbackEvent),
    State { t_ms: f64, state: TrialState },
    Score { t_ms: f64, score: ScoreReport },
}

impl TrialOutput {
    pub fn t_ms(&self) -> f64 {
        match self {
            Self::Pitch(f) => f.t_ms,
            Self::Event(e) => e.t_ms,
            Self::State { t_ms, .. } | Self::Score { t_ms, .. } => *t_ms,
        }
    }
}

pub struct TrialRunner<W: Write> {
    header: SessionHeader,
    trial: Trial,
    tracker: PitchTracker,
    writer: SessionWriter<W>,
    frames: Vec<PitchFrame>,
}

impl<W: Write> TrialRunner<W> {
    /// Writes the header immediately.
    pub fn new(header: SessionHeader, out: W) -> Result<Self, ServiceError> {
        let cfg = &header.config;
        let tracker = PitchTracker::new(&cfg.dsp).map_err(ServiceError::input)?;
        cfg.layout.validate().map_err(ServiceError::input)?;
        let trial = Trial::with_config(cfg.melody.clone(), cfg.mode, cfg.layout.clone(), cfg.feedback.clone());
        let writer = SessionWriter::new(out, &header)?;
        Ok(Self {
            header,
            trial,
            tracker,
            writer,
            frames: Vec::new(),
        })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn state(&self) -> TrialState {
        self.trial.state()
    }

    fn log(&mut self, record: LogRecord) -> Result<(), ServiceError> {
        self.writer.append(&record).map_err(ServiceError::internal)
    }

    fn log_events(&mut self, events: Vec<FeedbackEvent>, out: &mut Vec<TrialOutput>) -> Result<(), ServiceError> {
        for event in events {
            self.log(LogRecord::from_event(event.clone()))?;
            out.push(TrialOutput::Event(event));
        }
        Ok(())
    }

    pub fn start(&mut self) -> Result<Vec<TrialOutput>, ServiceError> {
        let events = self.trial.start().map_err(ServiceError::input)?;
        self.log(LogRecord::Segment {
            t_ms: 0.0,
            boundary: SegmentBoundary::Start,
        })?;
        let mut out = vec![TrialOutput::State {
            t_ms: 0.0,
            state: self.trial.state(),
        }];
        self.log_events(events, &mut out)?;
        Ok(out)
    }

    fn on_frames(&mut self, frames: Vec<PitchFrame>, out: &mut Vec<TrialOutput>) -> Result<(), ServiceError> {
        for frame in frames {
            let events = self.trial.on_pitch_frame(&frame).map_err(ServiceError::internal)?;
            self.log(LogRecord::Pitch(frame))?;
            out.push(TrialOutput::Pitch(frame));
            self.frames.push(frame);
            self.log_events(events, out)?;
        }
        Ok(())
    }

    /// Feed normalised samples at the analysis rate.
    pub fn push_audio(&mut self, samples: &[f32]) -> Result<Vec<TrialOutput>, ServiceError> {
        if self.trial.state().phase != Phase::Phonating {
            return Err(ServiceError::input("trial is not phonating"));
        }
        let frames = self.tracker.push(samples);
        let mut out = Vec::new();
        self.on_frames(frames, &mut out)?;
        Ok(out)
    }

    /// Stop the segment: flush the tracker tail, score and emit end feedback.
    /// Returns the score, the remaining outputs and the log sink.
    pub fn finish(mut self) -> Result<(ScoreReport, Vec<TrialOutput>, W), ServiceError> {
        let mut out = Vec::new();
        let tail = self.tracker.finish();
        self.on_frames(tail, &mut out)?;

        let sr = self.header.config.dsp.sample_rate_hz as f64;
        let audio_ms = self.tracker.samples_seen() as f64 * 1000.0 / sr;
        let end_ms = self.frames.last().map_or(audio_ms, |f| f.t_ms.max(audio_ms));
        let score = score_session_frames(&self.frames, &self.header.config);

        self.log(LogRecord::Segment {
            t_ms: end_ms,
            boundary: SegmentBoundary::End,
        })?;
        let events = self.trial.end_segment(end_ms, &score).map_err(ServiceError::internal)?;
        for event in events {
            let is_score = matches!(event.payload, EventPayload::Score { .. });
            let t_ms = event.t_ms;
            self.log(LogRecord::from_event(event.clone()))?;
            out.push(TrialOutput::Event(event));
            if is_score {
                out.push(TrialOutput::Score {
                    t_ms,
                    score: score.clone(),
                });
            }
        }
        let last = out.last().map_or(end_ms, TrialOutput::t_ms);
        out.push(TrialOutput::State {
            t_ms: last,
            state: self.trial.state(),
        });
        Ok((score, out, self.writer.into_inner()))
    }
}

/// Optional TCP fan-out: 6-byte haptic frames to the actuator device and
/// single-byte trigger codes to the marker box.
#[derive(Debug, Default)]
pub struct OutputSinks {
    pub haptic: Option<TcpStream>,
    pub trigger: Option<TcpStream>,
}

impl OutputSinks {
    pub fn connect(haptic_addr: Option<&str>, trigger_addr: Option<&str>) -> Result<Self, ServiceError> {
        let open = |addr: Option<&str>| -> Result<Option<TcpStream>, ServiceError> {
            addr.map(|a| {
                let s = TcpStream::connect(a).map_err(|e| ServiceError::input(format!("connect {a}: {e}")))?;
                s.set_nodelay(true).ok();
                Ok(s)
            })
            .transpose()
        };
        Ok(Self {
            haptic: open(haptic_addr)?,
            trigger: open(trigger_addr)?,
        })
    }

    pub fn dispatch(&mut self, outputs: &[TrialOutput]) -> Result<(), ServiceError> {
        for output in outputs {
            let TrialOutput::Event(event) = output else { continue };
            match &event.payload {
                EventPayload::Haptic { frame } => {
                    if let Some(s) = self.haptic.as_mut() {
                        let bytes = encode_haptic_frame(frame).map_err(ServiceError::internal)?;
                        s.write_all(&bytes).map_err(ServiceError::internal)?;
                    }
                }
                EventPayload::Trigger { code } => {
                    if let Some(s) = self.trigger.as_mut() {
                        s.write_all(&[*code]).map_err(ServiceError::internal)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}
