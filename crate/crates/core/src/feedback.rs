//! Trial state machine for the two feedback timing modes.
//!
//! In synchronous mode every pitch frame produces a visual overlay event and,
//! when the mapped actuator changes or the refresh interval has passed, a
//! haptic command. In terminal mode nothing is fed back while the child is
//! singing; a confirmation cue, the score and a haptic summary follow the end
//! of the segment. Both modes bracket the trial with trigger markers 0x01 and
//! 0x02 for external recorders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::PitchFrame;
use crate::haptics::{map_pitch_to_actuator, terminal_summary_pattern, ActuatorLayout, HapticFrame};
use crate::melody::{MelodyTrack, PitchPoint};
use crate::scoring::ScoreReport;

pub const TRIGGER_TRIAL_START: u8 = 0x01;
pub const TRIGGER_SEGMENT_END: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("illegal transition: {action} while {phase:?}")]
    State { action: &'static str, phase: Phase },
    #[error("frame at {t_ms} ms precedes {bound_ms} ms")]
    Ordering { t_ms: f64, bound_ms: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackMode {
    #[serde(rename = "sync")]
    Synchronous,
    #[serde(rename = "terminal")]
    Terminal,
}

impl std::str::FromStr for FeedbackMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sync" | "synchronous" => Ok(Self::Synchronous),
            "terminal" | "delayed" => Ok(Self::Terminal),
            other => Err(format!("unknown feedback mode {other:?} (expected sync or terminal)")),
        }
    }
}

impl std::fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Synchronous => "sync",
            Self::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Auditory,
    Visual,
    Haptic,
    Trigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditoryCue {
    TargetMelody,
    Confirmation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "payload", rename_all = "snake_case")]
pub enum EventPayload {
    Cue { cue: AuditoryCue },
    Overlay { sung: PitchPoint, target: PitchPoint },
    Score { score: ScoreReport },
    Haptic { frame: HapticFrame },
    Trigger { code: u8 },
}

impl EventPayload {
    pub fn channel(&self) -> Channel {
        match self {
            Self::Cue { .. } => Channel::Auditory,
            Self::Overlay { .. } | Self::Score { .. } => Channel::Visual,
            Self::Haptic { .. } => Channel::Haptic,
            Self::Trigger { .. } => Channel::Trigger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub t_ms: f64,
    pub mode: FeedbackMode,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl FeedbackEvent {
    pub fn new(t_ms: f64, mode: FeedbackMode, payload: EventPayload) -> Self {
        Self { t_ms, mode, payload }
    }

    pub fn channel(&self) -> Channel {
        self.payload.channel()
    }

    /// Trigger markers are bookkeeping, everything else is feedback.
    pub fn is_feedback(&self) -> bool {
        self.channel() != Channel::Trigger
    }

    pub fn trigger_code(&self) -> Option<u8> {
        match self.payload {
            EventPayload::Trigger { code } => Some(code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Phonating,
    Finalizing,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub phase: Phase,
    pub segment_start_ms: Option<f64>,
    pub segment_end_ms: Option<f64>,
}

impl Default for TrialState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            segment_start_ms: None,
            segment_end_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    /// A haptic command is re-sent at least this often while the actuator is unchanged.
    pub haptic_refresh_ms: f64,
    pub haptic_intensity: f64,
    pub haptic_duration_ms: u32,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            haptic_refresh_ms: 250.0,
            haptic_intensity: 0.8,
            haptic_duration_ms: 250,
        }
    }
}

/// One trial. Owns its state; feed it frames in time order.
#[derive(Debug, Clone)]
pub struct Trial {
    melody: MelodyTrack,
    mode: FeedbackMode,
    layout: ActuatorLayout,
    config: FeedbackConfig,
    state: TrialState,
    last_frame_ms: Option<f64>,
    prev_actuator: Option<usize>,
    last_haptic_ms: Option<f64>,
}

impl Trial {
    pub fn new(melody: MelodyTrack, mode: FeedbackMode, layout: ActuatorLayout) -> Self {
        Self::with_config(melody, mode, layout, FeedbackConfig::default())
    }

    pub fn with_config(
        melody: MelodyTrack,
        mode: FeedbackMode,
        layout: ActuatorLayout,
        config: FeedbackConfig,
    ) -> Self {
        Self {
            melody,
            mode,
            layout,
            config,
            state: TrialState::default(),
            last_frame_ms: None,
            prev_actuator: None,
            last_haptic_ms: None,
        }
    }

    pub fn state(&self) -> TrialState {
        self.state
    }

    pub fn mode(&self) -> FeedbackMode {
        self.mode
    }

    pub fn melody(&self) -> &MelodyTrack {
        &self.melody
    }

    pub fn layout(&self) -> &ActuatorLayout {
        &self.layout
    }

    fn event(&self, t_ms: f64, payload: EventPayload) -> FeedbackEvent {
        FeedbackEvent::new(t_ms, self.mode, payload)
    }

    fn require(&self, phase: Phase, action: &'static str) -> Result<(), FeedbackError> {
        if self.state.phase == phase {
            Ok(())
        } else {
            Err(FeedbackError::State {
                action,
                phase: self.state.phase,
            })
        }
    }

    /// Open the phonation segment at trial time 0.
    pub fn start(&mut self) -> Result<Vec<FeedbackEvent>, FeedbackError> {
        self.require(Phase::Idle, "start")?;
        self.state.phase = Phase::Phonating;
        self.state.segment_start_ms = Some(0.0);
        let mut events = vec![self.event(0.0, EventPayload::Trigger { code: TRIGGER_TRIAL_START })];
        if self.mode == FeedbackMode::Synchronous {
            events.push(self.event(
                0.0,
                EventPayload::Cue {
                    cue: AuditoryCue::TargetMelody,
                },
            ));
        }
        Ok(events)
    }

    pub fn on_pitch_frame(&mut self, frame: &PitchFrame) -> Result<Vec<FeedbackEvent>, FeedbackError> {
        self.require(Phase::Phonating, "pitch frame")?;
        let bound = self
            .last_frame_ms
            .or(self.state.segment_start_ms)
            .unwrap_or(0.0);
        if frame.t_ms < bound {
            return Err(FeedbackError::Ordering {
                t_ms: frame.t_ms,
                bound_ms: bound,
            });
        }
        self.last_frame_ms = Some(frame.t_ms);
        if self.mode == FeedbackMode::Terminal {
            return Ok(Vec::new());
        }

        let t = frame.t_ms;
        let sung = frame.midi();
        let mut events = vec![self.event(
            t,
            EventPayload::Overlay {
                sung: PitchPoint { t_ms: t, midi: sung },
                target: PitchPoint {
                    t_ms: t,
                    midi: self.melody.pitch_at(t),
                },
            },
        )];
        match sung {
            Some(midi) => {
                let actuator = map_pitch_to_actuator(midi, &self.layout);
                let refresh_due = self
                    .last_haptic_ms
                    .map_or(true, |last| t - last >= self.config.haptic_refresh_ms);
                if self.prev_actuator != Some(actuator) || refresh_due {
                    events.push(self.event(
                        t,
                        EventPayload::Haptic {
                            frame: HapticFrame {
                                t_ms: t,
                                actuator,
                                intensity: self.config.haptic_intensity,
                                duration_ms: self.config.haptic_duration_ms,
                            },
                        },
                    ));
                    self.last_haptic_ms = Some(t);
                }
                self.prev_actuator = Some(actuator);
            }
            // a voice break re-arms the next voiced frame
            None => self.prev_actuator = None,
        }
        Ok(events)
    }

    /// Close the segment at `end_ms` (operator stop) and emit the end-of-trial
    /// feedback for `score`.
    pub fn end_segment(
        &mut self,
        end_ms: f64,
        score: &ScoreReport,
    ) -> Result<Vec<FeedbackEvent>, FeedbackError> {
        self.require(Phase::Phonating, "end segment")?;
        let bound = self
            .last_frame_ms
            .or(self.state.segment_start_ms)
            .unwrap_or(0.0);
        if end_ms < bound {
            return Err(FeedbackError::Ordering {
                t_ms: end_ms,
                bound_ms: bound,
            });
        }
        self.state.phase = Phase::Finalizing;
        self.state.segment_end_ms = Some(end_ms);

        let mut events = vec![self.event(end_ms, EventPayload::Trigger { code: TRIGGER_SEGMENT_END })];
        if self.mode == FeedbackMode::Terminal {
            events.push(self.event(
                end_ms,
                EventPayload::Cue {
                    cue: AuditoryCue::Confirmation,
                },
            ));
        }
        events.push(self.event(
            end_ms,
            EventPayload::Score {
                score: score.clone(),
            },
        ));
        if self.mode == FeedbackMode::Terminal {
            for mut pulse in terminal_summary_pattern(score, &self.layout) {
                pulse.t_ms += end_ms;
                events.push(self.event(pulse.t_ms, EventPayload::Haptic { frame: pulse }));
            }
        }
        self.state.phase = Phase::Done;
        Ok(events)
    }
}

/// Stable sort by time; equal timestamps keep their emission order.
pub fn align(mut events: Vec<FeedbackEvent>) -> Vec<FeedbackEvent> {
    events.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));
    events
}
