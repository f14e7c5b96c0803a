//! Pitch units and the target-melody model.
//!
//! Pitch is carried as real-valued MIDI note numbers (A4 = 69) and compared
//! in cents. A melody is a list of non-overlapping notes with half-open
//! windows `[onset, onset + duration)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest melody accepted, in milliseconds.
pub const MAX_SPAN_MS: f64 = 120_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MelodyError {
    #[error("frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("melody parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("melody has no notes")]
    Empty,
    #[error("note {index}: duration must be positive, got {duration_ms}")]
    BadDuration { index: usize, duration_ms: f64 },
    #[error("note {index}: onset must not be negative, got {onset_ms}")]
    NegativeOnset { index: usize, onset_ms: f64 },
    #[error("note {index}: non-finite field")]
    NonFinite { index: usize },
    #[error("note {index}: onset {onset_ms} ms precedes previous onset {previous_ms} ms")]
    OutOfOrder {
        index: usize,
        onset_ms: f64,
        previous_ms: f64,
    },
    #[error("note {index} (onset {onset_ms} ms) overlaps note {previous} ending at {previous_end_ms} ms")]
    Overlap {
        index: usize,
        previous: usize,
        onset_ms: f64,
        previous_end_ms: f64,
    },
    #[error("melody spans {span_ms} ms, limit is {MAX_SPAN_MS} ms")]
    TooLong { span_ms: f64 },
    #[error("hop must be positive, got {0}")]
    BadHop(f64),
}

pub fn hz_to_midi(f_hz: f64) -> Result<f64, MelodyError> {
    if !(f_hz > 0.0) || !f_hz.is_finite() {
        return Err(MelodyError::NonPositiveFrequency(f_hz));
    }
    Ok(69.0 + 12.0 * (f_hz / 440.0).log2())
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * ((midi - 69.0) / 12.0).exp2()
}

/// Signed interval from `f_b` up to `f_a`, in cents.
pub fn cents_between(f_a: f64, f_b: f64) -> Result<f64, MelodyError> {
    for f in [f_a, f_b] {
        if !(f > 0.0) || !f.is_finite() {
            return Err(MelodyError::NonPositiveFrequency(f));
        }
    }
    Ok(1200.0 * (f_a / f_b).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub onset_ms: f64,
    pub duration_ms: f64,
    #[serde(rename = "midi")]
    pub pitch_midi: f64,
}

impl Note {
    pub fn new(onset_ms: f64, duration_ms: f64, pitch_midi: f64) -> Self {
        Self {
            onset_ms,
            duration_ms,
            pitch_midi,
        }
    }

    pub fn offset_ms(&self) -> f64 {
        self.onset_ms + self.duration_ms
    }

    pub fn contains(&self, t_ms: f64) -> bool {
        t_ms >= self.onset_ms && t_ms < self.offset_ms()
    }
}

/// A validated target melody. Construct through [`MelodyTrack::new`] or
/// [`load_melody`] so the ordering invariants hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MelodyTrack {
    pub id: String,
    pub description: String,
    pub notes: Vec<Note>,
}

#[derive(Deserialize)]
struct RawMelody {
    id: String,
    #[serde(default)]
    description: String,
    notes: Vec<Note>,
}

impl<'de> Deserialize<'de> for MelodyTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawMelody::deserialize(d)?;
        MelodyTrack::new(raw.id, raw.description, raw.notes).map_err(serde::de::Error::custom)
    }
}

impl MelodyTrack {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        notes: Vec<Note>,
    ) -> Result<Self, MelodyError> {
        validate_notes(&notes)?;
        Ok(Self {
            id: id.into(),
            description: description.into(),
            notes,
        })
    }

    /// End of the last note window.
    pub fn last_offset_ms(&self) -> f64 {
        self.notes.last().map(Note::offset_ms).unwrap_or(0.0)
    }

    /// Target pitch at `t_ms`, absent in rests and outside the melody.
    pub fn pitch_at(&self, t_ms: f64) -> Option<f64> {
        // Notes are sorted and disjoint: the candidate is the last note whose
        // onset is <= t.
        let idx = self.notes.partition_point(|n| n.onset_ms <= t_ms);
        if idx == 0 {
            return None;
        }
        let note = &self.notes[idx - 1];
        note.contains(t_ms).then_some(note.pitch_midi)
    }
}

fn validate_notes(notes: &[Note]) -> Result<(), MelodyError> {
    if notes.is_empty() {
        return Err(MelodyError::Empty);
    }
    for (index, note) in notes.iter().enumerate() {
        if !(note.onset_ms.is_finite() && note.duration_ms.is_finite() && note.pitch_midi.is_finite())
        {
            return Err(MelodyError::NonFinite { index });
        }
        if note.onset_ms < 0.0 {
            return Err(MelodyError::NegativeOnset {
                index,
                onset_ms: note.onset_ms,
            });
        }
        if note.duration_ms <= 0.0 {
            return Err(MelodyError::BadDuration {
                index,
                duration_ms: note.duration_ms,
            });
        }
        if index > 0 {
            let prev = &notes[index - 1];
            if note.onset_ms < prev.onset_ms {
                return Err(MelodyError::OutOfOrder {
                    index,
                    onset_ms: note.onset_ms,
                    previous_ms: prev.onset_ms,
                });
            }
            if note.onset_ms < prev.offset_ms() {
                return Err(MelodyError::Overlap {
                    index,
                    previous: index - 1,
                    onset_ms: note.onset_ms,
                    previous_end_ms: prev.offset_ms(),
                });
            }
        }
    }
    let span_ms = notes.last().map(Note::offset_ms).unwrap_or(0.0);
    if span_ms >= MAX_SPAN_MS {
        return Err(MelodyError::TooLong { span_ms });
    }
    Ok(())
}

/// Parse a melody file (JSON object with `id`, `description` and `notes`).
pub fn load_melody(text: &str) -> Result<MelodyTrack, MelodyError> {
    let raw: RawMelody = serde_json::from_str(text).map_err(|e| MelodyError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    MelodyTrack::new(raw.id, raw.description, raw.notes)
}

/// One sample of a pitch curve. `midi` is `None` for rests and unvoiced audio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchPoint {
    pub t_ms: f64,
    pub midi: Option<f64>,
}

/// Sample the melody as a piecewise-constant curve on a `hop_ms` grid
/// covering `[0, last offset]`.
pub fn target_curve(melody: &MelodyTrack, hop_ms: f64) -> Result<Vec<PitchPoint>, MelodyError> {
    if !(hop_ms > 0.0) || !hop_ms.is_finite() {
        return Err(MelodyError::BadHop(hop_ms));
    }
    let count = (melody.last_offset_ms() / hop_ms).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let t_ms = k as f64 * hop_ms;
            PitchPoint {
                t_ms,
                midi: melody.pitch_at(t_ms),
            }
        })
        .collect())
}
