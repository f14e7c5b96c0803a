//! Per-trial performance metrics: pitch deviation, contour direction accuracy
//! and onset timing, computed by segmenting the pitch stream against the
//! target melody.

use serde::{Deserialize, Serialize};

use crate::dsp::PitchFrame;
use crate::melody::MelodyTrack;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Minimum voiced share of a note window for the note to be scored.
    pub min_voiced_fraction: f64,
    /// How far before the written onset the onset search starts.
    pub onset_lead_ms: f64,
    /// Intervals within this many cents count as flat.
    pub flat_band_cents: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            min_voiced_fraction: 0.3,
            onset_lead_ms: 150.0,
            flat_band_cents: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotePerformance {
    pub note_index: usize,
    pub target_midi: f64,
    pub sung_midi: Option<f64>,
    pub sung_onset_ms: Option<f64>,
    pub voiced_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pitch_deviation_cents: f64,
    pub pitch_deviation_transposed_cents: f64,
    pub contour_accuracy: f64,
    pub rhythm_error_ms: f64,
    pub notes: Vec<NotePerformance>,
    /// Notes that entered the pitch metrics; 0 means the deviations are vacuous.
    pub scored_note_count: usize,
    /// Notes with a detected onset; 0 means the rhythm error is vacuous.
    pub detected_onset_count: usize,
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

pub fn segment_notes(frames: &[PitchFrame], melody: &MelodyTrack) -> Vec<NotePerformance> {
    segment_notes_with(frames, melody, &ScoringConfig::default())
}

/// Collect the frames of each half-open note window. The onset search window
/// opens `onset_lead_ms` early but never before the previous note's offset,
/// so a held previous note is not mistaken for an early entry.
pub fn segment_notes_with(
    frames: &[PitchFrame],
    melody: &MelodyTrack,
    cfg: &ScoringConfig,
) -> Vec<NotePerformance> {
    melody
        .notes
        .iter()
        .enumerate()
        .map(|(note_index, note)| {
            let in_window: Vec<&PitchFrame> =
                frames.iter().filter(|f| note.contains(f.t_ms)).collect();
            let voiced: Vec<f64> = in_window.iter().filter_map(|f| f.midi()).collect();
            let voiced_fraction = if in_window.is_empty() {
                0.0
            } else {
                voiced.len() as f64 / in_window.len() as f64
            };
            let sung_midi = (!voiced.is_empty() && voiced_fraction >= cfg.min_voiced_fraction)
                .then(|| median(&voiced));

            let prev_offset = note_index
                .checked_sub(1)
                .map(|i| melody.notes[i].offset_ms())
                .unwrap_or(f64::NEG_INFINITY);
            let search_from = (note.onset_ms - cfg.onset_lead_ms).max(prev_offset);
            let sung_onset_ms = frames
                .iter()
                .find(|f| f.is_voiced() && f.t_ms >= search_from && f.t_ms < note.offset_ms())
                .map(|f| f.t_ms);

            NotePerformance {
                note_index,
                target_midi: note.pitch_midi,
                sung_midi,
                sung_onset_ms,
                voiced_fraction,
            }
        })
        .collect()
}

/// Mean absolute error in cents, raw and after removing the median offset.
pub fn pitch_deviation(notes: &[NotePerformance]) -> (f64, f64) {
    let errors: Vec<f64> = notes
        .iter()
        .filter_map(|n| n.sung_midi.map(|s| 100.0 * (s - n.target_midi)))
        .collect();
    if errors.is_empty() {
        return (0.0, 0.0);
    }
    let count = errors.len() as f64;
    let raw = errors.iter().map(|e| e.abs()).sum::<f64>() / count;
    let offset = median(&errors);
    let transposed = errors.iter().map(|e| (e - offset).abs()).sum::<f64>() / count;
    (raw, transposed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
    Flat,
}

fn direction(delta_cents: f64, flat_band: f64) -> Direction {
    if delta_cents.abs() <= flat_band {
        Direction::Flat
    } else if delta_cents > 0.0 {
        Direction::Up
    } else {
        Direction::Down
    }
}

pub fn contour_accuracy(notes: &[NotePerformance]) -> f64 {
    contour_accuracy_with(notes, ScoringConfig::default().flat_band_cents)
}

/// Share of consecutive scored-note pairs whose sung interval moves in the
/// same direction as the target interval. 1.0 with fewer than two scored notes.
pub fn contour_accuracy_with(notes: &[NotePerformance], flat_band_cents: f64) -> f64 {
    let scored: Vec<(f64, f64)> = notes
        .iter()
        .filter_map(|n| n.sung_midi.map(|s| (s, n.target_midi)))
        .collect();
    if scored.len() < 2 {
        return 1.0;
    }
    let matches = scored
        .windows(2)
        .filter(|w| {
            let sung = 100.0 * (w[1].0 - w[0].0);
            let target = 100.0 * (w[1].1 - w[0].1);
            direction(sung, flat_band_cents) == direction(target, flat_band_cents)
        })
        .count();
    matches as f64 / (scored.len() - 1) as f64
}

/// Mean absolute onset error over notes with a detected onset.
pub fn rhythm_precision(notes: &[NotePerformance], melody: &MelodyTrack) -> f64 {
    let errors: Vec<f64> = notes
        .iter()
        .filter_map(|n| {
            let target = melody.notes.get(n.note_index)?.onset_ms;
            n.sung_onset_ms.map(|s| (s - target).abs())
        })
        .collect();
    if errors.is_empty() {
        0.0
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    }
}

pub fn score_trial(frames: &[PitchFrame], melody: &MelodyTrack) -> ScoreReport {
    score_trial_with(frames, melody, &ScoringConfig::default())
}

pub fn score_trial_with(
    frames: &[PitchFrame],
    melody: &MelodyTrack,
    cfg: &ScoringConfig,
) -> ScoreReport {
    let notes = segment_notes_with(frames, melody, cfg);
    let (raw, transposed) = pitch_deviation(&notes);
    ScoreReport {
        pitch_deviation_cents: raw,
        pitch_deviation_transposed_cents: transposed,
        contour_accuracy: contour_accuracy_with(&notes, cfg.flat_band_cents),
        rhythm_error_ms: rhythm_precision(&notes, melody),
        scored_note_count: notes.iter().filter(|n| n.sung_midi.is_some()).count(),
        detected_onset_count: notes.iter().filter(|n| n.sung_onset_ms.is_some()).count(),
        notes,
    }
}
