//! Score three renditions of a short melody: accurate, transposed up a
//! semitone, and late with one wrong direction.
//!
//!     cargo run --example scoring

use pitchcoach::dsp::PitchFrame;
use pitchcoach::melody::{midi_to_hz, MelodyTrack, Note};
use pitchcoach::scoring::score_trial;

fn sing(melody: &MelodyTrack, transpose: f64, late_ms: f64, swap: Option<usize>) -> Vec<PitchFrame> {
    (0..300)
        .map(|k| {
            let t = k as f64 * 10.0;
            let idx = melody.notes.iter().position(|n| n.contains(t - late_ms));
            match idx {
                Some(i) => {
                    let mut m = melody.notes[i].pitch_midi;
                    if swap == Some(i) {
                        m = melody.notes[i - 1].pitch_midi - 2.0;
                    }
                    PitchFrame::voiced(t, midi_to_hz(m + transpose))
                }
                None => PitchFrame::unvoiced(t),
            }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let melody = MelodyTrack::new(
        "five",
        "",
        [60.0, 64.0, 67.0, 65.0, 64.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| Note::new(i as f64 * 500.0, 350.0, m))
            .collect(),
    )?;
    let takes = [
        ("accurate", sing(&melody, 0.0, 0.0, None)),
        ("+1 semitone", sing(&melody, 1.0, 0.0, None)),
        ("late, note 3 wrong way", sing(&melody, 0.0, 40.0, Some(2))),
    ];
    println!("{:<24} {:>10} {:>12} {:>8} {:>8}", "take", "dev (c)", "transp (c)", "contour", "rhythm");
    for (name, frames) in takes {
        let r = score_trial(&frames, &melody);
        println!(
            "{name:<24} {:>10.1} {:>12.1} {:>8.2} {:>8.1}",
            r.pitch_deviation_cents, r.pitch_deviation_transposed_cents, r.contour_accuracy, r.rhythm_error_ms
        );
    }
    Ok(())
}
