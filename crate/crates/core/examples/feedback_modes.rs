//! The same sung phrase under synchronous and terminal feedback.
//!
//!     cargo run --example feedback_modes

use pitchcoach::dsp::{DspConfig, PitchFrame};
use pitchcoach::feedback::{EventPayload, FeedbackMode, Trial};
use pitchcoach::haptics::ActuatorLayout;
use pitchcoach::melody::{midi_to_hz, MelodyTrack, Note};
use pitchcoach::scoring::score_trial;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let melody = MelodyTrack::new(
        "three",
        "C D E",
        vec![Note::new(0.0, 200.0, 60.0), Note::new(200.0, 200.0, 62.0), Note::new(400.0, 200.0, 64.0)],
    )?;
    let cfg = DspConfig::default();
    let frames: Vec<PitchFrame> = (0..60)
        .map(|k| {
            let t = cfg.frame_time_ms(k);
            match melody.pitch_at(t) {
                // sung 20 cents flat
                Some(m) => PitchFrame::voiced(t, midi_to_hz(m - 0.2)),
                None => PitchFrame::unvoiced(t),
            }
        })
        .collect();
    let score = score_trial(&frames, &melody);

    for mode in [FeedbackMode::Synchronous, FeedbackMode::Terminal] {
        let mut trial = Trial::new(melody.clone(), mode, ActuatorLayout::default());
        let mut events = trial.start()?;
        for f in &frames {
            events.extend(trial.on_pitch_frame(f)?);
        }
        let end = frames.last().map_or(0.0, |f| f.t_ms);
        events.extend(trial.end_segment(end, &score)?);

        println!("== {mode}: {} events", events.len());
        for e in events.iter().filter(|e| !matches!(e.payload, EventPayload::Overlay { .. })) {
            println!("{:>8.1} ms  {:?}  {}", e.t_ms, e.channel(), serde_json::to_string(&e.payload)?);
        }
        let overlays = events.iter().filter(|e| matches!(e.payload, EventPayload::Overlay { .. })).count();
        println!("(+{overlays} overlay events)");
    }
    Ok(())
}
