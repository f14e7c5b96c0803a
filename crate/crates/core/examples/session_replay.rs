//! Record a trial to a session log, replay it and re-score it.
//!
//!     cargo run --example session_replay

use chrono::TimeZone;
use pitchcoach::dsp::DspConfig;
use pitchcoach::feedback::{FeedbackConfig, FeedbackMode};
use pitchcoach::haptics::ActuatorLayout;
use pitchcoach::melody::{midi_to_hz, MelodyTrack, Note};
use pitchcoach::scoring::ScoringConfig;
use pitchcoach::service::runner::TrialRunner;
use pitchcoach::session::{replay, SessionConfig, SessionHeader};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let melody = MelodyTrack::new("two", "", vec![Note::new(0.0, 400.0, 57.0), Note::new(500.0, 400.0, 62.0)])?;
    let header = SessionHeader {
        session_id: "demo".into(),
        created_utc: chrono::Utc.with_ymd_and_hms(2024, 6, 1, 10, 0, 0).unwrap(),
        config: SessionConfig {
            mode: FeedbackMode::Terminal,
            melody_id: melody.id.clone(),
            melody: melody.clone(),
            dsp: DspConfig::default(),
            layout: ActuatorLayout::default(),
            feedback: FeedbackConfig::default(),
            scoring: ScoringConfig::default(),
        },
    };

    let mut audio = vec![0.0f32; 10_000];
    for note in &melody.notes {
        let f = midi_to_hz(note.pitch_midi);
        let start = (note.onset_ms * 10.0) as usize;
        for i in 0..(note.duration_ms * 10.0) as usize {
            let ph = 2.0 * std::f64::consts::PI * f * i as f64 / 10_000.0;
            audio[start + i] = (0.2 * (1..=8).map(|h| (ph * h as f64).sin() / h as f64).sum::<f64>()) as f32;
        }
    }

    let mut runner = TrialRunner::new(header, Vec::new())?;
    runner.start()?;
    for chunk in audio.chunks(256) {
        runner.push_audio(chunk)?;
    }
    let (live_score, _, bytes) = runner.finish()?;
    let text = String::from_utf8(bytes)?;
    println!("{} log lines; first records:", text.lines().count());
    for line in text.lines().skip(1).take(4) {
        println!("  {line}");
    }

    let log = replay(&text)?;
    let rescored = log.rescore();
    println!("live score      {}", serde_json::to_string(&live_score)?);
    println!("re-scored equal {}", rescored == live_score && log.stored_score() == Some(&live_score));

    let cut = &text[..text.len() - 20];
    println!("truncated log:  {}", replay(cut).unwrap_err());
    Ok(())
}
