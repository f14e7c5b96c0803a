//! Render a melody to WAV, run a trial over it with the device simulator
//! listening, then re-score the log as `pitchcoach score` would.
//!
//!     cargo run --example end_to_end

use std::net::TcpListener;

use pitchcoach::feedback::FeedbackMode;
use pitchcoach::haptics::{run_simulator, ActuatorLayout};
use pitchcoach::melody::{midi_to_hz, MelodyTrack, Note};
use pitchcoach::service::cli::{run_trial, score_log, RunArgs};
use pitchcoach::service::config::EngineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("e2e-demo-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let melody = MelodyTrack::new(
        "arpeggio",
        "C E G E",
        [60.0, 64.0, 67.0, 64.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| Note::new(i as f64 * 450.0, 400.0, m))
            .collect(),
    )?;
    let melody_path = dir.join("arpeggio.json");
    std::fs::write(&melody_path, serde_json::to_string_pretty(&melody)?)?;

    // 22.05 kHz stereo, resampled to 10 kHz on ingestion
    let wav_path = dir.join("take.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 22_050,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut wav = hound::WavWriter::create(&wav_path, spec)?;
    for i in 0..(2.0 * 22_050.0) as usize {
        let t_ms = i as f64 / 22.05;
        let s = match melody.pitch_at(t_ms) {
            Some(m) => {
                let ph = 2.0 * std::f64::consts::PI * midi_to_hz(m + 0.3) * i as f64 / 22_050.0;
                (1..=5).map(|h| (ph * h as f64).sin() / h as f64).sum::<f64>() * 0.25
            }
            None => 0.0,
        };
        let v = (s * 32767.0) as i16;
        wav.write_sample(v)?;
        wav.write_sample(v)?;
    }
    wav.finalize()?;

    let device = TcpListener::bind("127.0.0.1:0")?;
    let device_addr = device.local_addr()?.to_string();
    let sim = std::thread::spawn(move || {
        let mut dump = Vec::new();
        run_simulator(device, &ActuatorLayout::default(), Some(1), &mut dump, &mut std::io::sink()).map(|_| dump)
    });

    let args = RunArgs {
        melody: melody_path,
        mode: FeedbackMode::Synchronous,
        input: wav_path,
        haptic_addr: Some(device_addr),
        trigger_addr: None,
        out: dir.clone(),
        session_id: Some("take-1".into()),
        created_utc: None,
    };
    let summary = run_trial(&args, &EngineConfig::default())?;
    let dump = String::from_utf8(sim.join().expect("simulator thread")?)?;
    println!("log: {}", summary.log_path.display());
    println!("device saw {} state lines; last: {}", dump.lines().count(), dump.lines().last().unwrap_or("-"));
    println!("score: {}", serde_json::to_string_pretty(&summary.score)?);
    println!("replayed score matches: {}", score_log(&summary.log_path)? == summary.score);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
