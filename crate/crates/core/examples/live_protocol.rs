//! Drive the `/live` protocol state machine directly and print the JSON a
//! UI would receive. `serve` wraps exactly this behind a WebSocket.
//!
//!     cargo run --example live_protocol

use pitchcoach::service::config::EngineConfig;
use pitchcoach::service::live::{LiveSession, StreamMessage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::env::temp_dir().join(format!("live-demo-{}", std::process::id()));
    std::fs::create_dir_all(data.join("melodies"))?;
    std::fs::write(
        data.join("melodies/a4.json"),
        r#"{"id":"a4","description":"one held A","notes":[{"onset_ms":0,"duration_ms":600,"midi":69}]}"#,
    )?;
    let mut live = LiveSession::new(&data, EngineConfig::default());

    let show = |msgs: Vec<StreamMessage>| {
        for m in msgs.iter().filter(|m| !matches!(m, StreamMessage::PitchFrame(_))) {
            println!("<- {}", m.to_json());
        }
        let frames = msgs.iter().filter(|m| matches!(m, StreamMessage::PitchFrame(_))).count();
        if frames > 0 {
            println!("<- ... {frames} pitch_frame messages");
        }
    };
    for text in [r#"{"type":"start_trial","melody_id":"a4","mode":"sync"}"#, r#"{"type":"hello"}"#] {
        println!("-> {text}");
        show(live.handle_text(text));
    }
    let start = r#"{"type":"start_trial","melody_id":"a4","mode":"terminal"}"#;
    println!("-> {start}");
    show(live.handle_text(start));

    // 0.7 s of a 440 Hz tone as s16le PCM
    let pcm: Vec<u8> = (0..7000)
        .flat_map(|i| {
            let ph = 2.0 * std::f64::consts::PI * 440.0 * i as f64 / 10_000.0;
            ((1..=8).map(|h| (ph * h as f64).sin() / h as f64).sum::<f64>() * 6000.0) as i16
        }
        .to_le_bytes())
        .collect();
    println!("-> {} bytes of PCM", pcm.len());
    for chunk in pcm.chunks(2048) {
        show(live.push_audio(chunk));
    }
    println!(r#"-> {{"type":"stop_trial"}}"#);
    show(live.handle_text(r#"{"type":"stop_trial"}"#));
    std::fs::remove_dir_all(&data)?;
    Ok(())
}
