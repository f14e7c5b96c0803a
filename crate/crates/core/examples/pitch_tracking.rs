//! Track the pitch of a WAV file, or of a synthetic glide when no path is given.
//!
//!     cargo run --example pitch_tracking -- [take.wav]

use pitchcoach::dsp::{smooth_pitch, DspConfig, PitchTracker};
use pitchcoach::service::audio::read_wav_file;

fn glide() -> Vec<f32> {
    // 150 -> 300 Hz over two seconds, 6 harmonics
    let sr = 10_000.0;
    let mut phase = 0.0f64;
    (0..20_000)
        .map(|i| {
            let f = 150.0 * 2f64.powf(i as f64 / 20_000.0);
            phase += f / sr;
            let s: f64 = (1..=6)
                .map(|h| (2.0 * std::f64::consts::PI * phase * h as f64).sin() / h as f64)
                .sum();
            (0.3 * s) as f32
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let samples = match std::env::args().nth(1) {
        Some(path) => read_wav_file(path.as_ref())?,
        None => glide(),
    };
    let cfg = DspConfig::default();
    let mut tracker = PitchTracker::new(&cfg)?;

    // feed in 37-sample chunks, as a capture callback would
    let mut frames = Vec::new();
    for chunk in samples.chunks(37) {
        frames.extend(tracker.push(chunk));
    }
    frames.extend(tracker.finish());

    let smoothed = smooth_pitch(&frames);
    println!("{:>8} {:>9} {:>7} {:>6}", "t_ms", "f0_hz", "midi", "conf");
    for f in smoothed.iter().step_by(10) {
        match (f.f0_hz, f.midi()) {
            (Some(hz), Some(m)) => println!("{:>8.1} {:>9.2} {:>7.2} {:>6.2}", f.t_ms, hz, m, f.confidence),
            _ => println!("{:>8.1} {:>9} {:>7} {:>6}", f.t_ms, "-", "-", "-"),
        }
    }
    let voiced = frames.iter().filter(|f| f.is_voiced()).count();
    println!("{voiced}/{} frames voiced", frames.len());
    Ok(())
}
