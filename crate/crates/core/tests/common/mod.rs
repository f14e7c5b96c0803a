#![allow(dead_code)]

use std::path::Path;

use pitchcoach::melody::{load_melody, midi_to_hz, MelodyTrack};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FIXTURE_MELODY: &str = include_str!("../fixtures/twelve_notes.json");

pub fn fixture_melody() -> MelodyTrack {
    load_melody(FIXTURE_MELODY).unwrap()
}

/// Sawtooth from its first 8 harmonics, peak close to `amp`.
pub fn sawtooth(f_hz: f64, amp: f64, n: usize, sr: f64) -> Vec<f32> {
    let w = 2.0 * std::f64::consts::PI * f_hz / sr;
    (0..n)
        .map(|i| {
            let s: f64 = (1..=8).map(|h| (w * h as f64 * i as f64).sin() / h as f64).sum();
            (amp * s * 2.0 / std::f64::consts::PI) as f32
        })
        .collect()
}

pub fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// White Gaussian noise at `snr_db` below the signal's RMS.
pub fn add_noise(x: &mut [f32], snr_db: f64, rng: &mut ChaCha8Rng) {
    let sigma = rms(x) / 10f64.powf(snr_db / 20.0);
    let normal = Normal::new(0.0, sigma).unwrap();
    for v in x.iter_mut() {
        *v += normal.sample(rng) as f32;
    }
}

pub fn white_noise(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-amp..amp) as f32).collect()
}

/// The melody as sawtooth notes with silence in the rests.
pub fn render_melody(melody: &MelodyTrack, sr: f64, amp: f64) -> Vec<f32> {
    let total = (melody.last_offset_ms() / 1000.0 * sr).ceil() as usize + (0.2 * sr) as usize;
    let mut out = vec![0.0f32; total];
    for note in &melody.notes {
        let start = (note.onset_ms / 1000.0 * sr).round() as usize;
        let len = (note.duration_ms / 1000.0 * sr).round() as usize;
        let tone = sawtooth(midi_to_hz(note.pitch_midi), amp, len, sr);
        out[start..start + len].copy_from_slice(&tone);
    }
    out
}

pub fn write_wav(path: &Path, samples: &[f32], sr: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sr,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
}

/// Biased autocorrelation peak between `min_lag` and `max_lag`, refined by a
/// parabola through the neighbours.
pub fn acf_f0(frame: &[f32], sr: f64, min_lag: usize, max_lag: usize) -> Option<f64> {
    let x: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
    let r = |lag: usize| -> f64 { x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum() };
    let vals: Vec<f64> = (min_lag - 1..=max_lag + 1).map(r).collect();
    let best = (1..vals.len() - 1)
        .filter(|&i| vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1])
        .max_by(|&a, &b| vals[a].total_cmp(&vals[b]))?;
    let (a, b, c) = (vals[best - 1], vals[best], vals[best + 1]);
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
    let lag = (best + min_lag - 1) as f64 + delta;
    Some(sr / lag)
}
