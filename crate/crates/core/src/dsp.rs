//! Streaming F0 estimation with the real cepstrum.
//!
//! Audio at 10 kHz is cut into overlapping frames (512 samples every 100 by
//! default). Each frame is Hann-windowed, its log-magnitude spectrum is
//! transformed back to the quefrency domain, and the largest cepstral peak in
//! the band `[sr/f0_max, sr/f0_min]` gives the period. A strong peak at a
//! half or a third of that quefrency wins instead, which catches period
//! doubling. A frame counts as voiced when its windowed RMS passes the gate,
//! both halves of the window carry energy, and the peak stands out from the
//! band mean by at least `cpp_threshold`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::melody::hz_to_midi;

pub const SAMPLE_RATE_HZ: u32 = 10_000;

const LOG_FLOOR: f64 = 1e-10;

/// A sub-multiple peak this fraction of the main peak's height takes over.
const SUBHARMONIC_RATIO: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("frame has {got} samples, expected {expected}")]
    FrameLength { expected: usize, got: usize },
    #[error("invalid dsp config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub cpp_threshold: f64,
    pub rms_gate: f64,
    /// Spectral dynamic range kept before the log, in dB below the peak bin.
    pub log_range_db: f64,
    /// Weaker over stronger half-window energy below which a frame is a
    /// partial (onset or tail) and left unvoiced.
    pub min_energy_balance: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: SAMPLE_RATE_HZ,
            frame_len: 512,
            hop: 100,
            f0_min_hz: 80.0,
            f0_max_hz: 600.0,
            cpp_threshold: 5.0,
            rms_gate: 0.01,
            log_range_db: 30.0,
            min_energy_balance: 0.1,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |msg: &str| Err(DspError::Config(msg.to_string()));
        if self.sample_rate_hz != SAMPLE_RATE_HZ {
            return bad("sample_rate_hz is fixed at 10000");
        }
        if !self.frame_len.is_power_of_two() || self.frame_len < 8 {
            return bad("frame_len must be a power of two >= 8");
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return bad("hop must be in 1..=frame_len");
        }
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz) {
            return bad("need 0 < f0_min_hz < f0_max_hz");
        }
        if self.f0_max_hz >= self.sample_rate_hz as f64 / 2.0 {
            return bad("f0_max_hz must be below Nyquist");
        }
        let (_, q_hi) = self.quefrency_band();
        if q_hi + 1 >= self.frame_len / 2 {
            return bad("frame too short for f0_min_hz");
        }
        if !(self.log_range_db > 0.0) {
            return bad("log_range_db must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_energy_balance) {
            return bad("min_energy_balance must be in [0, 1]");
        }
        if !(self.cpp_threshold > 0.0) || !(0.0..=1.0).contains(&self.rms_gate) {
            return bad("cpp_threshold must be positive and rms_gate in [0, 1]");
        }
        Ok(())
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop as f64 * 1000.0 / self.sample_rate_hz as f64
    }

    /// Centre time of frame `index`.
    pub fn frame_time_ms(&self, index: usize) -> f64 {
        (index * self.hop + self.frame_len / 2) as f64 * 1000.0 / self.sample_rate_hz as f64
    }

    /// Inclusive quefrency bin range searched for the period.
    fn quefrency_band(&self) -> (usize, usize) {
        let sr = self.sample_rate_hz as f64;
        let lo = (sr / self.f0_max_hz).ceil() as usize;
        let hi = (sr / self.f0_min_hz).floor() as usize;
        (lo.max(2), hi)
    }
}

/// One analysis hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    pub t_ms: f64,
    pub f0_hz: Option<f64>,
    pub confidence: f64,
    pub rms: f64,
}

impl PitchFrame {
    pub fn unvoiced(t_ms: f64) -> Self {
        Self {
            t_ms,
            f0_hz: None,
            confidence: 0.0,
            rms: 0.0,
        }
    }

    pub fn voiced(t_ms: f64, f0_hz: f64) -> Self {
        Self {
            t_ms,
            f0_hz: Some(f0_hz),
            confidence: 1.0,
            rms: 0.5,
        }
    }

    pub fn is_voiced(&self) -> bool {
        self.f0_hz.is_some()
    }

    pub fn midi(&self) -> Option<f64> {
        self.f0_hz.and_then(|f| hz_to_midi(f).ok())
    }
}

/// Raw cepstral analysis of one frame, before the voicing decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CepstralPeak {
    pub f0_hz: f64,
    /// Peak height over the mean absolute cepstrum in the search band.
    pub prominence: f64,
    /// RMS of the windowed frame, rescaled so a steady signal keeps its RMS.
    pub rms: f64,
    /// Windowed energy of the weaker half over the stronger, 0 for silence.
    pub balance: f64,
}

impl CepstralPeak {
    pub fn is_voiced(&self, cfg: &DspConfig) -> bool {
        self.rms >= cfg.rms_gate
            && self.balance >= cfg.min_energy_balance
            && self.prominence >= cfg.cpp_threshold
    }

    fn confidence(&self, cfg: &DspConfig) -> f64 {
        (self.prominence / (2.0 * cfg.cpp_threshold)).min(1.0)
    }
}

/// Reusable cepstral estimator: owns the FFT plans, window and scratch.
pub struct CepstralEstimator {
    cfg: DspConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_power: f64,
    spectrum: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl std::fmt::Debug for CepstralEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CepstralEstimator")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

impl CepstralEstimator {
    pub fn new(cfg: &DspConfig) -> Result<Self, DspError> {
        cfg.validate()?;
        let n = cfg.frame_len;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        // periodic Hann
        let window: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let window_power = window.iter().map(|w| w * w).sum();
        Ok(Self {
            cfg: cfg.clone(),
            forward,
            inverse,
            window,
            window_power,
            spectrum: vec![Complex::default(); n],
            scratch: vec![Complex::default(); scratch_len],
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    /// Locate the dominant cepstral peak regardless of voicing.
    pub fn analyze(&mut self, frame: &[f32]) -> Result<CepstralPeak, DspError> {
        let n = self.cfg.frame_len;
        if frame.len() != n {
            return Err(DspError::FrameLength {
                expected: n,
                got: frame.len(),
            });
        }
        let mut halves = [0.0f64; 2];
        for (i, ((bin, &s), &w)) in self.spectrum.iter_mut().zip(frame).zip(&self.window).enumerate() {
            let v = s as f64 * w;
            halves[2 * i / n] += v * v;
            *bin = Complex::new(v, 0.0);
        }
        let rms = ((halves[0] + halves[1]) / self.window_power).sqrt();
        let balance = match halves[0].max(halves[1]) {
            m if m > 0.0 => halves[0].min(halves[1]) / m,
            _ => 0.0,
        };

        self.forward
            .process_with_scratch(&mut self.spectrum, &mut self.scratch);
        let peak_mag = self.spectrum.iter().map(|b| b.norm()).fold(0.0, f64::max);
        let floor = peak_mag * 10f64.powf(-self.cfg.log_range_db / 20.0);
        for bin in self.spectrum.iter_mut() {
            *bin = Complex::new((bin.norm().max(floor) + LOG_FLOOR).ln(), 0.0);
        }
        self.inverse
            .process_with_scratch(&mut self.spectrum, &mut self.scratch);
        let scale = 1.0 / n as f64;
        let cep: Vec<f64> = self.spectrum[..n / 2].iter().map(|c| c.re * scale).collect();

        let (lo, hi) = self.cfg.quefrency_band();
        let band = &cep[lo..=hi];
        let mean_abs = band.iter().map(|c| c.abs()).sum::<f64>() / band.len() as f64;
        let top = lo + band
            .iter()
            .enumerate()
            .fold(0, |best, (i, &c)| if c > band[best] { i } else { best });
        let (mut quefrency, mut height) = refine(&cep, top);

        // period doubling/tripling: move to a strong peak at q/2 or q/3
        let sr = self.cfg.sample_rate_hz as f64;
        let q_min = (sr / (self.cfg.f0_max_hz * 1.03)).max(1.0);
        'search: loop {
            for k in [2.0, 3.0] {
                let target = quefrency / k;
                let from = (target.floor() as usize).saturating_sub(1).max(lo - 1).max(1);
                let to = (target.ceil() as usize + 1).min(hi + 1);
                if from > to {
                    continue;
                }
                let j = (from..=to).fold(from, |best, j| if cep[j] > cep[best] { j } else { best });
                if cep[j] < cep[j - 1] || cep[j] < cep[j + 1] {
                    continue;
                }
                let (q, h) = refine(&cep, j);
                if q >= q_min && h >= SUBHARMONIC_RATIO * height {
                    quefrency = q;
                    height = h;
                    continue 'search;
                }
            }
            break;
        }

        let f0_hz = (sr / quefrency).clamp(self.cfg.f0_min_hz, self.cfg.f0_max_hz);
        let prominence = if mean_abs > 0.0 { height / mean_abs } else { 0.0 };
        Ok(CepstralPeak {
            f0_hz,
            prominence,
            rms,
            balance,
        })
    }

    /// F0 and confidence for one frame, or `None` when the frame is unvoiced.
    pub fn estimate(&mut self, frame: &[f32]) -> Result<Option<(f64, f64)>, DspError> {
        let peak = self.analyze(frame)?;
        Ok(peak
            .is_voiced(&self.cfg)
            .then(|| (peak.f0_hz, peak.confidence(&self.cfg))))
    }

    /// Full [`PitchFrame`] for frame `index` of a stream.
    pub fn pitch_frame(&mut self, index: usize, frame: &[f32]) -> Result<PitchFrame, DspError> {
        let peak = self.analyze(frame)?;
        let voiced = peak.is_voiced(&self.cfg);
        Ok(PitchFrame {
            t_ms: self.cfg.frame_time_ms(index),
            f0_hz: voiced.then_some(peak.f0_hz),
            confidence: if voiced { peak.confidence(&self.cfg) } else { 0.0 },
            rms: peak.rms.min(1.0),
        })
    }
}

/// Parabolic peak position and height around bin `q`.
fn refine(cep: &[f64], q: usize) -> (f64, f64) {
    let (a, b, c) = (cep[q - 1], cep[q], cep[q + 1]);
    let curvature = a - 2.0 * b + c;
    if curvature < 0.0 {
        let d = (0.5 * (a - c) / curvature).clamp(-0.5, 0.5);
        (q as f64 + d, b - 0.25 * (a - c) * d)
    } else {
        (q as f64, b)
    }
}

/// One-shot convenience over [`CepstralEstimator::estimate`].
pub fn estimate_f0(frame: &[f32], cfg: &DspConfig) -> Result<Option<(f64, f64)>, DspError> {
    CepstralEstimator::new(cfg)?.estimate(frame)
}

/// Incremental framer. Frame `k` starts at sample `k * hop`; frames are
/// released as soon as they are complete, and [`Framer::finish`] zero-pads
/// every remaining frame whose start lies inside the signal.
#[derive(Debug, Clone)]
pub struct Framer {
    frame_len: usize,
    hop: usize,
    buf: Vec<f32>,
    /// Absolute sample index of `buf[0]`.
    buf_start: usize,
    total: usize,
    next_frame: usize,
}

impl Framer {
    pub fn new(frame_len: usize, hop: usize) -> Self {
        assert!(hop > 0 && hop <= frame_len, "hop must be in 1..=frame_len");
        Self {
            frame_len,
            hop,
            buf: Vec::new(),
            buf_start: 0,
            total: 0,
            next_frame: 0,
        }
    }

    pub fn samples_seen(&self) -> usize {
        self.total
    }

    /// Feed samples; `emit(index, frame)` is called for every completed frame.
    pub fn push(&mut self, samples: &[f32], mut emit: impl FnMut(usize, &[f32])) {
        self.buf.extend_from_slice(samples);
        self.total += samples.len();
        while self.next_frame * self.hop + self.frame_len <= self.total {
            let start = self.next_frame * self.hop - self.buf_start;
            emit(self.next_frame, &self.buf[start..start + self.frame_len]);
            self.next_frame += 1;
        }
        self.compact();
    }

    /// Flush zero-padded tail frames and reset nothing; the framer is spent.
    pub fn finish(&mut self, mut emit: impl FnMut(usize, &[f32])) {
        let mut frame = vec![0.0f32; self.frame_len];
        while self.total > 0 && self.next_frame * self.hop <= self.total - 1 {
            let abs = self.next_frame * self.hop;
            let start = abs - self.buf_start;
            let avail = (self.total - abs).min(self.frame_len);
            frame.fill(0.0);
            frame[..avail].copy_from_slice(&self.buf[start..start + avail]);
            emit(self.next_frame, &frame);
            self.next_frame += 1;
        }
    }

    fn compact(&mut self) {
        let keep_from = self.next_frame * self.hop;
        if keep_from > self.buf_start {
            let drop = (keep_from - self.buf_start).min(self.buf.len());
            self.buf.drain(..drop);
            self.buf_start += drop;
        }
    }
}

/// Cut a whole signal into analysis frames (zero-padded at the tail).
pub fn frame_stream(samples: &[f32], cfg: &DspConfig) -> Vec<Vec<f32>> {
    let mut frames = Vec::new();
    let mut framer = Framer::new(cfg.frame_len, cfg.hop);
    framer.push(samples, |_, f| frames.push(f.to_vec()));
    framer.finish(|_, f| frames.push(f.to_vec()));
    frames
}

/// Streaming pitch tracker: framer plus estimator.
#[derive(Debug)]
pub struct PitchTracker {
    framer: Framer,
    estimator: CepstralEstimator,
}

impl PitchTracker {
    pub fn new(cfg: &DspConfig) -> Result<Self, DspError> {
        Ok(Self {
            framer: Framer::new(cfg.frame_len, cfg.hop),
            estimator: CepstralEstimator::new(cfg)?,
        })
    }

    pub fn push(&mut self, samples: &[f32]) -> Vec<PitchFrame> {
        let mut out = Vec::new();
        let est = &mut self.estimator;
        self.framer.push(samples, |k, f| {
            out.push(est.pitch_frame(k, f).expect("framer yields full frames"))
        });
        out
    }

    pub fn finish(&mut self) -> Vec<PitchFrame> {
        let mut out = Vec::new();
        let est = &mut self.estimator;
        self.framer.finish(|k, f| {
            out.push(est.pitch_frame(k, f).expect("framer yields full frames"))
        });
        out
    }

    pub fn samples_seen(&self) -> usize {
        self.framer.samples_seen()
    }
}

/// Track a whole signal.
pub fn track_pitch(samples: &[f32], cfg: &DspConfig) -> Result<Vec<PitchFrame>, DspError> {
    let mut tracker = PitchTracker::new(cfg)?;
    let mut frames = tracker.push(samples);
    frames.extend(tracker.finish());
    Ok(frames)
}

/// 5-point median over each voiced run, taken in the MIDI domain. Windows
/// shrink symmetrically near run edges, so the first and last frame of a run
/// are left as they are. Unvoiced frames pass through and split runs.
pub fn smooth_pitch(frames: &[PitchFrame]) -> Vec<PitchFrame> {
    const HALF: usize = 2;
    let mut out = frames.to_vec();
    let mut i = 0;
    while i < frames.len() {
        if !frames[i].is_voiced() {
            i += 1;
            continue;
        }
        let start = i;
        while i < frames.len() && frames[i].is_voiced() {
            i += 1;
        }
        let run = &frames[start..i];
        let midis: Vec<f64> = run.iter().map(|f| f.midi().unwrap_or(f64::NAN)).collect();
        for (j, slot) in out[start..i].iter_mut().enumerate() {
            let h = HALF.min(j).min(run.len() - 1 - j);
            let mut idx: Vec<usize> = (j - h..=j + h).collect();
            idx.sort_by(|&a, &b| midis[a].total_cmp(&midis[b]));
            // odd window: the median is a member, so keep its exact Hz value
            slot.f0_hz = run[idx[h]].f0_hz;
        }
    }
    out
}
