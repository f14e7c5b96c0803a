//! Audio ingestion: 16-bit PCM WAV or raw little-endian PCM, mixed to mono,
//! normalised to [-1, 1] and brought to 10 kHz by linear interpolation.

use std::io::Read;

use thiserror::Error;

use crate::dsp::SAMPLE_RATE_HZ;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unsupported audio encoding: {0}")]
    Format(String),
    #[error("wav: {0}")]
    Wav(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for AudioError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => AudioError::Io(io),
            hound::Error::Unsupported | hound::Error::FormatError(_) => {
                AudioError::Format(e.to_string())
            }
            other => AudioError::Wav(other.to_string()),
        }
    }
}

/// Decode a WAV stream to mono samples at the analysis rate.
pub fn read_wav(reader: impl Read) -> Result<Vec<f32>, AudioError> {
    let mut wav = hound::WavReader::new(reader)?;
    let spec = wav.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Format(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(AudioError::Format(format!("{} channels, expected mono or stereo", spec.channels)));
    }
    let raw = wav.samples::<i16>().collect::<Result<Vec<_>, _>>()?;
    let mono = to_mono(&raw, spec.channels as usize);
    Ok(resample_linear(&mono, spec.sample_rate))
}

pub fn read_wav_file(path: &std::path::Path) -> Result<Vec<f32>, AudioError> {
    read_wav(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Bytes of raw PCM: a RIFF header selects the WAV path, anything else is
/// taken as mono s16le already at 10 kHz.
pub fn read_pcm_or_wav(bytes: &[u8]) -> Result<Vec<f32>, AudioError> {
    if bytes.starts_with(b"RIFF") {
        read_wav(bytes)
    } else {
        Ok(PcmDecoder::default().push(bytes))
    }
}

fn to_mono(raw: &[i16], channels: usize) -> Vec<f32> {
    raw.chunks_exact(channels)
        .map(|frame| {
            let sum: f32 = frame.iter().map(|&s| normalize(s)).sum();
            sum / channels as f32
        })
        .collect()
}

fn normalize(s: i16) -> f32 {
    s as f32 / 32768.0
}

/// Linear-interpolation resampling to 10 kHz. Output sample `j` sits at source
/// position `j * rate / 10000`, for every position inside the signal.
pub fn resample_linear(samples: &[f32], source_rate: u32) -> Vec<f32> {
    if source_rate == SAMPLE_RATE_HZ || samples.is_empty() {
        return samples.to_vec();
    }
    let step = source_rate as f64 / SAMPLE_RATE_HZ as f64;
    let last = (samples.len() - 1) as f64;
    let count = (last / step).floor() as usize + 1;
    (0..count)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            let frac = (pos - i as f64) as f32;
            match samples.get(i + 1) {
                Some(&next) => samples[i] + (next - samples[i]) * frac,
                None => samples[i],
            }
        })
        .collect()
}

/// Incremental s16le decoder; keeps an odd trailing byte for the next chunk.
#[derive(Debug, Default)]
pub struct PcmDecoder {
    pending: Option<u8>,
}

impl PcmDecoder {
    pub fn push(&mut self, bytes: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(bytes.len() / 2 + 1);
        let mut rest = bytes;
        if let Some(lo) = self.pending.take() {
            match rest.split_first() {
                Some((&hi, tail)) => {
                    out.push(normalize(i16::from_le_bytes([lo, hi])));
                    rest = tail;
                }
                None => {
                    self.pending = Some(lo);
                    return out;
                }
            }
        }
        let mut pairs = rest.chunks_exact(2);
        out.extend(pairs.by_ref().map(|p| normalize(i16::from_le_bytes([p[0], p[1]]))));
        self.pending = pairs.remainder().first().copied();
        out
    }
}
