//! Linear vibrotactile pitch display: pitch-to-actuator mapping, the 6-byte
//! actuator command frame, and a protocol-compatible device simulator.
//!
//! Wire frame (little-endian duration):
//!
//! ```text
//! +------+----------+-----------+--------------+----------+
//! | 0xA7 | actuator | intensity | duration u16 | checksum |
//! +------+----------+-----------+--------------+----------+
//! ```
//!
//! The checksum is the XOR of the five preceding bytes. The frame carries no
//! timestamp; the device schedules commands on arrival.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::ScoreReport;

pub const FRAME_MAGIC: u8 = 0xA7;
pub const FRAME_LEN: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HapticError {
    #[error("actuator {0} does not fit the wire format (max 255)")]
    ActuatorRange(usize),
    #[error("duration {0} ms does not fit the wire format (max 65535)")]
    DurationRange(u32),
    #[error("bad frame magic 0x{0:02X}")]
    Framing(u8),
    #[error("checksum mismatch: frame says 0x{stored:02X}, payload gives 0x{computed:02X}")]
    Corrupt { stored: u8, computed: u8 },
    #[error("frame needs {FRAME_LEN} bytes, got {0}")]
    Length(usize),
    #[error("actuator {actuator} outside layout of {n_actuators}")]
    OutsideLayout { actuator: usize, n_actuators: usize },
    #[error("invalid layout: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLayout {
    pub n_actuators: usize,
    pub midi_lo: f64,
    pub midi_hi: f64,
}

impl Default for ActuatorLayout {
    fn default() -> Self {
        Self {
            n_actuators: 18,
            midi_lo: 48.0,
            midi_hi: 72.0,
        }
    }
}

impl ActuatorLayout {
    pub fn validate(&self) -> Result<(), HapticError> {
        if self.n_actuators < 2 {
            return Err(HapticError::Layout("need at least 2 actuators".into()));
        }
        if !(self.midi_lo < self.midi_hi) {
            return Err(HapticError::Layout("midi_lo must be below midi_hi".into()));
        }
        Ok(())
    }

    fn clamp_index(&self, position: f64) -> usize {
        let top = (self.n_actuators - 1) as f64;
        // NaN lands on the first actuator
        position.floor().clamp(0.0, top) as usize
    }
}

/// One actuator command. `t_ms` is the scheduling time on the trial clock and
/// is not part of the wire format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticFrame {
    pub t_ms: f64,
    pub actuator: usize,
    pub intensity: f64,
    pub duration_ms: u32,
}

impl HapticFrame {
    /// Intensity as sent on the wire.
    pub fn level(&self) -> u8 {
        (self.intensity.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

pub fn map_pitch_to_actuator(midi: f64, layout: &ActuatorLayout) -> usize {
    let span = layout.midi_hi - layout.midi_lo;
    layout.clamp_index((midi - layout.midi_lo) / span * layout.n_actuators as f64)
}

fn checksum(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_haptic_frame(frame: &HapticFrame) -> Result<[u8; FRAME_LEN], HapticError> {
    let actuator = u8::try_from(frame.actuator).map_err(|_| HapticError::ActuatorRange(frame.actuator))?;
    let duration =
        u16::try_from(frame.duration_ms).map_err(|_| HapticError::DurationRange(frame.duration_ms))?;
    let [d0, d1] = duration.to_le_bytes();
    let mut out = [FRAME_MAGIC, actuator, frame.level(), d0, d1, 0];
    out[5] = checksum(&out[..5]);
    Ok(out)
}

/// Decode one frame. The result has `t_ms = 0` and intensity `level / 255`.
pub fn decode_haptic_frame(bytes: &[u8]) -> Result<HapticFrame, HapticError> {
    if bytes.len() != FRAME_LEN {
        return Err(HapticError::Length(bytes.len()));
    }
    if bytes[0] != FRAME_MAGIC {
        return Err(HapticError::Framing(bytes[0]));
    }
    let computed = checksum(&bytes[..5]);
    if computed != bytes[5] {
        return Err(HapticError::Corrupt {
            stored: bytes[5],
            computed,
        });
    }
    Ok(HapticFrame {
        t_ms: 0.0,
        actuator: bytes[1] as usize,
        intensity: bytes[2] as f64 / 255.0,
        duration_ms: u16::from_le_bytes([bytes[3], bytes[4]]) as u32,
    })
}

/// Three 200 ms pulses, 150 ms apart, on an actuator that sits higher on the
/// array the smaller the pitch deviation. Times are relative to 0.
pub fn terminal_summary_pattern(score: &ScoreReport, layout: &ActuatorLayout) -> Vec<HapticFrame> {
    const PULSE_MS: u32 = 200;
    const GAP_MS: f64 = 150.0;
    let deviation = score.pitch_deviation_cents.clamp(0.0, 400.0);
    let actuator = layout.clamp_index((1.0 - deviation / 400.0) * layout.n_actuators as f64);
    (0..3)
        .map(|i| HapticFrame {
            t_ms: i as f64 * (PULSE_MS as f64 + GAP_MS),
            actuator,
            intensity: 0.8,
            duration_ms: PULSE_MS,
        })
        .collect()
}

/// Splits a byte stream into frames, resynchronising on the magic byte after
/// any framing or checksum failure.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Result<HapticFrame, HapticError>> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < self.buf.len() {
            if self.buf[pos] != FRAME_MAGIC {
                let skipped = self.buf[pos];
                pos += 1;
                while pos < self.buf.len() && self.buf[pos] != FRAME_MAGIC {
                    pos += 1;
                }
                out.push(Err(HapticError::Framing(skipped)));
                continue;
            }
            if self.buf.len() - pos < FRAME_LEN {
                break;
            }
            match decode_haptic_frame(&self.buf[pos..pos + FRAME_LEN]) {
                Ok(frame) => {
                    out.push(Ok(frame));
                    pos += FRAME_LEN;
                }
                Err(e) => {
                    out.push(Err(e));
                    pos += 1;
                }
            }
        }
        self.buf.drain(..pos);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Activation {
    level: u8,
    until_ms: u64,
}

/// Device model: each command drives one actuator for its duration; a zero
/// duration switches it off. Time is supplied by the caller.
#[derive(Debug, Clone)]
pub struct DeviceSimulator {
    n_actuators: usize,
    active: BTreeMap<usize, Activation>,
    rejected: usize,
}

impl DeviceSimulator {
    pub fn new(layout: &ActuatorLayout) -> Self {
        Self {
            n_actuators: layout.n_actuators,
            active: BTreeMap::new(),
            rejected: 0,
        }
    }

    pub fn apply(&mut self, now_ms: u64, frame: &HapticFrame) -> Result<(), HapticError> {
        if frame.actuator >= self.n_actuators {
            self.rejected += 1;
            return Err(HapticError::OutsideLayout {
                actuator: frame.actuator,
                n_actuators: self.n_actuators,
            });
        }
        if frame.duration_ms == 0 {
            self.active.remove(&frame.actuator);
        } else {
            self.active.insert(
                frame.actuator,
                Activation {
                    level: frame.level(),
                    until_ms: now_ms + frame.duration_ms as u64,
                },
            );
        }
        Ok(())
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// `(actuator, level, remaining_ms)` for every actuator still running.
    pub fn active_at(&self, now_ms: u64) -> Vec<(usize, u8, u64)> {
        self.active
            .iter()
            .filter(|(_, a)| a.until_ms > now_ms)
            .map(|(&i, a)| (i, a.level, a.until_ms - now_ms))
            .collect()
    }

    /// State dump: one `t_ms actuator intensity remaining_ms` line per
    /// running actuator, in actuator order.
    pub fn dump(&self, now_ms: u64) -> String {
        self.active_at(now_ms)
            .into_iter()
            .map(|(i, level, rem)| format!("{now_ms} {i} {:.3} {rem}\n", level as f64 / 255.0))
            .collect()
    }
}

/// Accept writers one at a time on `listener`, apply every decoded frame to a
/// simulator and write the state dump after each frame to `out`. Decoding
/// errors go to `err`. Returns after `max_connections` connections when set.
pub fn run_simulator(
    listener: TcpListener,
    layout: &ActuatorLayout,
    max_connections: Option<usize>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> std::io::Result<DeviceSimulator> {
    let mut sim = DeviceSimulator::new(layout);
    let clock = Instant::now();
    let mut served = 0;
    for stream in listener.incoming() {
        let mut stream = stream?;
        let mut decoder = FrameDecoder::new();
        let mut buf = [0u8; 512];
        loop {
            let n = stream.read(&mut buf)?;
            if n == 0 {
                break;
            }
            for result in decoder.push(&buf[..n]) {
                let now = clock.elapsed().as_millis() as u64;
                match result.and_then(|f| sim.apply(now, &f)) {
                    Ok(()) => {
                        out.write_all(sim.dump(now).as_bytes())?;
                        out.flush()?;
                    }
                    Err(e) => writeln!(err, "rejected frame: {e}")?,
                }
            }
        }
        served += 1;
        if max_connections.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(sim)
}
