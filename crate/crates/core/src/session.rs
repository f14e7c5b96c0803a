//! Append-only session logs and study-data ingestion.
//!
//! A session log is newline-delimited JSON: the first line is a
//! [`SessionHeader`] with the configuration snapshot, every following line is
//! one [`LogRecord`] tagged by `kind`. Records are flushed one at a time and
//! timestamps never decrease, so a crashed session leaves a readable prefix.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{smooth_pitch, DspConfig, PitchFrame};
use crate::feedback::{EventPayload, FeedbackConfig, FeedbackEvent, FeedbackMode};
use crate::haptics::ActuatorLayout;
use crate::melody::MelodyTrack;
use crate::scoring::{score_trial_with, ScoreReport, ScoringConfig};
use crate::stats::ChannelSeries;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("record at {t_ms} ms appended after {last_ms} ms")]
    Ordering { t_ms: f64, last_ms: f64 },
    #[error("line {line}: timestamp {t_ms} ms goes back from {last_ms} ms")]
    Corrupt { line: usize, t_ms: f64, last_ms: f64 },
    #[error("session log is empty (no header)")]
    MissingHeader,
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("row {row}, column {column:?}: {message}")]
    Cell {
        row: u64,
        column: String,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for SessionError {
    fn from(e: csv::Error) -> Self {
        SessionError::Csv(e.to_string())
    }
}

/// Everything needed to reproduce a trial's analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: FeedbackMode,
    pub melody_id: String,
    pub melody: MelodyTrack,
    pub dsp: DspConfig,
    pub layout: ActuatorLayout,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub created_utc: DateTime<Utc>,
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentBoundary {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Pitch(PitchFrame),
    Feedback(FeedbackEvent),
    Trigger {
        t_ms: f64,
        mode: FeedbackMode,
        code: u8,
    },
    Segment {
        t_ms: f64,
        boundary: SegmentBoundary,
    },
}

impl LogRecord {
    pub fn t_ms(&self) -> f64 {
        match self {
            Self::Pitch(f) => f.t_ms,
            Self::Feedback(e) => e.t_ms,
            Self::Trigger { t_ms, .. } | Self::Segment { t_ms, .. } => *t_ms,
        }
    }

    /// Triggers are stored under their own kind.
    pub fn from_event(event: FeedbackEvent) -> Self {
        match event.payload {
            EventPayload::Trigger { code } => Self::Trigger {
                t_ms: event.t_ms,
                mode: event.mode,
                code,
            },
            _ => Self::Feedback(event),
        }
    }

    pub fn as_event(&self) -> Option<FeedbackEvent> {
        match self {
            Self::Feedback(e) => Some(e.clone()),
            Self::Trigger { t_ms, mode, code } => Some(FeedbackEvent::new(
                *t_ms,
                *mode,
                EventPayload::Trigger { code: *code },
            )),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn new(header: SessionHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn last_t_ms(&self) -> Option<f64> {
        self.records.last().map(LogRecord::t_ms)
    }

    /// In-memory append with the same ordering rule as [`SessionWriter`].
    pub fn append(&mut self, record: LogRecord) -> Result<(), SessionError> {
        check_order(self.last_t_ms(), record.t_ms())?;
        self.records.push(record);
        Ok(())
    }

    pub fn pitch_frames(&self) -> Vec<PitchFrame> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Pitch(f) => Some(*f),
                _ => None,
            })
            .collect()
    }

    pub fn events(&self) -> Vec<FeedbackEvent> {
        self.records.iter().filter_map(LogRecord::as_event).collect()
    }

    /// The score carried by the last visual score event, if the trial finished.
    pub fn stored_score(&self) -> Option<&ScoreReport> {
        self.records.iter().rev().find_map(|r| match r {
            LogRecord::Feedback(FeedbackEvent {
                payload: EventPayload::Score { score },
                ..
            }) => Some(score),
            _ => None,
        })
    }

    /// Score the logged pitch frames again.
    pub fn rescore(&self) -> ScoreReport {
        score_session_frames(&self.pitch_frames(), &self.header.config)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = header_line(&self.header);
        for r in &self.records {
            out.push_str(&record_line(r));
        }
        out
    }
}

/// Trial analysis applied to raw logged frames: median smoothing, then scoring.
pub fn score_session_frames(frames: &[PitchFrame], config: &SessionConfig) -> ScoreReport {
    score_trial_with(&smooth_pitch(frames), &config.melody, &config.scoring)
}

fn check_order(last: Option<f64>, t_ms: f64) -> Result<(), SessionError> {
    match last {
        Some(last_ms) if t_ms < last_ms => Err(SessionError::Ordering { t_ms, last_ms }),
        _ => Ok(()),
    }
}

fn header_line(header: &SessionHeader) -> String {
    let mut line = serde_json::to_string(header).expect("header serialises");
    line.push('\n');
    line
}

fn record_line(record: &LogRecord) -> String {
    let mut line = serde_json::to_string(record).expect("record serialises");
    line.push('\n');
    line
}

/// Single writer for one session file.
#[derive(Debug)]
pub struct SessionWriter<W: Write> {
    out: W,
    last_t_ms: Option<f64>,
}

impl SessionWriter<File> {
    /// Create a new log file; fails if it already exists.
    pub fn create(path: &Path, header: &SessionHeader) -> Result<Self, SessionError> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Self::new(file, header)
    }

    /// Reopen an existing log for appending. Earlier bytes are never rewritten.
    pub fn open_append(path: &Path) -> Result<Self, SessionError> {
        let log = replay(&std::fs::read_to_string(path)?)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            out: file,
            last_t_ms: log.last_t_ms(),
        })
    }
}

impl<W: Write> SessionWriter<W> {
    pub fn new(mut out: W, header: &SessionHeader) -> Result<Self, SessionError> {
        out.write_all(header_line(header).as_bytes())?;
        out.flush()?;
        Ok(Self {
            out,
            last_t_ms: None,
        })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), SessionError> {
        check_order(self.last_t_ms, record.t_ms())?;
        self.out.write_all(record_line(record).as_bytes())?;
        self.out.flush()?;
        self.last_t_ms = Some(record.t_ms());
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Rebuild a session from log text.
pub fn replay(text: &str) -> Result<SessionLog, SessionError> {
    let mut lines = text.split_inclusive('\n').enumerate();
    let (_, first) = lines.next().ok_or(SessionError::MissingHeader)?;
    let header: SessionHeader =
        serde_json::from_str(first.trim_end_matches('\n')).map_err(|e| SessionError::Malformed {
            line: 1,
            message: format!("bad header: {e}"),
        })?;
    let mut log = SessionLog::new(header);
    for (idx, raw) in lines {
        let line = idx + 1;
        let body = raw.trim_end_matches('\n').trim_end_matches('\r');
        if body.trim().is_empty() {
            continue;
        }
        let record: LogRecord = serde_json::from_str(body).map_err(|e| SessionError::Malformed {
            line,
            message: if raw.ends_with('\n') {
                e.to_string()
            } else {
                format!("truncated record: {e}")
            },
        })?;
        if let Some(last_ms) = log.last_t_ms() {
            if record.t_ms() < last_ms {
                return Err(SessionError::Corrupt {
                    line,
                    t_ms: record.t_ms(),
                    last_ms,
                });
            }
        }
        log.records.push(record);
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Instrument {
    #[serde(rename = "GEQ")]
    Geq,
    #[serde(rename = "IMI")]
    Imi,
}

impl std::str::FromStr for Instrument {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GEQ" => Ok(Self::Geq),
            "IMI" => Ok(Self::Imi),
            other => Err(format!("unknown instrument {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    pub min: f64,
    pub max: f64,
}

/// Declared item scales, usually read from a sidecar TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireScales {
    #[serde(rename = "GEQ", default = "default_geq")]
    pub geq: ScaleBounds,
    #[serde(rename = "IMI", default = "default_imi")]
    pub imi: ScaleBounds,
}

fn default_geq() -> ScaleBounds {
    ScaleBounds { min: 0.0, max: 4.0 }
}

fn default_imi() -> ScaleBounds {
    ScaleBounds { min: 1.0, max: 7.0 }
}

impl Default for QuestionnaireScales {
    fn default() -> Self {
        Self {
            geq: default_geq(),
            imi: default_imi(),
        }
    }
}

impl QuestionnaireScales {
    pub fn bounds(&self, instrument: Instrument) -> ScaleBounds {
        match instrument {
            Instrument::Geq => self.geq,
            Instrument::Imi => self.imi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRow {
    pub participant_id: String,
    pub condition: String,
    pub instrument: Instrument,
    pub items: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionnaireTable {
    pub rows: Vec<QuestionnaireRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscaleMean {
    pub participant_id: String,
    pub condition: String,
    pub instrument: Instrument,
    pub mean: f64,
    pub n_items: usize,
}

/// Parse `participant_id,condition,instrument,item_1..item_N`. Trailing item
/// cells may be blank when an instrument has fewer items than the widest one.
pub fn ingest_questionnaire(
    text: &str,
    scales: &QuestionnaireScales,
) -> Result<(QuestionnaireTable, Vec<SubscaleMean>), SessionError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["participant_id", "condition", "instrument"];
    if headers.len() < 4 || headers.iter().take(3).ne(expected) {
        return Err(SessionError::Row {
            row: 1,
            message: "header must be participant_id,condition,instrument,item_1..item_N".into(),
        });
    }
    for (i, name) in headers.iter().skip(3).enumerate() {
        if name != format!("item_{}", i + 1) {
            return Err(SessionError::Row {
                row: 1,
                message: format!("column {} should be item_{}, found {name:?}", i + 4, i + 1),
            });
        }
    }

    let mut table = QuestionnaireTable::default();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| SessionError::Row { row, message };
        if record.len() < 4 {
            return Err(row_err("expected at least one item score".into()));
        }
        let instrument: Instrument = record[2].parse().map_err(row_err)?;
        let bounds = scales.bounds(instrument);
        let mut items = Vec::new();
        let mut saw_blank = false;
        for (col, cell) in record.iter().enumerate().skip(3) {
            if cell.is_empty() {
                saw_blank = true;
                continue;
            }
            if saw_blank {
                return Err(row_err(format!("gap before column {}", col + 1)));
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| row_err(format!("item_{} is not a number: {cell:?}", col - 2)))?;
            if !(bounds.min..=bounds.max).contains(&value) {
                return Err(row_err(format!(
                    "item_{} = {value} outside {:?} scale {}..{}",
                    col - 2,
                    instrument,
                    bounds.min,
                    bounds.max
                )));
            }
            items.push(value);
        }
        if items.is_empty() {
            return Err(row_err("no item scores".into()));
        }
        table.rows.push(QuestionnaireRow {
            participant_id: record[0].to_string(),
            condition: record[1].to_string(),
            instrument,
            items,
        });
    }
    let means = subscale_means(&table);
    Ok((table, means))
}

/// Mean item score per (participant, condition, instrument), sorted by key.
pub fn subscale_means(table: &QuestionnaireTable) -> Vec<SubscaleMean> {
    let mut acc: BTreeMap<(&str, &str, Instrument), (f64, usize)> = BTreeMap::new();
    for r in &table.rows {
        let entry = acc
            .entry((&r.participant_id, &r.condition, r.instrument))
            .or_default();
        entry.0 += r.items.iter().sum::<f64>();
        entry.1 += r.items.len();
    }
    acc.into_iter()
        .map(|((p, c, instrument), (sum, n))| SubscaleMean {
            participant_id: p.to_string(),
            condition: c.to_string(),
            instrument,
            mean: sum / n as f64,
            n_items: n,
        })
        .collect()
}

/// Parse `t_ms,ch1,ch2,...` into a time-sorted series.
pub fn ingest_hbo(text: &str) -> Result<ChannelSeries, SessionError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t_ms" {
        return Err(SessionError::Row {
            row: 1,
            message: "header must be t_ms,<channel>,...".into(),
        });
    }
    let channels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut series = ChannelSeries {
        channels,
        t_ms: Vec::new(),
        values: Vec::new(),
    };
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let mut cells = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let value = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                SessionError::Cell {
                    row,
                    column: headers[col].to_string(),
                    message: if cell.is_empty() {
                        "blank cell".into()
                    } else {
                        format!("not a number: {cell:?}")
                    },
                }
            })?;
            cells.push(value);
        }
        let t = cells[0];
        if let Some(&prev) = series.t_ms.last() {
            if t <= prev {
                return Err(SessionError::Row {
                    row,
                    message: format!("time {t} ms does not increase (previous {prev} ms)"),
                });
            }
        }
        series.t_ms.push(t);
        series.values.push(cells[1..].to_vec());
    }
    Ok(series)
}
