//! Append-only JSON-Lines event log shared by telemetry, alarms and work orders.
//!
//! One event per line, tagged by `"t"`:
//!
//! ```text
//! {"t":"reading","ts":"2025-01-01T10:00:00Z","path":"library/.../illuminance","value":480.0,"unit":"lux"}
//! {"t":"context","ts":"...","lat":60.61,"lon":15.63,"oi":12000.0,"cc":0.4,"local":"...+01:00"}
//! {"t":"alarm","alarm":{...},"detected_at":"...","diagnosis":{...}}
//! {"t":"workorder","id":"CM-...","kind":"CM",...}
//! ```
//!
//! A work-order line carries the full order state after a mutation; replay keeps the last line
//! per id.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::health::{Alarm, DiagnosisResult};
use crate::telemetry::{ContextRecord, ParameterReading};
use crate::timefmt::{self, Timestamp};
use crate::workorder::WorkOrder;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub alarm: Alarm,
    #[serde(with = "timefmt")]
    pub detected_at: Timestamp,
    pub diagnosis: DiagnosisResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum LogEvent {
    Reading(ParameterReading),
    Context(ContextRecord),
    Alarm(AlarmRecord),
    WorkOrder(WorkOrder),
}

impl LogEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log events always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    /// Event time used for ordering a replay.
    pub fn ts(&self) -> Timestamp {
        match self {
            LogEvent::Reading(r) => r.ts,
            LogEvent::Context(c) => c.ts,
            LogEvent::Alarm(a) => a.detected_at,
            LogEvent::WorkOrder(o) => o.created_at,
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

/// Appending writer. Every append is flushed before returning.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl EventLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| LogError::Io { path: path.clone(), source })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| LogError::Io { path: path.clone(), source })?;
        Ok(Self { path, writer: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &LogEvent) -> Result<(), LogError> {
        self.append_all(std::slice::from_ref(event))
    }

    pub fn append_all(&mut self, events: &[LogEvent]) -> Result<(), LogError> {
        let io = |source| LogError::Io { path: self.path.clone(), source };
        for event in events {
            self.writer.write_all(event.to_line().as_bytes()).map_err(io)?;
            self.writer.write_all(b"\n").map_err(io)?;
        }
        self.writer.flush().map_err(io)
    }
}

/// Reads every event of a log file. A missing file is an empty log.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<LogEvent>, LogError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => return Err(LogError::Io { path: path.to_path_buf(), source }),
    };
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = LogEvent::from_line(&line).map_err(|e| LogError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Serializes events as JSON Lines.
pub fn write_jsonl<W: Write>(events: &[LogEvent], mut out: W) -> io::Result<()> {
    for event in events {
        out.write_all(event.to_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
