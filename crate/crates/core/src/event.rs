//! The append-only event log.
//!
//! Every successful write appends one [`EventRecord`]. Records carry enough
//! payload to be re-applied, so replaying a log into an empty repository
//! rebuilds the same state. The export format is newline-delimited JSON, one
//! record per line.

use std::io::{self, BufRead, Write};

use chrono::{DateTime, Utc};
use sensorlab_protocol::SensorType;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::model::{CaptureSlot, ClassId, CommentId, JoinCode, Role, UserId};
use crate::scoring::ScoreCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserRegistered,
    SessionStart,
    ClassCreated,
    ClassCodeRegenerated,
    ClassJoined,
    InquiryCreated,
    InquiryEdited,
    DataCaptured,
    Published,
    Comment,
    Replication,
    Remix,
    ExemplarSeeded,
    ScoreOverridden,
}

impl EventKind {
    /// Kinds that bring a new student inquiry into existence.
    pub fn creates_inquiry(self) -> bool {
        matches!(self, EventKind::InquiryCreated | EventKind::Replication | EventKind::Remix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: DateTime<Utc>,
    pub actor_id: UserId,
    pub kind: EventKind,
    /// Id of the user, class or inquiry the event is about.
    pub subject_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_type: Option<SensorType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
}

impl EventRecord {
    pub fn new(timestamp: DateTime<Utc>, actor_id: UserId, kind: EventKind, subject_id: u64) -> Self {
        EventRecord { timestamp, actor_id, kind, subject_id, sensor_type: None, payload: None }
    }

    pub fn with_sensor(mut self, sensor_type: SensorType) -> Self {
        self.sensor_type = Some(sensor_type);
        self
    }

    pub fn with_payload(mut self, payload: &impl Serialize) -> Self {
        self.payload = Some(serde_json::to_value(payload).expect("payload types serialize"));
        self
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, DomainError> {
        let value = self
            .payload
            .clone()
            .ok_or_else(|| DomainError::Integrity(format!("{:?} event without payload", self.kind)))?;
        serde_json::from_value(value)
            .map_err(|e| DomainError::Integrity(format!("{:?} payload: {e}", self.kind)))
    }
}

pub mod payload {
    use super::*;
    use crate::model::{InquiryId, PhotoRef};
    use sensorlab_protocol::Measurement;

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct UserRegistered {
        pub username: String,
        pub role: Role,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ClassCreated {
        pub name: String,
        pub join_code: JoinCode,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ClassCodeRegenerated {
        pub join_code: JoinCode,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct InquiryText {
        pub title: String,
        #[serde(default)]
        pub description: String,
        #[serde(default)]
        pub notes: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct InquiryCreated {
        pub class_id: ClassId,
        #[serde(flatten)]
        pub text: InquiryText,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct DataCaptured {
        pub slot: CaptureSlot,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct CommentPosted {
        pub comment_id: CommentId,
        pub body: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct LineageCreated {
        pub source_id: InquiryId,
        pub class_id: ClassId,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ExemplarCapture {
        pub measurement: Measurement,
        pub label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub photo_ref: Option<PhotoRef>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ExemplarSeeded {
        pub class_id: ClassId,
        #[serde(flatten)]
        pub text: InquiryText,
        pub captures: Vec<ExemplarCapture>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ScoreOverridden {
        pub category: ScoreCategory,
        pub reason: String,
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: malformed record: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LogError {
    pub fn line(&self) -> Option<usize> {
        match self {
            LogError::Malformed { line, .. } => Some(*line),
            LogError::Ingest(e) => Some(e.index + 1),
            LogError::Io(_) => None,
        }
    }
}

/// A record whose timestamp precedes the one before it.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("record {} ({:?} at {}) is earlier than its predecessor ({})", .index + 1, .kind, .timestamp, .previous)]
pub struct IngestError {
    /// Zero-based position in the log.
    pub index: usize,
    pub kind: EventKind,
    pub timestamp: DateTime<Utc>,
    pub previous: DateTime<Utc>,
}

pub fn check_order(events: &[EventRecord]) -> Result<(), IngestError> {
    for (index, pair) in events.windows(2).enumerate() {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(IngestError {
                index: index + 1,
                kind: pair[1].kind,
                timestamp: pair[1].timestamp,
                previous: pair[0].timestamp,
            });
        }
    }
    Ok(())
}

/// Reads a newline-delimited log, skipping blank lines. Line numbers in
/// errors are 1-based.
pub fn read_log(reader: impl BufRead) -> Result<Vec<EventRecord>, LogError> {
    let mut events = Vec::new();
    let mut previous: Option<DateTime<Utc>> = None;
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|source| LogError::Malformed { line: index + 1, source })?;
        if let Some(prev) = previous {
            if record.timestamp < prev {
                return Err(IngestError { index, kind: record.kind, timestamp: record.timestamp, previous: prev }.into());
            }
        }
        previous = Some(record.timestamp);
        events.push(record);
    }
    Ok(events)
}

pub fn write_log<'a>(mut writer: impl Write, events: impl IntoIterator<Item = &'a EventRecord>) -> io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
