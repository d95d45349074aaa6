//! Domain values of the inquiry workflow.

use std::fmt;

use chrono::{DateTime, Utc};
use sensorlab_protocol::{Measurement, SensorType};
use serde::{Deserialize, Serialize};

use crate::scoring::ScoreCategory;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(UserId);
id_type!(ClassId);
id_type!(InquiryId);
id_type!(CommentId);

/// Text length caps. Defaults: title 120, slot label 80, comment 500.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub title: usize,
    pub label: usize,
    pub comment: usize,
    pub class_name: usize,
    pub username: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { title: 120, label: 80, comment: 500, class_name: 120, username: 40 }
    }
}

pub const MAX_SLOTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
}

/// A login identity. Holds no personal data: just a generic handle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub id: UserId,
    pub username: String,
    pub role: Role,
    pub class_ids: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGroup {
    pub id: ClassId,
    pub name: String,
    pub join_code: JoinCode,
    pub teacher_id: UserId,
    pub created_at: DateTime<Utc>,
}

/// Six uppercase alphanumeric characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct JoinCode(String);

impl JoinCode {
    pub const LEN: usize = 6;
    const ALPHABET: &'static [u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

    pub fn parse(text: &str) -> Option<Self> {
        let valid = text.len() == Self::LEN
            && text.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit());
        valid.then(|| JoinCode(text.to_string()))
    }

    pub fn random(rng: &mut impl rand::Rng) -> Self {
        let code = (0..Self::LEN)
            .map(|_| Self::ALPHABET[rng.random_range(0..Self::ALPHABET.len())] as char)
            .collect();
        JoinCode(code)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for JoinCode {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        JoinCode::parse(&value).ok_or_else(|| format!("invalid join code `{value}`"))
    }
}

impl From<JoinCode> for String {
    fn from(code: JoinCode) -> String {
        code.0
    }
}

impl fmt::Display for JoinCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub user_id: UserId,
    pub class_id: ClassId,
}

/// Content-addressed handle of an uploaded photo (hex SHA-256).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhotoRef(String);

impl PhotoRef {
    pub fn parse(text: &str) -> Option<Self> {
        let valid = text.len() == 64 && text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        valid.then(|| PhotoRef(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PhotoRef {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        PhotoRef::parse(&value).ok_or_else(|| format!("invalid photo id `{value}`"))
    }
}

impl From<PhotoRef> for String {
    fn from(p: PhotoRef) -> String {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureSlot {
    pub index: u8,
    pub measurement: Measurement,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub photo_ref: Option<PhotoRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InquiryStatus {
    Draft,
    Published,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineageKind {
    Replication,
    Remix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceClass {
    OtherStudent,
    Exemplar,
    Own,
}

impl SourceClass {
    pub const ALL: [SourceClass; 3] = [SourceClass::OtherStudent, SourceClass::Exemplar, SourceClass::Own];

    /// Exemplar flag wins; otherwise compare the source author with the caller.
    pub fn classify(source_author: UserId, caller: UserId, source_is_exemplar: bool) -> Self {
        if source_is_exemplar {
            SourceClass::Exemplar
        } else if source_author == caller {
            SourceClass::Own
        } else {
            SourceClass::OtherStudent
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceClass::OtherStudent => "other-student",
            SourceClass::Exemplar => "exemplar",
            SourceClass::Own => "own",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageLink {
    pub kind: LineageKind,
    pub source_inquiry_id: InquiryId,
    pub source_class: SourceClass,
}

/// A coder's manual re-scoring, kept with its audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOverride {
    pub category: ScoreCategory,
    pub reason: String,
    pub by: UserId,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inquiry {
    pub id: InquiryId,
    pub author_id: UserId,
    pub class_id: ClassId,
    pub sensor_type: SensorType,
    pub title: String,
    pub description: String,
    pub notes: String,
    pub slots: Vec<CaptureSlot>,
    pub status: InquiryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<LineageLink>,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_score_override: Option<ScoreOverride>,
    /// Researcher-authored model inquiry; always published, never counted as
    /// student work.
    #[serde(default)]
    pub exemplar: bool,
}

impl Inquiry {
    pub fn is_published(&self) -> bool {
        self.status == InquiryStatus::Published
    }

    /// Drafts are private to their author; published inquiries and exemplars
    /// are visible to everyone signed in.
    pub fn visible_to(&self, viewer: UserId) -> bool {
        self.is_published() || self.author_id == viewer
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: CommentId,
    pub inquiry_id: InquiryId,
    pub author_id: UserId,
    pub body: String,
    pub created_at: DateTime<Utc>,
}
