//! Inquiry workflow, rubric scoring, event log and engagement analytics for
//! the sensor lab platform.
//!
//! Storage is abstract: [`Repository`] is implemented in memory here and on
//! SQLite by the service.

pub mod analytics;
pub mod error;
pub mod event;
pub mod fixture;
pub mod model;
pub mod repo;
pub mod scoring;
pub mod workflow;

pub use analytics::{compute_report, EngagementReport, Percent, ReportError};
pub use error::{DomainError, StorageError};
pub use event::{read_log, write_log, EventKind, EventRecord, LogError};
pub use model::*;
pub use repo::{CodeLookup, DiscoverQuery, FeedCursor, IdKind, MemoryRepository, Repository};
pub use scoring::{CueConfig, InquiryScore, ScoreCategory, ScoringEngine};
pub use workflow::{Applied, Capture, ReplayError, Workflow};
