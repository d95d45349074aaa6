//! Engagement reporting: a pure fold over the event log and inquiry table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use sensorlab_protocol::SensorType;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{check_order, EventKind, EventRecord, IngestError};
use crate::model::{ClassId, Inquiry, InquiryId, LineageKind, SourceClass, UserId};
use crate::repo::{MemoryRepository, Repository};
use crate::scoring::{ScoreCategory, ScoringEngine};
use crate::workflow::{ReplayError, Workflow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error(transparent)]
    Order(#[from] IngestError),
    #[error("inquiry {inquiry} derives from unknown inquiry {source_id}")]
    DanglingLineage { inquiry: InquiryId, source_id: InquiryId },
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// A share of a whole, in hundredths of a percent (6049 = 60.49%).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(pub u32);

impl Percent {
    /// `part / whole`, rounded half up to the nearest hundredth of a percent.
    pub fn of(part: usize, whole: usize) -> Percent {
        if whole == 0 {
            return Percent(0);
        }
        let (part, whole) = (part as u64, whole as u64);
        Percent(((part * 20_000 + whole) / (2 * whole)) as u32)
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}%", self.0 / 100, self.0 % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceShare {
    pub source: SourceClass,
    pub replications: usize,
    pub remixes: usize,
    pub total: usize,
    pub percent: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageBreakdown {
    pub total: usize,
    pub by_source: Vec<SourceShare>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorCount {
    pub sensor: SensorType,
    pub inquiries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: ScoreCategory,
    pub inquiries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekActivity {
    pub week_start: NaiveDate,
    pub sessions: usize,
    pub inquiries: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementReport {
    /// Student inquiries; exemplars are not counted anywhere below.
    pub total_inquiries: usize,
    /// Distinct users who created an inquiry from scratch.
    pub active_users: usize,
    pub published: usize,
    pub drafts: usize,
    pub replications: usize,
    pub remixes: usize,
    pub lineage: LineageBreakdown,
    pub sensor_usage: Vec<SensorCount>,
    pub score_distribution: Vec<CategoryCount>,
    pub weekly_activity: Vec<WeekActivity>,
}

impl EngagementReport {
    pub fn sensor_count(&self, sensor: SensorType) -> usize {
        self.sensor_usage.iter().find(|s| s.sensor == sensor).map_or(0, |s| s.inquiries)
    }

    pub fn category_count(&self, category: ScoreCategory) -> usize {
        self.score_distribution.iter().find(|c| c.category == category).map_or(0, |c| c.inquiries)
    }

    pub fn source_share(&self, source: SourceClass) -> Option<&SourceShare> {
        self.lineage.by_source.iter().find(|s| s.source == source)
    }

    /// The sensor with the fewest inquiries (first in declaration order on ties).
    pub fn least_used_sensor(&self) -> Option<SensorType> {
        self.sensor_usage.iter().min_by_key(|s| s.inquiries).map(|s| s.sensor)
    }
}

pub fn student_inquiries(inquiries: &[Inquiry]) -> impl Iterator<Item = &Inquiry> {
    inquiries.iter().filter(|i| !i.exemplar)
}

pub fn lineage_breakdown(inquiries: &[Inquiry]) -> Result<LineageBreakdown, ReportError> {
    let known: HashSet<InquiryId> = inquiries.iter().map(|i| i.id).collect();
    let mut counts: BTreeMap<SourceClass, (usize, usize)> = BTreeMap::new();
    for inquiry in student_inquiries(inquiries) {
        let Some(link) = inquiry.lineage else { continue };
        if !known.contains(&link.source_inquiry_id) {
            return Err(ReportError::DanglingLineage { inquiry: inquiry.id, source_id: link.source_inquiry_id });
        }
        let entry = counts.entry(link.source_class).or_default();
        match link.kind {
            LineageKind::Replication => entry.0 += 1,
            LineageKind::Remix => entry.1 += 1,
        }
    }
    let total = counts.values().map(|(r, m)| r + m).sum();
    if total == 0 {
        return Ok(LineageBreakdown { total, by_source: Vec::new() });
    }
    let by_source = SourceClass::ALL
        .iter()
        .map(|&source| {
            let (replications, remixes) = counts.get(&source).copied().unwrap_or_default();
            SourceShare {
                source,
                replications,
                remixes,
                total: replications + remixes,
                percent: Percent::of(replications + remixes, total),
            }
        })
        .collect();
    Ok(LineageBreakdown { total, by_source })
}

pub fn sensor_usage(inquiries: &[Inquiry]) -> Vec<SensorCount> {
    let mut counts: HashMap<SensorType, usize> = HashMap::new();
    for inquiry in student_inquiries(inquiries) {
        *counts.entry(inquiry.sensor_type).or_default() += 1;
    }
    SensorType::ALL
        .iter()
        .map(|&sensor| SensorCount { sensor, inquiries: counts.get(&sensor).copied().unwrap_or(0) })
        .collect()
}

pub fn score_distribution(inquiries: &[Inquiry], engine: &ScoringEngine) -> Vec<CategoryCount> {
    let mut counts: HashMap<ScoreCategory, usize> = HashMap::new();
    for inquiry in student_inquiries(inquiries) {
        *counts.entry(engine.score(inquiry).category).or_default() += 1;
    }
    ScoreCategory::ALL
        .iter()
        .map(|&category| CategoryCount { category, inquiries: counts.get(&category).copied().unwrap_or(0) })
        .collect()
}

/// Seven-day buckets starting at midnight UTC of the first event's day. Every
/// event lands in exactly one bucket; empty weeks in between are kept.
pub fn weekly_activity(events: &[EventRecord]) -> Result<Vec<WeekActivity>, IngestError> {
    check_order(events)?;
    let Some(first) = events.first() else { return Ok(Vec::new()) };
    let origin = first.timestamp.date_naive();
    let mut weeks: Vec<WeekActivity> = Vec::new();
    for event in events {
        let days = (event.timestamp.date_naive() - origin).num_days();
        let index = (days / 7) as usize;
        while weeks.len() <= index {
            let week_start = origin + Duration::days(7 * weeks.len() as i64);
            weeks.push(WeekActivity { week_start, sessions: 0, inquiries: 0, events: 0 });
        }
        let week = &mut weeks[index];
        week.events += 1;
        if event.kind == EventKind::SessionStart {
            week.sessions += 1;
        }
        if event.kind.creates_inquiry() {
            week.inquiries += 1;
        }
    }
    Ok(weeks)
}

/// Distinct authors of at least one `inquiry_created` event.
pub fn active_users(events: &[EventRecord]) -> usize {
    events.iter().filter(|e| e.kind == EventKind::InquiryCreated).map(|e| e.actor_id).collect::<HashSet<UserId>>().len()
}

pub fn compute_report(
    events: &[EventRecord],
    inquiries: &[Inquiry],
    engine: &ScoringEngine,
) -> Result<EngagementReport, ReportError> {
    let weekly_activity = weekly_activity(events)?;
    let lineage = lineage_breakdown(inquiries)?;
    let students: Vec<&Inquiry> = student_inquiries(inquiries).collect();
    let published = students.iter().filter(|i| i.is_published()).count();
    let count_kind =
        |kind: LineageKind| students.iter().filter(|i| i.lineage.is_some_and(|l| l.kind == kind)).count();
    Ok(EngagementReport {
        total_inquiries: students.len(),
        active_users: active_users(events),
        published,
        drafts: students.len() - published,
        replications: count_kind(LineageKind::Replication),
        remixes: count_kind(LineageKind::Remix),
        lineage,
        sensor_usage: sensor_usage(inquiries),
        score_distribution: score_distribution(inquiries, engine),
        weekly_activity,
    })
}

/// Rebuilds state from a log in memory and reports on it. This is how an
/// exported log is reported without a database.
pub fn report_from_log(events: &[EventRecord], engine: &ScoringEngine) -> Result<EngagementReport, ReportError> {
    check_order(events)?;
    let mut repo = MemoryRepository::new();
    Workflow::default().replay(&mut repo, events)?;
    let inquiries = repo.inquiries().expect("memory repository is infallible");
    compute_report(events, &inquiries, engine)
}

/// Narrows a log and inquiry set to one class: its inquiries, events about
/// them, events about the class itself, and sessions of its members.
pub fn scope_to_class(
    events: &[EventRecord],
    inquiries: &[Inquiry],
    class_id: ClassId,
    members: &HashSet<UserId>,
) -> (Vec<EventRecord>, Vec<Inquiry>) {
    let ids: HashSet<u64> = inquiries.iter().filter(|i| i.class_id == class_id).map(|i| i.id.0).collect();
    let scoped_events = events
        .iter()
        .filter(|e| match e.kind {
            EventKind::UserRegistered | EventKind::SessionStart => members.contains(&e.actor_id),
            EventKind::ClassCreated | EventKind::ClassCodeRegenerated | EventKind::ClassJoined => {
                e.subject_id == class_id.0
            }
            _ => ids.contains(&e.subject_id),
        })
        .cloned()
        .collect();
    // Keep lineage sources from other classes so links still resolve.
    let scoped: Vec<Inquiry> = inquiries.iter().filter(|i| i.class_id == class_id).cloned().collect();
    let sources: HashSet<InquiryId> = scoped.iter().filter_map(|i| i.lineage.map(|l| l.source_inquiry_id)).collect();
    let mut out = scoped;
    out.extend(
        inquiries
            .iter()
            .filter(|i| i.class_id != class_id && sources.contains(&i.id))
            .map(|i| Inquiry { exemplar: true, ..i.clone() }),
    );
    (scoped_events, out)
}

pub fn first_and_last(events: &[EventRecord]) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
    Some((events.first()?.timestamp, events.last()?.timestamp))
}

pub fn render_table(report: &EngagementReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Engagement report");
    let _ = writeln!(out, "  {:<32}{:>6}", "total inquiries", report.total_inquiries);
    let _ = writeln!(out, "  {:<32}{:>6}", "published", report.published);
    let _ = writeln!(out, "  {:<32}{:>6}", "drafts", report.drafts);
    let _ = writeln!(out, "  {:<32}{:>6}", "active users", report.active_users);
    let _ = writeln!(out, "  {:<32}{:>6}", "replications", report.replications);
    let _ = writeln!(out, "  {:<32}{:>6}", "remixes", report.remixes);
    let _ = writeln!(out);
    let _ = writeln!(out, "Sensor usage");
    for s in &report.sensor_usage {
        let _ = writeln!(out, "  {:<32}{:>6}", s.sensor.label(), s.inquiries);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Score distribution");
    for c in &report.score_distribution {
        let _ = writeln!(out, "  {:<32}{:>6}", c.category.to_string(), c.inquiries);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Lineage sources ({} derived inquiries)", report.lineage.total);
    for s in &report.lineage.by_source {
        let _ = writeln!(
            out,
            "  {:<16}{:>5} {:>8}   (replications {}, remixes {})",
            s.source.as_str(),
            s.total,
            s.percent.to_string(),
            s.replications,
            s.remixes
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Weekly activity");
    let _ = writeln!(out, "  {:<12}{:>9}{:>11}{:>8}", "week", "sessions", "inquiries", "events");
    for w in &report.weekly_activity {
        let _ = writeln!(out, "  {:<12}{:>9}{:>11}{:>8}", w.week_start.to_string(), w.sessions, w.inquiries, w.events);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(Percent::of(49, 81), Percent(6049));
        assert_eq!(Percent::of(24, 81), Percent(2963));
        assert_eq!(Percent::of(8, 81), Percent(988));
        assert_eq!(Percent::of(1, 8), Percent(1250));
        assert_eq!(Percent::of(1, 0), Percent(0));
        assert_eq!(Percent(988).to_string(), "9.88%");
    }
}
