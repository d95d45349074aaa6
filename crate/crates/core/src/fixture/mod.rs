//! Deterministic generator for the bundled engagement corpus.
//!
//! The generator plans a school deployment (classes, students, inquiries,
//! replications, remixes, comments) to fixed headline counts, then performs
//! every action through [`Workflow`] against an in-memory repository. The
//! resulting event log is therefore valid input for replay by construction.
//! Inquiry text is authored per rubric category and checked against the
//! scoring engine before anything is returned.

mod text;

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, Utc, Weekday};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorlab_protocol::{Centi, Measurement, SensorType};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::DomainError;
use crate::event::EventRecord;
use crate::model::{ClassId, InquiryId, LineageKind, Role, SourceClass, UserId};
use crate::repo::{MemoryRepository, Repository};
use crate::scoring::{ScoreCategory, ScoringEngine};
use crate::workflow::{Capture, Workflow};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorTarget {
    pub sensor: SensorType,
    pub inquiries: usize,
    /// Chosen for the corpus rather than taken from observed usage.
    pub synthetic: bool,
    /// Every inquiry with this sensor gets published, so the discover feed
    /// for it lists the full count.
    #[serde(default)]
    pub all_published: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTarget {
    pub category: ScoreCategory,
    pub inquiries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageTarget {
    pub kind: LineageKind,
    pub source: SourceClass,
    pub inquiries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub lockdown_start: NaiveDate,
    pub lockdown_end: NaiveDate,
    /// Relative activity on school days inside the lockdown window.
    pub lockdown_activity: f64,
    pub classes: usize,
    pub active_students: usize,
    /// Students who join a class but never create an inquiry.
    pub inactive_students: usize,
    pub published: usize,
    /// Units of each sensor type in one class kit.
    pub class_kit_per_type: usize,
    pub sensors: Vec<SensorTarget>,
    pub scores: Vec<CategoryTarget>,
    pub lineage: Vec<LineageTarget>,
    /// Number of classes that produce most replications and remixes.
    pub lineage_classes: usize,
    pub lineage_in_those_classes: usize,
    pub informed_in_one_class: usize,
    pub comment_rate: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        let date = |m, d| NaiveDate::from_ymd_opt(2021, m, d).expect("valid date");
        let sensor = |sensor, inquiries, synthetic| SensorTarget { sensor, inquiries, synthetic, all_published: false };
        let score = |category, inquiries| CategoryTarget { category, inquiries };
        let lineage = |kind, source, inquiries| LineageTarget { kind, source, inquiries };
        FixtureConfig {
            seed: 2021,
            start: date(6, 1),
            end: date(12, 10),
            lockdown_start: date(8, 23),
            lockdown_end: date(11, 12),
            lockdown_activity: 0.06,
            classes: 30,
            active_students: 409,
            inactive_students: 37,
            published: 988,
            class_kit_per_type: 20,
            sensors: vec![
                SensorTarget { all_published: true, ..sensor(SensorType::HeartRate, 336, false) },
                sensor(SensorType::TempHumidity, 275, false),
                sensor(SensorType::Conductance, 250, true),
                sensor(SensorType::LightUv, 220, true),
                sensor(SensorType::BodyTemp, 180, true),
                sensor(SensorType::Voc, 75, true),
            ],
            scores: vec![
                score(ScoreCategory::Null, 240),
                score(ScoreCategory::Naive, 820),
                score(ScoreCategory::Emerging, 263),
                score(ScoreCategory::Informed, 13),
            ],
            lineage: vec![
                lineage(LineageKind::Replication, SourceClass::OtherStudent, 44),
                lineage(LineageKind::Replication, SourceClass::Exemplar, 22),
                lineage(LineageKind::Replication, SourceClass::Own, 8),
                lineage(LineageKind::Remix, SourceClass::OtherStudent, 5),
                lineage(LineageKind::Remix, SourceClass::Exemplar, 2),
            ],
            lineage_classes: 4,
            lineage_in_those_classes: 71,
            informed_in_one_class: 6,
            comment_rate: 0.25,
        }
    }
}

impl FixtureConfig {
    pub fn total_inquiries(&self) -> usize {
        self.sensors.iter().map(|s| s.inquiries).sum()
    }

    pub fn derived(&self) -> usize {
        self.lineage.iter().map(|l| l.inquiries).sum()
    }

    fn check(&self) -> Result<(), FixtureError> {
        let total = self.total_inquiries();
        let scored: usize = self.scores.iter().map(|s| s.inquiries).sum();
        let bad = |why: &str| Err(FixtureError::Config(why.to_string()));
        if scored != total {
            return bad("score targets must add up to the sensor targets");
        }
        if self.published > total {
            return bad("more published inquiries than inquiries");
        }
        let always: usize = self.sensors.iter().filter(|s| s.all_published).map(|s| s.inquiries).sum();
        if always > self.published {
            return bad("sensors marked all_published exceed the published target");
        }
        if total < self.derived() + self.active_students {
            return bad("every active student needs at least one original inquiry");
        }
        if self.classes < self.lineage_classes + 1 || self.active_students < 2 * self.classes {
            return bad("too few classes or students");
        }
        if self.lineage_in_those_classes > self.derived() {
            return bad("lineage concentration exceeds lineage total");
        }
        if self.start >= self.end || self.lockdown_start > self.lockdown_end {
            return bad("date ranges are inverted");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture config: {0}")]
    Config(String),
    #[error("fixture step rejected: {0}")]
    Rejected(#[from] DomainError),
    #[error("inquiry {id} was authored as {authored} but scores {scored}")]
    LabelMismatch { id: InquiryId, authored: ScoreCategory, scored: ScoreCategory },
}

/// A generated corpus: the event log, the per-inquiry authored rubric labels
/// and the repository state the log produces.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub events: Vec<EventRecord>,
    pub labels: Vec<(InquiryId, ScoreCategory)>,
    pub repo: MemoryRepository,
}

#[derive(Serialize)]
struct Manifest<'a> {
    description: &'static str,
    corpus: &'static str,
    labels: &'static str,
    #[serde(flatten)]
    config: &'a FixtureConfig,
}

pub const CORPUS_FILE: &str = "corpus.ndjson";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// The `fixtures/` directory of this source tree.
pub fn source_tree_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

impl Fixture {
    pub fn corpus_ndjson(&self) -> String {
        let mut buf = Vec::new();
        crate::event::write_log(&mut buf, &self.events).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn labels_csv(&self) -> String {
        let mut out = String::from("inquiry_id,category\n");
        for (id, category) in &self.labels {
            out.push_str(&format!("{id},{}\n", category.as_str()));
        }
        out
    }

    pub fn manifest_toml(&self) -> String {
        let manifest = Manifest {
            description: "Synthetic classroom deployment, June to December, with a lockdown trough in activity.",
            corpus: CORPUS_FILE,
            labels: LABELS_FILE,
            config: &self.config,
        };
        toml::to_string(&manifest).expect("manifest serializes")
    }
}

/// Parses `labels.csv` as written by [`Fixture::labels_csv`].
pub fn parse_labels(text: &str) -> Result<Vec<(InquiryId, ScoreCategory)>, String> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, category) = line.split_once(',').ok_or_else(|| format!("line {}: expected two fields", index + 1))?;
        let id = id.trim().parse().map_err(|_| format!("line {}: bad inquiry id", index + 1))?;
        let category = category.trim().parse().map_err(|e| format!("line {}: {e}", index + 1))?;
        out.push((InquiryId(id), category));
    }
    Ok(out)
}

// ---- planning --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Created,
    Derived { kind: LineageKind, source: Source },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Plan(usize),
    Exemplar(SensorType),
}

#[derive(Debug, Clone)]
struct PlannedInquiry {
    author: usize,
    class: usize,
    at: DateTime<Utc>,
    origin: Origin,
    sensor: Option<SensorType>,
    published: bool,
    category: Option<ScoreCategory>,
}

#[derive(Debug, Clone)]
struct PlannedClass {
    opens: NaiveDate,
    students: Vec<usize>,
    active: Vec<usize>,
}

struct Calendar {
    days: Vec<(NaiveDate, f64)>,
}

impl Calendar {
    fn new(config: &FixtureConfig) -> Self {
        let mut days = Vec::new();
        let mut day = config.start;
        while day <= config.end {
            if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
                let lockdown = day >= config.lockdown_start && day <= config.lockdown_end;
                days.push((day, if lockdown { config.lockdown_activity } else { 1.0 }));
            }
            day += Duration::days(1);
        }
        Calendar { days }
    }

    fn school_days_from(&self, from: NaiveDate) -> &[(NaiveDate, f64)] {
        let first = self.days.partition_point(|(d, _)| *d < from);
        &self.days[first.min(self.days.len() - 1)..]
    }

    fn sample_day(&self, from: NaiveDate, rng: &mut impl Rng) -> NaiveDate {
        self.school_days_from(from).choose_weighted(rng, |(_, w)| *w).expect("weights are positive").0
    }

    fn sample(&self, from: NaiveDate, rng: &mut impl Rng) -> DateTime<Utc> {
        lesson_time(self.sample_day(from, rng), rng)
    }
}

fn lesson_time(day: NaiveDate, rng: &mut impl Rng) -> DateTime<Utc> {
    let secs = rng.random_range(9 * 3600..15 * 3600);
    day.and_time(NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("in range")).and_utc()
}

fn at(day: NaiveDate, hour: u32, minute: u32) -> DateTime<Utc> {
    day.and_hms_opt(hour, minute, 0).expect("valid time").and_utc()
}

struct Plan {
    classes: Vec<PlannedClass>,
    students: usize,
    inquiries: Vec<PlannedInquiry>,
}

fn plan(config: &FixtureConfig, calendar: &Calendar, rng: &mut ChaCha8Rng) -> Plan {
    // Classes open over the first seven weeks of the period.
    let opening_days: Vec<NaiveDate> = calendar.school_days_from(config.start).iter().take(35).map(|(d, _)| *d).collect();
    let mut opens: Vec<NaiveDate> = (0..config.classes).map(|_| *opening_days.choose(rng).expect("days")).collect();
    opens.sort();
    let mut classes: Vec<PlannedClass> =
        opens.into_iter().map(|opens| PlannedClass { opens, students: Vec::new(), active: Vec::new() }).collect();

    // Students: every class gets at least two active members.
    let mut student = 0;
    for c in 0..config.classes {
        for _ in 0..2 {
            classes[c].students.push(student);
            classes[c].active.push(student);
            student += 1;
        }
    }
    while student < config.active_students {
        let c = rng.random_range(0..config.classes);
        classes[c].students.push(student);
        classes[c].active.push(student);
        student += 1;
    }
    while student < config.active_students + config.inactive_students {
        classes[rng.random_range(0..config.classes)].students.push(student);
        student += 1;
    }
    let class_of: BTreeMap<usize, usize> =
        classes.iter().enumerate().flat_map(|(c, pc)| pc.students.iter().map(move |&s| (s, c))).collect();

    // Original inquiries: one per active student, the rest to a prolific few.
    let created = config.total_inquiries() - config.derived();
    let mut authors: Vec<usize> = (0..config.active_students).collect();
    let weights: Vec<f64> = (0..config.active_students).map(|_| rng.random_range(0.2f64..1.0).powi(3)).collect();
    let extra = rand::distr::weighted::WeightedIndex::new(&weights).expect("positive weights");
    while authors.len() < created {
        authors.push(rng.sample(&extra));
    }
    let mut inquiries: Vec<PlannedInquiry> = authors
        .into_iter()
        .map(|author| {
            let class = class_of[&author];
            PlannedInquiry {
                author,
                class,
                at: calendar.sample(classes[class].opens, rng),
                origin: Origin::Created,
                sensor: None,
                published: false,
                category: None,
            }
        })
        .collect();

    // Replications and remixes, concentrated in a few early classes.
    let mut kinds: Vec<(LineageKind, SourceClass)> = config
        .lineage
        .iter()
        .flat_map(|t| std::iter::repeat_n((t.kind, t.source), t.inquiries))
        .collect();
    kinds.shuffle(rng);
    let mut early: Vec<usize> = (0..config.classes.min(10)).collect();
    early.shuffle(rng);
    let focus: Vec<usize> = early[..config.lineage_classes].to_vec();
    let others: Vec<usize> = (0..config.classes).filter(|c| !focus.contains(c)).collect();
    let exemplar_weights: Vec<(SensorType, usize)> = config.sensors.iter().map(|s| (s.sensor, s.inquiries)).collect();
    let end = at(config.end, 23, 59);
    for (n, (kind, source_class)) in kinds.into_iter().enumerate() {
        let class = if n < config.lineage_in_those_classes {
            focus[n % focus.len()]
        } else {
            *others.choose(rng).expect("other classes")
        };
        let originals: Vec<usize> = (0..created).filter(|&i| inquiries[i].class == class).collect();
        let after = |t: DateTime<Utc>, rng: &mut ChaCha8Rng, days: i64| {
            (t + Duration::hours(1) + Duration::minutes(rng.random_range(0..days * 24 * 60))).min(end)
        };
        let (author, at_time, source) = match source_class {
            SourceClass::Own => {
                let src = *originals.choose(rng).expect("class has inquiries");
                (inquiries[src].author, after(inquiries[src].at, rng, 10), Source::Plan(src))
            }
            SourceClass::OtherStudent => {
                let src = *originals.choose(rng).expect("class has inquiries");
                let peers: Vec<usize> =
                    classes[class].active.iter().copied().filter(|&s| s != inquiries[src].author).collect();
                (*peers.choose(rng).expect("two active per class"), after(inquiries[src].at, rng, 14), Source::Plan(src))
            }
            SourceClass::Exemplar => {
                let sensor = exemplar_weights.choose_weighted(rng, |(_, w)| *w).expect("weights").0;
                let author = *classes[class].active.choose(rng).expect("active students");
                let from = classes[class].opens + Duration::days(7);
                (author, calendar.sample(from, rng), Source::Exemplar(sensor))
            }
        };
        inquiries.push(PlannedInquiry {
            author,
            class,
            at: at_time,
            origin: Origin::Derived { kind, source },
            sensor: None,
            published: false,
            category: None,
        });
    }

    assign_sensors(config, &mut inquiries, rng);
    assign_published(config, &mut inquiries, rng);
    assign_categories(config, &mut inquiries, &classes, rng);
    Plan { classes, students: config.active_students + config.inactive_students, inquiries }
}

/// Derived inquiries share their source's sensor, so sources and their
/// derivatives are placed as groups before singles fill the remainder.
fn assign_sensors(config: &FixtureConfig, inquiries: &mut [PlannedInquiry], rng: &mut ChaCha8Rng) {
    let mut remaining: BTreeMap<SensorType, usize> = config.sensors.iter().map(|s| (s.sensor, s.inquiries)).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, planned) in inquiries.iter_mut().enumerate() {
        match planned.origin {
            Origin::Created => groups.entry(i).or_default().push(i),
            Origin::Derived { source: Source::Plan(src), .. } => groups.entry(src).or_default().push(i),
            Origin::Derived { source: Source::Exemplar(sensor), .. } => {
                planned.sensor = Some(sensor);
                *remaining.get_mut(&sensor).expect("known sensor") -= 1;
            }
        }
    }
    let mut ordered: Vec<Vec<usize>> = groups.into_values().collect();
    ordered.shuffle(rng);
    ordered.sort_by_key(|g| std::cmp::Reverse(g.len()));
    for group in ordered {
        let fits: Vec<(SensorType, usize)> =
            remaining.iter().filter(|(_, &left)| left >= group.len()).map(|(&s, &left)| (s, left)).collect();
        let sensor = fits.choose_weighted(rng, |(_, left)| *left).expect("a sensor has room").0;
        *remaining.get_mut(&sensor).expect("known sensor") -= group.len();
        for i in group {
            inquiries[i].sensor = Some(sensor);
        }
    }
}

fn assign_published(config: &FixtureConfig, inquiries: &mut [PlannedInquiry], rng: &mut ChaCha8Rng) {
    for i in 0..inquiries.len() {
        if let Origin::Derived { source: Source::Plan(src), .. } = inquiries[i].origin {
            inquiries[src].published = true;
        }
    }
    let always: Vec<SensorType> = config.sensors.iter().filter(|s| s.all_published).map(|s| s.sensor).collect();
    for planned in inquiries.iter_mut() {
        if planned.sensor.is_some_and(|s| always.contains(&s)) {
            planned.published = true;
        }
    }
    let forced = inquiries.iter().filter(|p| p.published).count();
    let mut open: Vec<usize> = (0..inquiries.len()).filter(|&i| !inquiries[i].published).collect();
    open.shuffle(rng);
    for &i in open.iter().take(config.published - forced) {
        inquiries[i].published = true;
    }
}

fn assign_categories(
    config: &FixtureConfig,
    inquiries: &mut [PlannedInquiry],
    classes: &[PlannedClass],
    rng: &mut ChaCha8Rng,
) {
    let informed = config.scores.iter().find(|s| s.category == ScoreCategory::Informed).map_or(0, |s| s.inquiries);
    // The class with the most original inquiries hosts the cluster of
    // well-written ones.
    let star = (0..classes.len())
        .max_by_key(|&c| inquiries.iter().filter(|p| p.class == c && p.origin == Origin::Created).count())
        .expect("classes");
    let mut in_star: Vec<usize> =
        (0..inquiries.len()).filter(|&i| inquiries[i].class == star && inquiries[i].origin == Origin::Created).collect();
    let mut elsewhere: Vec<usize> = (0..inquiries.len()).filter(|&i| inquiries[i].class != star).collect();
    in_star.shuffle(rng);
    elsewhere.shuffle(rng);
    let clustered = config.informed_in_one_class.min(informed);
    for &i in in_star.iter().take(clustered).chain(elsewhere.iter().take(informed - clustered)) {
        inquiries[i].category = Some(ScoreCategory::Informed);
    }
    let mut rest: Vec<ScoreCategory> = config
        .scores
        .iter()
        .filter(|s| s.category != ScoreCategory::Informed)
        .flat_map(|s| std::iter::repeat_n(s.category, s.inquiries))
        .collect();
    rest.shuffle(rng);
    for p in inquiries.iter_mut().filter(|p| p.category.is_none()) {
        p.category = rest.pop();
    }
}

// ---- execution -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    OpenClass(usize),
    Enrol(usize, usize),
    RegenerateCode(usize),
    Inquiry(usize),
    Comment(usize, usize),
}

struct Runner<'a> {
    workflow: Workflow,
    repo: MemoryRepository,
    rng: ChaCha8Rng,
    plan: &'a Plan,
    teachers: Vec<UserId>,
    class_ids: Vec<ClassId>,
    students: BTreeMap<usize, UserId>,
    inquiry_ids: BTreeMap<usize, InquiryId>,
    exemplars: BTreeMap<SensorType, InquiryId>,
    last_session: BTreeMap<UserId, NaiveDate>,
}

impl Runner<'_> {
    fn session(&mut self, user: UserId, when: DateTime<Utc>) -> Result<(), DomainError> {
        let day = when.date_naive();
        if self.last_session.get(&user) != Some(&day) {
            self.workflow.start_session(&mut self.repo, user, when)?;
            self.last_session.insert(user, day);
        }
        Ok(())
    }

    fn measurement(&mut self, sensor: SensorType, timestamp_ms: u32) -> Measurement {
        let ranges: &[(i32, i32)] = match sensor {
            SensorType::HeartRate => &[(60, 150)],
            SensorType::TempHumidity => &[(12, 32), (30, 80)],
            SensorType::LightUv => &[(50, 60_000), (0, 9)],
            SensorType::Voc => &[(50, 3000)],
            SensorType::Conductance => &[(0, 900)],
            SensorType::BodyTemp => &[(1400, 1800)],
        };
        let values = ranges.iter().map(|&(lo, hi)| Centi(self.rng.random_range(lo * 100..=hi * 100))).collect();
        Measurement { sensor_type: sensor, timestamp_ms, values }
    }

    fn captures(&mut self, sensor: SensorType, labels: &[String]) -> Vec<Capture> {
        let mut ts = self.rng.random_range(1_000..5_000u32);
        labels
            .iter()
            .map(|label| {
                ts += self.rng.random_range(2_000..60_000);
                Capture { measurement: self.measurement(sensor, ts), label: label.clone(), photo_ref: None }
            })
            .collect()
    }

    fn run(&mut self, step: Step, when: DateTime<Utc>) -> Result<(), DomainError> {
        match step {
            Step::OpenClass(c) => {
                let teacher =
                    self.workflow.register(&mut self.repo, &format!("teacher{:02}", c + 1), Role::Teacher, when)?;
                self.session(teacher.id, when)?;
                let class = self.workflow.create_class(
                    &mut self.repo,
                    teacher.id,
                    &format!("Class {}", c + 1),
                    &mut self.rng,
                    when,
                )?;
                self.teachers.push(teacher.id);
                self.class_ids.push(class.id);
            }
            Step::Enrol(c, s) => {
                let user =
                    self.workflow.register(&mut self.repo, &format!("student{:04}", s + 1), Role::Student, when)?;
                self.session(user.id, when)?;
                let code = self.repo.class(self.class_ids[c])?.expect("class exists").join_code;
                self.workflow.join_class(&mut self.repo, user.id, code.as_str(), when)?;
                self.students.insert(s, user.id);
            }
            Step::RegenerateCode(c) => {
                self.session(self.teachers[c], when)?;
                self.workflow.regenerate_code(&mut self.repo, self.teachers[c], self.class_ids[c], &mut self.rng, when)?;
            }
            Step::Inquiry(i) => self.inquiry(i, when)?,
            Step::Comment(i, s) => {
                let user = self.students[&s];
                self.session(user, when)?;
                let body = *text::COMMENTS.choose(&mut self.rng).expect("comments");
                self.workflow.comment(&mut self.repo, user, self.inquiry_ids[&i], body, when)?;
            }
        }
        Ok(())
    }

    fn inquiry(&mut self, i: usize, when: DateTime<Utc>) -> Result<(), DomainError> {
        let planned = &self.plan.inquiries[i];
        let author = self.students[&planned.author];
        let class = self.class_ids[planned.class];
        let sensor = planned.sensor.expect("sensor assigned");
        let category = planned.category.expect("category assigned");
        let published = planned.published;
        let origin = planned.origin;
        self.session(self.teachers[planned.class], when)?;
        self.session(author, when)?;
        let mut authored = text::author(sensor, category, usize::from(published), &mut self.rng);
        let mut clock = when;
        let mut tick = |rng: &mut ChaCha8Rng| {
            clock += Duration::seconds(rng.random_range(30..240));
            clock
        };
        let id = match origin {
            Origin::Created => {
                let staged = self.rng.random_bool(0.3);
                let first = if staged {
                    crate::event::payload::InquiryText {
                        title: authored.text.title.clone(),
                        description: String::new(),
                        notes: String::new(),
                    }
                } else {
                    authored.text.clone()
                };
                let inquiry =
                    self.workflow.create_inquiry(&mut self.repo, author, Some(class), sensor, first, when)?;
                if staged {
                    let t = tick(&mut self.rng);
                    self.workflow.edit_inquiry(&mut self.repo, author, inquiry.id, authored.text.clone(), t)?;
                }
                inquiry.id
            }
            Origin::Derived { kind, source } => {
                let source_id = match source {
                    Source::Plan(src) => self.inquiry_ids[&src],
                    Source::Exemplar(sensor) => self.exemplars[&sensor],
                };
                let derived = self.workflow.derive(&mut self.repo, author, source_id, kind, Some(class), when)?;
                if kind == LineageKind::Remix && !authored.text.title.is_empty() {
                    authored.text.title = derived.title.clone();
                }
                let t = tick(&mut self.rng);
                self.workflow.edit_inquiry(&mut self.repo, author, derived.id, authored.text.clone(), t)?;
                derived.id
            }
        };
        for capture in self.captures(sensor, &authored.labels) {
            let t = tick(&mut self.rng);
            self.workflow.capture(&mut self.repo, author, id, capture, t)?;
        }
        if published {
            let t = tick(&mut self.rng);
            self.workflow.publish(&mut self.repo, author, id, t)?;
        }
        self.inquiry_ids.insert(i, id);
        Ok(())
    }
}

/// Builds the corpus described by `config`. Same config, same bytes.
pub fn generate(config: &FixtureConfig) -> Result<Fixture, FixtureError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let calendar = Calendar::new(config);
    let plan = plan(config, &calendar, &mut rng);

    let mut schedule: Vec<(DateTime<Utc>, Step)> = Vec::new();
    for (c, class) in plan.classes.iter().enumerate() {
        schedule.push((at(class.opens, 8, 30), Step::OpenClass(c)));
        for (n, &s) in class.students.iter().enumerate() {
            schedule.push((at(class.opens, 9, 0) + Duration::seconds(20 * n as i64), Step::Enrol(c, s)));
        }
        if c % 10 == 4 {
            schedule.push((at(class.opens + Duration::days(7), 8, 0), Step::RegenerateCode(c)));
        }
    }
    let end = at(config.end, 23, 59);
    for (i, planned) in plan.inquiries.iter().enumerate() {
        schedule.push((planned.at, Step::Inquiry(i)));
        if planned.published && rng.random_bool(config.comment_rate) {
            let classmates = &plan.classes[planned.class].students;
            for _ in 0..rng.random_range(1..=2) {
                let commenter = *classmates.choose(&mut rng).expect("class members");
                let when = (planned.at + Duration::hours(1) + Duration::minutes(rng.random_range(0..3 * 24 * 60))).min(end);
                schedule.push((when, Step::Comment(i, commenter)));
            }
        }
    }
    schedule.sort();

    let workflow = Workflow::default();
    let mut runner = Runner {
        workflow,
        repo: MemoryRepository::new(),
        rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1)),
        plan: &plan,
        teachers: Vec::new(),
        class_ids: Vec::new(),
        students: BTreeMap::new(),
        inquiry_ids: BTreeMap::new(),
        exemplars: BTreeMap::new(),
        last_session: BTreeMap::new(),
    };

    // Researcher account and one exemplar per sensor, before any class opens.
    let opening = at(config.start, 7, 30);
    let researcher = workflow.register(&mut runner.repo, "researcher", Role::Teacher, opening)?;
    runner.session(researcher.id, opening)?;
    let library = workflow.create_class(&mut runner.repo, researcher.id, "Exemplars", &mut runner.rng, opening)?;
    for sensor in SensorType::ALL {
        let authored = text::exemplar(sensor);
        let captures = runner.captures(sensor, &authored.labels);
        let exemplar = workflow.seed_exemplar(
            &mut runner.repo,
            researcher.id,
            library.id,
            sensor,
            authored.text,
            captures,
            opening,
        )?;
        runner.exemplars.insert(sensor, exemplar.id);
    }

    for (when, step) in schedule {
        runner.run(step, when)?;
    }
    debug_assert_eq!(runner.students.len(), plan.students);

    let engine = ScoringEngine::default();
    let mut labels = Vec::new();
    
    for (i, planned) in plan.inquiries.iter().enumerate() {
        let id = runner.inquiry_ids[&i];
        let inquiry = runner.repo.inquiry(id).map_err(DomainError::from)?.expect("generated inquiry exists");
        let authored = planned.category.expect("category assigned");
        let scored = engine.score(&inquiry).category;
        if scored != authored {
            return Err(FixtureError::LabelMismatch { id, authored, scored });
        }

        labels.push((id, authored));
    }
    labels.sort();
    let events = runner.repo.event_log().to_vec();
    Ok(Fixture { config: config.clone(), events, labels, repo: runner.repo })
}
