//! Workflow rules.
//!
//! Commands validate their input, allocate ids and build an [`EventRecord`];
//! [`Workflow::apply`] then checks the rules against current state and writes
//! the result. Replaying an exported log goes through the same `apply`, so a
//! log and the state it produced can never disagree.

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use rand::Rng;
use sensorlab_protocol::{Measurement, SensorType};

use crate::error::DomainError;
use crate::event::{payload, EventKind, EventRecord};
use crate::model::{
    CaptureSlot, ClassGroup, ClassId, Comment, CommentId, Inquiry, InquiryId, InquiryStatus, JoinCode, LineageKind,
    LineageLink, Limits, Membership, PhotoRef, Role, SourceClass, UserAccount, UserId, MAX_SLOTS,
};
use crate::repo::{CodeLookup, DiscoverQuery, IdKind, Repository};
use crate::scoring::{self, ScoreCategory};

/// State written by one applied event.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    User(UserAccount),
    Session(UserId),
    Class(ClassGroup),
    Joined(Membership),
    Inquiry(Inquiry),
    Comment(Comment),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("record {}: {error}", .index + 1)]
pub struct ReplayError {
    pub index: usize,
    pub error: DomainError,
}

/// One captured reading as supplied by a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub measurement: Measurement,
    pub label: String,
    pub photo_ref: Option<PhotoRef>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Workflow {
    pub limits: Limits,
}

const CODE_ATTEMPTS: usize = 32;

fn too_long(text: &str, limit: usize) -> bool {
    text.chars().count() > limit
}

fn valid_username(name: &str, limit: usize) -> bool {
    !name.is_empty()
        && !too_long(name, limit)
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn not_found(what: &str, id: impl std::fmt::Display) -> DomainError {
    DomainError::NotFound(format!("{what} {id}"))
}

impl Workflow {
    pub fn new(limits: Limits) -> Self {
        Workflow { limits }
    }

    // ---- reads ---------------------------------------------------------

    fn actor(&self, repo: &impl Repository, id: UserId) -> Result<UserAccount, DomainError> {
        repo.user(id)?.ok_or_else(|| not_found("user", id))
    }

    /// An inquiry as seen by `viewer`. Other people's drafts do not exist.
    pub fn view_inquiry(
        &self,
        repo: &impl Repository,
        viewer: UserId,
        id: InquiryId,
    ) -> Result<Inquiry, DomainError> {
        repo.inquiry(id)?.filter(|i| i.visible_to(viewer)).ok_or_else(|| not_found("inquiry", id))
    }

    pub fn discover(&self, repo: &impl Repository, query: &DiscoverQuery) -> Result<Vec<Inquiry>, DomainError> {
        Ok(repo.discover(query)?)
    }

    /// The inquiry chain from `id` back to its root, `id` first.
    pub fn ancestry(&self, repo: &impl Repository, id: InquiryId) -> Result<Vec<InquiryId>, DomainError> {
        let mut chain = vec![id];
        let mut seen = HashSet::from([id]);
        let mut current = id;
        while let Some(link) = repo.inquiry(current)?.and_then(|i| i.lineage) {
            current = link.source_inquiry_id;
            if !seen.insert(current) {
                return Err(DomainError::Integrity(format!("lineage cycle through inquiry {current}")));
            }
            chain.push(current);
        }
        Ok(chain)
    }

    fn editable(&self, repo: &impl Repository, actor: UserId, id: InquiryId) -> Result<Inquiry, DomainError> {
        let inquiry = repo.inquiry(id)?.ok_or_else(|| not_found("inquiry", id))?;
        if inquiry.author_id != actor {
            return Err(DomainError::Forbidden("only the author can change an inquiry".into()));
        }
        if inquiry.status != InquiryStatus::Draft {
            return Err(DomainError::State("inquiry is already published".into()));
        }
        Ok(inquiry)
    }

    fn member_of(&self, user: &UserAccount, class_id: ClassId) -> Result<(), DomainError> {
        if user.class_ids.contains(&class_id) {
            Ok(())
        } else {
            Err(DomainError::Forbidden(format!("not a member of class {class_id}")))
        }
    }

    fn check_text(&self, text: &payload::InquiryText) -> Result<(), DomainError> {
        if too_long(&text.title, self.limits.title) {
            return Err(DomainError::validation("title"));
        }
        Ok(())
    }

    fn check_capture(&self, sensor: SensorType, measurement: &Measurement, label: &str) -> Result<(), DomainError> {
        let mut fields = Vec::new();
        if too_long(label, self.limits.label) {
            fields.push("label".to_string());
        }
        if measurement.sensor_type != sensor || !measurement.conforms_to_factory() {
            fields.push("measurement".to_string());
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(DomainError::Validation(fields))
        }
    }

    // ---- apply ---------------------------------------------------------

    /// Checks `event` against current state and, if it holds, writes its
    /// effects and appends it to the log. Nothing is written on error.
    pub fn apply<R: Repository>(&self, repo: &mut R, event: EventRecord) -> Result<Applied, DomainError> {
        if let Some(last) = repo.last_event_time()? {
            if event.timestamp < last {
                return Err(DomainError::Integrity(format!(
                    "event at {} precedes the last logged event at {last}",
                    event.timestamp
                )));
            }
        }
        let applied = match event.kind {
            EventKind::UserRegistered => self.apply_register(repo, &event)?,
            EventKind::SessionStart => {
                self.actor(repo, event.actor_id)?;
                Applied::Session(event.actor_id)
            }
            EventKind::ClassCreated => self.apply_class_created(repo, &event)?,
            EventKind::ClassCodeRegenerated => self.apply_code_regenerated(repo, &event)?,
            EventKind::ClassJoined => self.apply_join(repo, &event)?,
            EventKind::InquiryCreated => self.apply_inquiry_created(repo, &event)?,
            EventKind::InquiryEdited => self.apply_edit(repo, &event)?,
            EventKind::DataCaptured => self.apply_capture(repo, &event)?,
            EventKind::Published => self.apply_publish(repo, &event)?,
            EventKind::Comment => self.apply_comment(repo, &event)?,
            EventKind::Replication => self.apply_lineage(repo, &event, LineageKind::Replication)?,
            EventKind::Remix => self.apply_lineage(repo, &event, LineageKind::Remix)?,
            EventKind::ExemplarSeeded => self.apply_exemplar(repo, &event)?,
            EventKind::ScoreOverridden => self.apply_override(repo, &event)?,
        };
        match &applied {
            Applied::User(user) => repo.insert_user(user)?,
            Applied::Session(_) => {}
            Applied::Class(class) => match event.kind {
                EventKind::ClassCreated => {
                    repo.insert_class(class)?;
                    repo.add_membership(Membership { user_id: class.teacher_id, class_id: class.id })?;
                }
                _ => repo.replace_join_code(class.id, &class.join_code)?,
            },
            Applied::Joined(membership) => repo.add_membership(*membership)?,
            Applied::Inquiry(inquiry) => {
                if matches!(
                    event.kind,
                    EventKind::InquiryCreated | EventKind::Replication | EventKind::Remix | EventKind::ExemplarSeeded
                ) {
                    repo.insert_inquiry(inquiry)?;
                } else {
                    repo.update_inquiry(inquiry)?;
                }
            }
            Applied::Comment(comment) => repo.insert_comment(comment)?,
        }
        repo.append_event(&event)?;
        Ok(applied)
    }

    /// Applies a whole log in order, stopping at the first rejected record.
    pub fn replay<R: Repository>(&self, repo: &mut R, events: &[EventRecord]) -> Result<(), ReplayError> {
        for (index, event) in events.iter().enumerate() {
            self.apply(repo, event.clone()).map_err(|error| ReplayError { index, error })?;
        }
        Ok(())
    }

    fn apply_register(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::UserRegistered = event.payload_as()?;
        if event.subject_id != event.actor_id.0 {
            return Err(DomainError::Integrity("registration subject must be the new user".into()));
        }
        if !valid_username(&p.username, self.limits.username) {
            return Err(DomainError::validation("username"));
        }
        if repo.user_by_name(&p.username)?.is_some() {
            return Err(DomainError::Conflict(format!("username `{}` is taken", p.username)));
        }
        if repo.user(event.actor_id)?.is_some() {
            return Err(DomainError::Integrity(format!("user id {} reused", event.actor_id)));
        }
        Ok(Applied::User(UserAccount { id: event.actor_id, username: p.username, role: p.role, class_ids: Vec::new() }))
    }

    fn apply_class_created(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::ClassCreated = event.payload_as()?;
        let teacher = self.actor(repo, event.actor_id)?;
        if teacher.role != Role::Teacher {
            return Err(DomainError::Forbidden("only teachers can create classes".into()));
        }
        let name = p.name.trim();
        if name.is_empty() || too_long(name, self.limits.class_name) {
            return Err(DomainError::validation("name"));
        }
        if repo.lookup_code(&p.join_code)? != CodeLookup::Unknown {
            return Err(DomainError::Conflict("join code already issued".into()));
        }
        let id = ClassId(event.subject_id);
        if repo.class(id)?.is_some() {
            return Err(DomainError::Integrity(format!("class id {id} reused")));
        }
        Ok(Applied::Class(ClassGroup {
            id,
            name: name.to_string(),
            join_code: p.join_code,
            teacher_id: teacher.id,
            created_at: event.timestamp,
        }))
    }

    fn apply_code_regenerated(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::ClassCodeRegenerated = event.payload_as()?;
        let id = ClassId(event.subject_id);
        let mut class = repo.class(id)?.ok_or_else(|| not_found("class", id))?;
        if class.teacher_id != event.actor_id {
            return Err(DomainError::Forbidden("only the class teacher can change its code".into()));
        }
        if repo.lookup_code(&p.join_code)? != CodeLookup::Unknown {
            return Err(DomainError::Conflict("join code already issued".into()));
        }
        class.join_code = p.join_code;
        Ok(Applied::Class(class))
    }

    fn apply_join(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::ClassCodeRegenerated = event.payload_as()?;
        let student = self.actor(repo, event.actor_id)?;
        if student.role != Role::Student {
            return Err(DomainError::Forbidden("only students join classes by code".into()));
        }
        let class_id = match repo.lookup_code(&p.join_code)? {
            CodeLookup::Active(id) => id,
            CodeLookup::Revoked(_) => return Err(DomainError::ExpiredCode),
            CodeLookup::Unknown => return Err(not_found("join code", &p.join_code)),
        };
        if class_id.0 != event.subject_id {
            return Err(DomainError::Integrity(format!("join code belongs to class {class_id}")));
        }
        if student.class_ids.contains(&class_id) {
            return Err(DomainError::Integrity(format!("user {} already in class {class_id}", student.id)));
        }
        Ok(Applied::Joined(Membership { user_id: student.id, class_id }))
    }

    fn apply_inquiry_created(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::InquiryCreated = event.payload_as()?;
        let author = self.actor(repo, event.actor_id)?;
        let sensor_type = event
            .sensor_type
            .ok_or_else(|| DomainError::Integrity("inquiry_created without sensor_type".into()))?;
        self.member_of(&author, p.class_id)?;
        self.check_text(&p.text)?;
        let inquiry = self.new_inquiry(repo, event, author.id, p.class_id, sensor_type, p.text)?;
        Ok(Applied::Inquiry(inquiry))
    }

    fn new_inquiry(
        &self,
        repo: &impl Repository,
        event: &EventRecord,
        author_id: UserId,
        class_id: ClassId,
        sensor_type: SensorType,
        text: payload::InquiryText,
    ) -> Result<Inquiry, DomainError> {
        let id = InquiryId(event.subject_id);
        if repo.inquiry(id)?.is_some() {
            return Err(DomainError::Integrity(format!("inquiry id {id} reused")));
        }
        Ok(Inquiry {
            id,
            author_id,
            class_id,
            sensor_type,
            title: text.title,
            description: text.description,
            notes: text.notes,
            slots: Vec::new(),
            status: InquiryStatus::Draft,
            lineage: None,
            created_at: event.timestamp,
            published_at: None,
            manual_score_override: None,
            exemplar: false,
        })
    }

    fn apply_edit(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let text: payload::InquiryText = event.payload_as()?;
        let mut inquiry = self.editable(repo, event.actor_id, InquiryId(event.subject_id))?;
        self.check_text(&text)?;
        inquiry.title = text.title;
        inquiry.description = text.description;
        inquiry.notes = text.notes;
        Ok(Applied::Inquiry(inquiry))
    }

    fn apply_capture(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::DataCaptured = event.payload_as()?;
        let mut inquiry = self.editable(repo, event.actor_id, InquiryId(event.subject_id))?;
        if inquiry.slots.len() >= MAX_SLOTS {
            return Err(DomainError::SlotLimit);
        }
        self.check_capture(inquiry.sensor_type, &p.slot.measurement, &p.slot.label)?;
        if usize::from(p.slot.index) != inquiry.slots.len() {
            return Err(DomainError::Integrity(format!(
                "slot {} captured but next free slot is {}",
                p.slot.index,
                inquiry.slots.len()
            )));
        }
        inquiry.slots.push(p.slot);
        Ok(Applied::Inquiry(inquiry))
    }

    fn apply_publish(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let mut inquiry = self.editable(repo, event.actor_id, InquiryId(event.subject_id))?;
        let mut missing = Vec::new();
        if inquiry.title.trim().is_empty() {
            missing.push("title".to_string());
        }
        if inquiry.slots.is_empty() {
            missing.push("slots".to_string());
        }
        if !missing.is_empty() {
            return Err(DomainError::Validation(missing));
        }
        inquiry.status = InquiryStatus::Published;
        inquiry.published_at = Some(event.timestamp);
        Ok(Applied::Inquiry(inquiry))
    }

    fn apply_comment(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::CommentPosted = event.payload_as()?;
        let author = self.actor(repo, event.actor_id)?;
        let inquiry = self.view_inquiry(repo, author.id, InquiryId(event.subject_id))?;
        if !inquiry.is_published() {
            return Err(DomainError::State("comments attach to published inquiries only".into()));
        }
        let body = p.body.trim();
        if body.is_empty() || too_long(body, self.limits.comment) {
            return Err(DomainError::validation("body"));
        }
        if repo.comments(inquiry.id)?.iter().any(|c| c.id == p.comment_id) {
            return Err(DomainError::Integrity(format!("comment id {} reused", p.comment_id)));
        }
        Ok(Applied::Comment(Comment {
            id: p.comment_id,
            inquiry_id: inquiry.id,
            author_id: author.id,
            body: body.to_string(),
            created_at: event.timestamp,
        }))
    }

    fn apply_lineage(
        &self,
        repo: &impl Repository,
        event: &EventRecord,
        kind: LineageKind,
    ) -> Result<Applied, DomainError> {
        let p: payload::LineageCreated = event.payload_as()?;
        let caller = self.actor(repo, event.actor_id)?;
        let source = self.view_inquiry(repo, caller.id, p.source_id)?;
        if !source.is_published() {
            return Err(DomainError::State("only published inquiries can be replicated or remixed".into()));
        }
        self.member_of(&caller, p.class_id)?;
        let id = InquiryId(event.subject_id);
        if self.ancestry(repo, source.id)?.contains(&id) {
            return Err(DomainError::Integrity(format!("inquiry {id} would become its own ancestor")));
        }
        let text = match kind {
            LineageKind::Replication => payload::InquiryText {
                title: source.title.clone(),
                description: source.description.clone(),
                notes: source.notes.clone(),
            },
            LineageKind::Remix => {
                let title: String = format!("{} (remix)", source.title).chars().take(self.limits.title).collect();
                payload::InquiryText { title, description: source.description.clone(), notes: String::new() }
            }
        };
        let mut inquiry = self.new_inquiry(repo, event, caller.id, p.class_id, source.sensor_type, text)?;
        inquiry.lineage = Some(LineageLink {
            kind,
            source_inquiry_id: source.id,
            source_class: SourceClass::classify(source.author_id, caller.id, source.exemplar),
        });
        Ok(Applied::Inquiry(inquiry))
    }

    fn apply_exemplar(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::ExemplarSeeded = event.payload_as()?;
        let teacher = self.actor(repo, event.actor_id)?;
        if teacher.role != Role::Teacher {
            return Err(DomainError::Forbidden("only teachers can seed exemplars".into()));
        }
        let sensor_type = event
            .sensor_type
            .ok_or_else(|| DomainError::Integrity("exemplar_seeded without sensor_type".into()))?;
        self.member_of(&teacher, p.class_id)?;
        self.check_text(&p.text)?;
        let mut missing = Vec::new();
        if p.text.title.trim().is_empty() {
            missing.push("title".to_string());
        }
        if p.captures.is_empty() || p.captures.len() > MAX_SLOTS {
            missing.push("slots".to_string());
        }
        if !missing.is_empty() {
            return Err(DomainError::Validation(missing));
        }
        let mut inquiry = self.new_inquiry(repo, event, teacher.id, p.class_id, sensor_type, p.text)?;
        for (index, capture) in p.captures.into_iter().enumerate() {
            self.check_capture(sensor_type, &capture.measurement, &capture.label)?;
            inquiry.slots.push(CaptureSlot {
                index: index as u8,
                measurement: capture.measurement,
                label: capture.label,
                photo_ref: capture.photo_ref,
            });
        }
        inquiry.status = InquiryStatus::Published;
        inquiry.published_at = Some(event.timestamp);
        inquiry.exemplar = true;
        Ok(Applied::Inquiry(inquiry))
    }

    fn apply_override(&self, repo: &impl Repository, event: &EventRecord) -> Result<Applied, DomainError> {
        let p: payload::ScoreOverridden = event.payload_as()?;
        let coder = self.actor(repo, event.actor_id)?;
        let inquiry = self.view_inquiry(repo, coder.id, InquiryId(event.subject_id))?;
        let updated = scoring::override_score(&inquiry, &coder, p.category, &p.reason, event.timestamp)?;
        Ok(Applied::Inquiry(updated))
    }

    // ---- commands ------------------------------------------------------

    /// Wall-clock time clamped so the log stays ordered.
    fn stamp(&self, repo: &impl Repository, at: DateTime<Utc>) -> Result<DateTime<Utc>, DomainError> {
        Ok(repo.last_event_time()?.map_or(at, |last| at.max(last)))
    }

    pub fn register<R: Repository>(
        &self,
        repo: &mut R,
        username: &str,
        role: Role,
        at: DateTime<Utc>,
    ) -> Result<UserAccount, DomainError> {
        let id = UserId(repo.next_id(IdKind::User)?);
        let event = EventRecord::new(self.stamp(repo, at)?, id, EventKind::UserRegistered, id.0)
            .with_payload(&payload::UserRegistered { username: username.trim().to_string(), role });
        match self.apply(repo, event)? {
            Applied::User(user) => Ok(user),
            other => unreachable!("register applied as {other:?}"),
        }
    }

    pub fn start_session<R: Repository>(&self, repo: &mut R, user: UserId, at: DateTime<Utc>) -> Result<(), DomainError> {
        let event = EventRecord::new(self.stamp(repo, at)?, user, EventKind::SessionStart, user.0);
        self.apply(repo, event).map(drop)
    }

    pub fn create_class<R: Repository>(
        &self,
        repo: &mut R,
        teacher: UserId,
        name: &str,
        rng: &mut impl Rng,
        at: DateTime<Utc>,
    ) -> Result<ClassGroup, DomainError> {
        let join_code = self.fresh_code(repo, rng)?;
        let id = repo.next_id(IdKind::Class)?;
        let event = EventRecord::new(self.stamp(repo, at)?, teacher, EventKind::ClassCreated, id)
            .with_payload(&payload::ClassCreated { name: name.to_string(), join_code });
        match self.apply(repo, event)? {
            Applied::Class(class) => Ok(class),
            other => unreachable!("class creation applied as {other:?}"),
        }
    }

    fn fresh_code(&self, repo: &impl Repository, rng: &mut impl Rng) -> Result<JoinCode, DomainError> {
        for _ in 0..CODE_ATTEMPTS {
            let code = JoinCode::random(rng);
            if repo.lookup_code(&code)? == CodeLookup::Unknown {
                return Ok(code);
            }
        }
        Err(DomainError::Conflict("could not find an unused join code".into()))
    }

    pub fn regenerate_code<R: Repository>(
        &self,
        repo: &mut R,
        teacher: UserId,
        class_id: ClassId,
        rng: &mut impl Rng,
        at: DateTime<Utc>,
    ) -> Result<ClassGroup, DomainError> {
        let join_code = self.fresh_code(repo, rng)?;
        let event = EventRecord::new(self.stamp(repo, at)?, teacher, EventKind::ClassCodeRegenerated, class_id.0)
            .with_payload(&payload::ClassCodeRegenerated { join_code });
        match self.apply(repo, event)? {
            Applied::Class(class) => Ok(class),
            other => unreachable!("code change applied as {other:?}"),
        }
    }

    /// Joins a class by code. Joining a class twice is a no-op and logs
    /// nothing.
    pub fn join_class<R: Repository>(
        &self,
        repo: &mut R,
        student: UserId,
        code: &str,
        at: DateTime<Utc>,
    ) -> Result<Membership, DomainError> {
        let code = JoinCode::parse(&code.trim().to_ascii_uppercase()).ok_or_else(|| not_found("join code", code))?;
        let user = self.actor(repo, student)?;
        let class_id = match repo.lookup_code(&code)? {
            CodeLookup::Active(id) => id,
            CodeLookup::Revoked(_) => return Err(DomainError::ExpiredCode),
            CodeLookup::Unknown => return Err(not_found("join code", &code)),
        };
        if user.role == Role::Student && user.class_ids.contains(&class_id) {
            return Ok(Membership { user_id: student, class_id });
        }
        let event = EventRecord::new(self.stamp(repo, at)?, student, EventKind::ClassJoined, class_id.0)
            .with_payload(&payload::ClassCodeRegenerated { join_code: code });
        match self.apply(repo, event)? {
            Applied::Joined(m) => Ok(m),
            other => unreachable!("join applied as {other:?}"),
        }
    }

    fn default_class(&self, repo: &impl Repository, user: UserId, class_id: Option<ClassId>) -> Result<ClassId, DomainError> {
        match class_id {
            Some(id) => Ok(id),
            None => self
                .actor(repo, user)?
                .class_ids
                .first()
                .copied()
                .ok_or_else(|| DomainError::Forbidden("join a class first".into())),
        }
    }

    pub fn create_inquiry<R: Repository>(
        &self,
        repo: &mut R,
        author: UserId,
        class_id: Option<ClassId>,
        sensor_type: SensorType,
        text: payload::InquiryText,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let class_id = self.default_class(repo, author, class_id)?;
        let id = repo.next_id(IdKind::Inquiry)?;
        let event = EventRecord::new(self.stamp(repo, at)?, author, EventKind::InquiryCreated, id)
            .with_sensor(sensor_type)
            .with_payload(&payload::InquiryCreated { class_id, text });
        self.expect_inquiry(repo, event)
    }

    fn expect_inquiry<R: Repository>(&self, repo: &mut R, event: EventRecord) -> Result<Inquiry, DomainError> {
        match self.apply(repo, event)? {
            Applied::Inquiry(inquiry) => Ok(inquiry),
            other => unreachable!("inquiry event applied as {other:?}"),
        }
    }

    fn inquiry_sensor(&self, repo: &impl Repository, id: InquiryId) -> Result<Option<SensorType>, DomainError> {
        Ok(repo.inquiry(id)?.map(|i| i.sensor_type))
    }

    pub fn edit_inquiry<R: Repository>(
        &self,
        repo: &mut R,
        author: UserId,
        id: InquiryId,
        text: payload::InquiryText,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let mut event = EventRecord::new(self.stamp(repo, at)?, author, EventKind::InquiryEdited, id.0).with_payload(&text);
        event.sensor_type = self.inquiry_sensor(repo, id)?;
        self.expect_inquiry(repo, event)
    }

    /// Fills the next free data slot.
    pub fn capture<R: Repository>(
        &self,
        repo: &mut R,
        author: UserId,
        id: InquiryId,
        capture: Capture,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let current = self.editable(repo, author, id)?;
        let slot = CaptureSlot {
            index: current.slots.len().min(u8::MAX as usize) as u8,
            measurement: capture.measurement,
            label: capture.label.trim().to_string(),
            photo_ref: capture.photo_ref,
        };
        let event = EventRecord::new(self.stamp(repo, at)?, author, EventKind::DataCaptured, id.0)
            .with_sensor(current.sensor_type)
            .with_payload(&payload::DataCaptured { slot });
        self.expect_inquiry(repo, event)
    }

    pub fn publish<R: Repository>(
        &self,
        repo: &mut R,
        author: UserId,
        id: InquiryId,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let mut event = EventRecord::new(self.stamp(repo, at)?, author, EventKind::Published, id.0);
        event.sensor_type = self.inquiry_sensor(repo, id)?;
        self.expect_inquiry(repo, event)
    }

    pub fn comment<R: Repository>(
        &self,
        repo: &mut R,
        author: UserId,
        id: InquiryId,
        body: &str,
        at: DateTime<Utc>,
    ) -> Result<Comment, DomainError> {
        let comment_id = CommentId(repo.next_id(IdKind::Comment)?);
        let event = EventRecord::new(self.stamp(repo, at)?, author, EventKind::Comment, id.0)
            .with_payload(&payload::CommentPosted { comment_id, body: body.to_string() });
        match self.apply(repo, event)? {
            Applied::Comment(c) => Ok(c),
            other => unreachable!("comment applied as {other:?}"),
        }
    }

    /// Starts a replication or remix of a published inquiry.
    pub fn derive<R: Repository>(
        &self,
        repo: &mut R,
        caller: UserId,
        source_id: InquiryId,
        kind: LineageKind,
        class_id: Option<ClassId>,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let class_id = self.default_class(repo, caller, class_id)?;
        let id = repo.next_id(IdKind::Inquiry)?;
        let event_kind = match kind {
            LineageKind::Replication => EventKind::Replication,
            LineageKind::Remix => EventKind::Remix,
        };
        let mut event = EventRecord::new(self.stamp(repo, at)?, caller, event_kind, id)
            .with_payload(&payload::LineageCreated { source_id, class_id });
        event.sensor_type = self.inquiry_sensor(repo, source_id)?;
        self.expect_inquiry(repo, event)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn seed_exemplar<R: Repository>(
        &self,
        repo: &mut R,
        teacher: UserId,
        class_id: ClassId,
        sensor_type: SensorType,
        text: payload::InquiryText,
        captures: Vec<Capture>,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let id = repo.next_id(IdKind::Inquiry)?;
        let captures = captures
            .into_iter()
            .map(|c| payload::ExemplarCapture { measurement: c.measurement, label: c.label, photo_ref: c.photo_ref })
            .collect();
        let event = EventRecord::new(self.stamp(repo, at)?, teacher, EventKind::ExemplarSeeded, id)
            .with_sensor(sensor_type)
            .with_payload(&payload::ExemplarSeeded { class_id, text, captures });
        self.expect_inquiry(repo, event)
    }

    pub fn override_score<R: Repository>(
        &self,
        repo: &mut R,
        coder: UserId,
        id: InquiryId,
        category: ScoreCategory,
        reason: &str,
        at: DateTime<Utc>,
    ) -> Result<Inquiry, DomainError> {
        let mut event = EventRecord::new(self.stamp(repo, at)?, coder, EventKind::ScoreOverridden, id.0)
            .with_payload(&payload::ScoreOverridden { category, reason: reason.to_string() });
        event.sensor_type = self.inquiry_sensor(repo, id)?;
        self.expect_inquiry(repo, event)
    }
}
