//! Storage port for the workflow, plus the in-memory implementation used for
//! offline replay and as the reference model in tests.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use sensorlab_protocol::SensorType;
use serde::{Deserialize, Serialize};

use crate::error::StorageError;
use crate::event::EventRecord;
use crate::model::{
    ClassGroup, ClassId, Comment, CommentId, Inquiry, InquiryId, InquiryStatus, JoinCode, Membership, UserAccount,
    UserId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    User,
    Class,
    Inquiry,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeLookup {
    Active(ClassId),
    Revoked(ClassId),
    Unknown,
}

/// Position in the discover feed: newest first by `(published_at, id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeedCursor {
    pub published_at: DateTime<Utc>,
    pub id: InquiryId,
}

impl FeedCursor {
    pub fn of(inquiry: &Inquiry) -> Option<Self> {
        inquiry.published_at.map(|published_at| FeedCursor { published_at, id: inquiry.id })
    }

    pub fn encode(&self) -> String {
        format!("{}_{}", self.published_at.timestamp_nanos_opt().unwrap_or(i64::MAX), self.id.0)
    }

    pub fn decode(text: &str) -> Option<Self> {
        let (nanos, id) = text.split_once('_')?;
        Some(FeedCursor {
            published_at: DateTime::from_timestamp_nanos(nanos.parse().ok()?),
            id: InquiryId(id.parse().ok()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiscoverQuery {
    pub sensor: Option<SensorType>,
    pub class_id: Option<ClassId>,
    /// List researcher exemplars instead of student work.
    pub exemplars: bool,
    /// Only entries strictly older than this cursor.
    pub after: Option<FeedCursor>,
    pub limit: Option<usize>,
}

impl DiscoverQuery {
    pub fn matches(&self, inquiry: &Inquiry) -> bool {
        inquiry.status == InquiryStatus::Published
            && inquiry.exemplar == self.exemplars
            && self.sensor.is_none_or(|s| s == inquiry.sensor_type)
            && self.class_id.is_none_or(|c| c == inquiry.class_id)
            && match (self.after, FeedCursor::of(inquiry)) {
                (Some(after), Some(cursor)) => cursor < after,
                _ => true,
            }
    }
}

/// Everything the workflow needs from storage. Implementations must make a
/// sequence of calls made for one event atomic (the SQL store wraps each
/// event in a transaction).
pub trait Repository {
    fn next_id(&self, kind: IdKind) -> Result<u64, StorageError>;

    fn user(&self, id: UserId) -> Result<Option<UserAccount>, StorageError>;
    fn user_by_name(&self, username: &str) -> Result<Option<UserAccount>, StorageError>;
    fn insert_user(&mut self, user: &UserAccount) -> Result<(), StorageError>;
    fn add_membership(&mut self, membership: Membership) -> Result<(), StorageError>;

    fn class(&self, id: ClassId) -> Result<Option<ClassGroup>, StorageError>;
    fn lookup_code(&self, code: &JoinCode) -> Result<CodeLookup, StorageError>;
    fn insert_class(&mut self, class: &ClassGroup) -> Result<(), StorageError>;
    /// Installs a new join code and revokes the previous one.
    fn replace_join_code(&mut self, id: ClassId, code: &JoinCode) -> Result<(), StorageError>;

    fn inquiry(&self, id: InquiryId) -> Result<Option<Inquiry>, StorageError>;
    fn insert_inquiry(&mut self, inquiry: &Inquiry) -> Result<(), StorageError>;
    fn update_inquiry(&mut self, inquiry: &Inquiry) -> Result<(), StorageError>;
    /// All inquiries, exemplars included, ordered by id.
    fn inquiries(&self) -> Result<Vec<Inquiry>, StorageError>;
    /// Published inquiries matching `query`, newest first.
    fn discover(&self, query: &DiscoverQuery) -> Result<Vec<Inquiry>, StorageError>;
    /// How many inquiries match `query`, ignoring its cursor and limit.
    fn discover_count(&self, query: &DiscoverQuery) -> Result<usize, StorageError> {
        let all = DiscoverQuery { after: None, limit: None, ..query.clone() };
        Ok(self.discover(&all)?.len())
    }

    fn insert_comment(&mut self, comment: &Comment) -> Result<(), StorageError>;
    fn comments(&self, inquiry: InquiryId) -> Result<Vec<Comment>, StorageError>;

    fn append_event(&mut self, event: &EventRecord) -> Result<(), StorageError>;
    fn last_event_time(&self) -> Result<Option<DateTime<Utc>>, StorageError>;
    fn events(&self) -> Result<Vec<EventRecord>, StorageError>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryRepository {
    users: BTreeMap<UserId, UserAccount>,
    usernames: HashMap<String, UserId>,
    classes: BTreeMap<ClassId, ClassGroup>,
    codes: HashMap<JoinCode, CodeLookup>,
    inquiries: BTreeMap<InquiryId, Inquiry>,
    comments: BTreeMap<CommentId, Comment>,
    events: Vec<EventRecord>,
}

impl MemoryRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserAccount> {
        self.users.values()
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassGroup> {
        self.classes.values()
    }

    pub fn inquiry_values(&self) -> impl Iterator<Item = &Inquiry> {
        self.inquiries.values()
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.events
    }
}

fn next_key<K: Ord + Copy>(map: &BTreeMap<K, impl Sized>, raw: impl Fn(K) -> u64) -> u64 {
    map.keys().next_back().map_or(1, |k| raw(*k) + 1)
}

impl Repository for MemoryRepository {
    fn next_id(&self, kind: IdKind) -> Result<u64, StorageError> {
        Ok(match kind {
            IdKind::User => next_key(&self.users, |k: UserId| k.0),
            IdKind::Class => next_key(&self.classes, |k: ClassId| k.0),
            IdKind::Inquiry => next_key(&self.inquiries, |k: InquiryId| k.0),
            IdKind::Comment => next_key(&self.comments, |k: CommentId| k.0),
        })
    }

    fn user(&self, id: UserId) -> Result<Option<UserAccount>, StorageError> {
        Ok(self.users.get(&id).cloned())
    }

    fn user_by_name(&self, username: &str) -> Result<Option<UserAccount>, StorageError> {
        Ok(self.usernames.get(username).and_then(|id| self.users.get(id)).cloned())
    }

    fn insert_user(&mut self, user: &UserAccount) -> Result<(), StorageError> {
        self.usernames.insert(user.username.clone(), user.id);
        self.users.insert(user.id, user.clone());
        Ok(())
    }

    fn add_membership(&mut self, membership: Membership) -> Result<(), StorageError> {
        let user = self
            .users
            .get_mut(&membership.user_id)
            .ok_or_else(|| StorageError(format!("no user {}", membership.user_id)))?;
        if !user.class_ids.contains(&membership.class_id) {
            user.class_ids.push(membership.class_id);
        }
        Ok(())
    }

    fn class(&self, id: ClassId) -> Result<Option<ClassGroup>, StorageError> {
        Ok(self.classes.get(&id).cloned())
    }

    fn lookup_code(&self, code: &JoinCode) -> Result<CodeLookup, StorageError> {
        Ok(self.codes.get(code).copied().unwrap_or(CodeLookup::Unknown))
    }

    fn insert_class(&mut self, class: &ClassGroup) -> Result<(), StorageError> {
        self.codes.insert(class.join_code.clone(), CodeLookup::Active(class.id));
        self.classes.insert(class.id, class.clone());
        Ok(())
    }

    fn replace_join_code(&mut self, id: ClassId, code: &JoinCode) -> Result<(), StorageError> {
        let class = self.classes.get_mut(&id).ok_or_else(|| StorageError(format!("no class {id}")))?;
        self.codes.insert(class.join_code.clone(), CodeLookup::Revoked(id));
        self.codes.insert(code.clone(), CodeLookup::Active(id));
        class.join_code = code.clone();
        Ok(())
    }

    fn inquiry(&self, id: InquiryId) -> Result<Option<Inquiry>, StorageError> {
        Ok(self.inquiries.get(&id).cloned())
    }

    fn insert_inquiry(&mut self, inquiry: &Inquiry) -> Result<(), StorageError> {
        self.inquiries.insert(inquiry.id, inquiry.clone());
        Ok(())
    }

    fn update_inquiry(&mut self, inquiry: &Inquiry) -> Result<(), StorageError> {
        self.insert_inquiry(inquiry)
    }

    fn inquiries(&self) -> Result<Vec<Inquiry>, StorageError> {
        Ok(self.inquiries.values().cloned().collect())
    }

    fn discover(&self, query: &DiscoverQuery) -> Result<Vec<Inquiry>, StorageError> {
        let mut hits: Vec<&Inquiry> = self.inquiries.values().filter(|i| query.matches(i)).collect();
        hits.sort_by(|a, b| FeedCursor::of(b).cmp(&FeedCursor::of(a)));
        Ok(hits.into_iter().take(query.limit.unwrap_or(usize::MAX)).cloned().collect())
    }

    fn insert_comment(&mut self, comment: &Comment) -> Result<(), StorageError> {
        self.comments.insert(comment.id, comment.clone());
        Ok(())
    }

    fn comments(&self, inquiry: InquiryId) -> Result<Vec<Comment>, StorageError> {
        Ok(self.comments.values().filter(|c| c.inquiry_id == inquiry).cloned().collect())
    }

    fn append_event(&mut self, event: &EventRecord) -> Result<(), StorageError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn last_event_time(&self) -> Result<Option<DateTime<Utc>>, StorageError> {
        Ok(self.events.last().map(|e| e.timestamp))
    }

    fn events(&self) -> Result<Vec<EventRecord>, StorageError> {
        Ok(self.events.clone())
    }
}
