//! SQLite persistence. [`SqlRepository`] implements the core repository over
//! one connection or transaction; [`Store`] owns the connection, the schema
//! and the credential/session/photo tables that sit outside the domain model.

use std::path::Path;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use sensorlab_core::{
    CaptureSlot, ClassGroup, ClassId, CodeLookup, Comment, CommentId, DiscoverQuery, EventRecord, IdKind,
    Inquiry, InquiryId, InquiryStatus, JoinCode, LineageKind, LineageLink, Membership, PhotoRef, Repository, Role,
    ScoreOverride, SourceClass, StorageError, UserAccount, UserId,
};
use sensorlab_protocol::SensorType;

const SCHEMA: &str = r#"
PRAGMA foreign_keys = ON;
CREATE TABLE IF NOT EXISTS users (
    id INTEGER PRIMARY KEY,
    username TEXT NOT NULL UNIQUE,
    role TEXT NOT NULL CHECK (role IN ('teacher', 'student'))
);
CREATE TABLE IF NOT EXISTS credentials (
    user_id INTEGER PRIMARY KEY REFERENCES users(id),
    phc TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    token TEXT PRIMARY KEY,
    user_id INTEGER NOT NULL REFERENCES users(id),
    expires_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS classes (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    join_code TEXT NOT NULL,
    teacher_id INTEGER NOT NULL REFERENCES users(id),
    created_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS join_codes (
    code TEXT PRIMARY KEY,
    class_id INTEGER NOT NULL REFERENCES classes(id),
    active INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS memberships (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id INTEGER NOT NULL REFERENCES users(id),
    class_id INTEGER NOT NULL REFERENCES classes(id),
    UNIQUE (user_id, class_id)
);
CREATE TABLE IF NOT EXISTS inquiries (
    id INTEGER PRIMARY KEY,
    author_id INTEGER NOT NULL REFERENCES users(id),
    class_id INTEGER NOT NULL REFERENCES classes(id),
    sensor_type TEXT NOT NULL,
    title TEXT NOT NULL,
    description TEXT NOT NULL,
    notes TEXT NOT NULL,
    status TEXT NOT NULL CHECK (status IN ('draft', 'published')),
    exemplar INTEGER NOT NULL,
    created_ns INTEGER NOT NULL,
    published_ns INTEGER,
    override_json TEXT
);
CREATE INDEX IF NOT EXISTS inquiries_feed ON inquiries (status, exemplar, published_ns DESC, id DESC);
CREATE TABLE IF NOT EXISTS slots (
    inquiry_id INTEGER NOT NULL REFERENCES inquiries(id),
    idx INTEGER NOT NULL CHECK (idx BETWEEN 0 AND 2),
    measurement_json TEXT NOT NULL,
    label TEXT NOT NULL,
    photo_ref TEXT,
    PRIMARY KEY (inquiry_id, idx)
);
-- A source must exist before anything derives from it, and ids only grow,
-- so the source id is always smaller: links cannot form a cycle.
CREATE TABLE IF NOT EXISTS lineage (
    inquiry_id INTEGER PRIMARY KEY REFERENCES inquiries(id),
    kind TEXT NOT NULL,
    source_id INTEGER NOT NULL REFERENCES inquiries(id),
    source_class TEXT NOT NULL,
    CHECK (source_id < inquiry_id)
);
CREATE TABLE IF NOT EXISTS comments (
    id INTEGER PRIMARY KEY,
    inquiry_id INTEGER NOT NULL REFERENCES inquiries(id),
    author_id INTEGER NOT NULL REFERENCES users(id),
    body TEXT NOT NULL,
    created_ns INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS events (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    timestamp_ns INTEGER NOT NULL,
    record TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS photos (
    id TEXT PRIMARY KEY,
    media_type TEXT NOT NULL,
    size INTEGER NOT NULL,
    uploaded_by INTEGER NOT NULL REFERENCES users(id),
    uploaded_ns INTEGER NOT NULL
);
"#;

fn storage(e: impl std::fmt::Display) -> StorageError {
    StorageError(e.to_string())
}

pub(crate) fn ns(t: DateTime<Utc>) -> i64 {
    t.timestamp_nanos_opt().unwrap_or(i64::MAX)
}

pub(crate) fn from_ns(v: i64) -> DateTime<Utc> {
    DateTime::from_timestamp_nanos(v)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, StorageError> {
    serde_json::to_string(v).map_err(storage)
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, StorageError> {
    serde_json::from_str(s).map_err(storage)
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::Teacher => "teacher",
        Role::Student => "student",
    }
}

fn parse_role(s: &str) -> Result<Role, StorageError> {
    match s {
        "teacher" => Ok(Role::Teacher),
        "student" => Ok(Role::Student),
        other => Err(StorageError(format!("bad role `{other}`"))),
    }
}

fn kind_str(kind: LineageKind) -> &'static str {
    match kind {
        LineageKind::Replication => "replication",
        LineageKind::Remix => "remix",
    }
}

/// Repository over a borrowed connection; callers wrap each event in a
/// transaction.
pub struct SqlRepository<'c> {
    conn: &'c Connection,
}

impl<'c> SqlRepository<'c> {
    pub fn new(conn: &'c Connection) -> Self {
        SqlRepository { conn }
    }

    fn load_user(&self, row: Option<(i64, String, String)>) -> Result<Option<UserAccount>, StorageError> {
        let Some((id, username, role)) = row else { return Ok(None) };
        let mut stmt = self
            .conn
            .prepare_cached("SELECT class_id FROM memberships WHERE user_id = ?1 ORDER BY seq")
            .map_err(storage)?;
        let class_ids = stmt
            .query_map([id], |r| r.get::<_, i64>(0))
            .map_err(storage)?
            .map(|r| r.map(|c| ClassId(c as u64)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(storage)?;
        Ok(Some(UserAccount { id: UserId(id as u64), username, role: parse_role(&role)?, class_ids }))
    }

    fn user_where(&self, clause: &str, arg: &dyn rusqlite::ToSql) -> Result<Option<UserAccount>, StorageError> {
        let row = self
            .conn
            .query_row(&format!("SELECT id, username, role FROM users WHERE {clause}"), [arg], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?))
            })
            .optional()
            .map_err(storage)?;
        self.load_user(row)
    }

    fn slots(&self, inquiry: i64) -> Result<Vec<CaptureSlot>, StorageError> {
        let mut stmt = self
            .conn
            .prepare_cached(
                "SELECT idx, measurement_json, label, photo_ref FROM slots WHERE inquiry_id = ?1 ORDER BY idx",
            )
            .map_err(storage)?;
        let rows = stmt
            .query_map([inquiry], |r| {
                Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?, r.get::<_, Option<String>>(3)?))
            })
            .map_err(storage)?;
        let mut out = Vec::new();
        for row in rows {
            let (idx, measurement, label, photo) = row.map_err(storage)?;
            out.push(CaptureSlot {
                index: idx as u8,
                measurement: from_json(&measurement)?,
                label,
                photo_ref: photo
                    .map(|p| PhotoRef::parse(&p).ok_or_else(|| StorageError(format!("bad photo ref `{p}`"))))
                    .transpose()?,
            });
        }
        Ok(out)
    }

    fn lineage(&self, inquiry: i64) -> Result<Option<LineageLink>, StorageError> {
        let row = self
            .conn
            .query_row(
                "SELECT kind, source_id, source_class FROM lineage WHERE inquiry_id = ?1",
                [inquiry],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?, r.get::<_, String>(2)?)),
            )
            .optional()
            .map_err(storage)?;
        let Some((kind, source, class)) = row else { return Ok(None) };
        Ok(Some(LineageLink {
            kind: match kind.as_str() {
                "replication" => LineageKind::Replication,
                "remix" => LineageKind::Remix,
                other => return Err(StorageError(format!("bad lineage kind `{other}`"))),
            },
            source_inquiry_id: InquiryId(source as u64),
            source_class: SourceClass::ALL
                .into_iter()
                .find(|c| c.as_str() == class)
                .ok_or_else(|| StorageError(format!("bad source class `{class}`")))?,
        }))
    }

    fn inquiry_from_row(&self, r: &InquiryRow) -> Result<Inquiry, StorageError> {
        Ok(Inquiry {
            id: InquiryId(r.id as u64),
            author_id: UserId(r.author as u64),
            class_id: ClassId(r.class as u64),
            sensor_type: r.sensor.parse::<SensorType>().map_err(StorageError)?,
            title: r.title.clone(),
            description: r.description.clone(),
            notes: r.notes.clone(),
            slots: self.slots(r.id)?,
            status: if r.status == "published" { InquiryStatus::Published } else { InquiryStatus::Draft },
            lineage: self.lineage(r.id)?,
            created_at: from_ns(r.created),
            published_at: r.published.map(from_ns),
            manual_score_override: r.override_json.as_deref().map(from_json::<ScoreOverride>).transpose()?,
            exemplar: r.exemplar,
        })
    }

    fn select_inquiries(&self, tail: &str, args: &[&dyn rusqlite::ToSql]) -> Result<Vec<Inquiry>, StorageError> {
        let sql = format!("SELECT {INQUIRY_COLUMNS} FROM inquiries {tail}");
        let mut stmt = self.conn.prepare_cached(&sql).map_err(storage)?;
        let rows = stmt.query_map(args, InquiryRow::read).map_err(storage)?.collect::<Result<Vec<_>, _>>().map_err(storage)?;
        rows.iter().map(|r| self.inquiry_from_row(r)).collect()
    }

    pub fn conn(&self) -> &Connection {
        self.conn
    }

    /// Everything `author` wrote, drafts included, newest first.
    pub fn authored_by(&self, author: UserId) -> Result<Vec<Inquiry>, StorageError> {
        self.select_inquiries("WHERE author_id = ?1 ORDER BY created_ns DESC, id DESC", &[&(author.0 as i64)])
    }

    fn write_slots_and_lineage(&self, inquiry: &Inquiry) -> Result<(), StorageError> {
        let id = inquiry.id.0 as i64;
        self.conn.execute("DELETE FROM slots WHERE inquiry_id = ?1", [id]).map_err(storage)?;
        for slot in &inquiry.slots {
            self.conn
                .execute(
                    "INSERT INTO slots (inquiry_id, idx, measurement_json, label, photo_ref) VALUES (?1, ?2, ?3, ?4, ?5)",
                    params![
                        id,
                        i64::from(slot.index),
                        to_json(&slot.measurement)?,
                        slot.label,
                        slot.photo_ref.as_ref().map(|p| p.as_str().to_string())
                    ],
                )
                .map_err(storage)?;
        }
        if let Some(link) = &inquiry.lineage {
            self.conn
                .execute(
                    "INSERT OR REPLACE INTO lineage (inquiry_id, kind, source_id, source_class) VALUES (?1, ?2, ?3, ?4)",
                    params![id, kind_str(link.kind), link.source_inquiry_id.0 as i64, link.source_class.as_str()],
                )
                .map_err(storage)?;
        }
        Ok(())
    }

    fn discover_sql(query: &DiscoverQuery) -> (String, Vec<Box<dyn rusqlite::ToSql>>) {
        let mut clauses = vec!["status = 'published'".to_string(), "exemplar = ?1".to_string()];
        let mut args: Vec<Box<dyn rusqlite::ToSql>> = vec![Box::new(query.exemplars)];
        if let Some(sensor) = query.sensor {
            args.push(Box::new(sensor.as_str()));
            clauses.push(format!("sensor_type = ?{}", args.len()));
        }
        if let Some(class) = query.class_id {
            args.push(Box::new(class.0 as i64));
            clauses.push(format!("class_id = ?{}", args.len()));
        }
        if let Some(after) = query.after {
            args.push(Box::new(ns(after.published_at)));
            let p = args.len();
            args.push(Box::new(after.id.0 as i64));
            let i = args.len();
            clauses.push(format!("(published_ns < ?{p} OR (published_ns = ?{p} AND id < ?{i}))"));
        }
        (format!("WHERE {}", clauses.join(" AND ")), args)
    }
}

const INQUIRY_COLUMNS: &str = "id, author_id, class_id, sensor_type, title, description, notes, status, exemplar, created_ns, published_ns, override_json";

struct InquiryRow {
    id: i64,
    author: i64,
    class: i64,
    sensor: String,
    title: String,
    description: String,
    notes: String,
    status: String,
    exemplar: bool,
    created: i64,
    published: Option<i64>,
    override_json: Option<String>,
}

impl InquiryRow {
    fn read(r: &Row<'_>) -> rusqlite::Result<Self> {
        Ok(InquiryRow {
            id: r.get(0)?,
            author: r.get(1)?,
            class: r.get(2)?,
            sensor: r.get(3)?,
            title: r.get(4)?,
            description: r.get(5)?,
            notes: r.get(6)?,
            status: r.get(7)?,
            exemplar: r.get(8)?,
            created: r.get(9)?,
            published: r.get(10)?,
            override_json: r.get(11)?,
        })
    }
}

impl Repository for SqlRepository<'_> {
    fn next_id(&self, kind: IdKind) -> Result<u64, StorageError> {
        let table = match kind {
            IdKind::User => "users",
            IdKind::Class => "classes",
            IdKind::Inquiry => "inquiries",
            IdKind::Comment => "comments",
        };
        let max: i64 = self
            .conn
            .query_row(&format!("SELECT COALESCE(MAX(id), 0) FROM {table}"), [], |r| r.get(0))
            .map_err(storage)?;
        Ok(max as u64 + 1)
    }

    fn user(&self, id: UserId) -> Result<Option<UserAccount>, StorageError> {
        self.user_where("id = ?1", &(id.0 as i64))
    }

    fn user_by_name(&self, username: &str) -> Result<Option<UserAccount>, StorageError> {
        self.user_where("username = ?1", &username)
    }

    fn insert_user(&mut self, user: &UserAccount) -> Result<(), StorageError> {
        self.conn
            .execute(
                "INSERT INTO users (id, username, role) VALUES (?1, ?2, ?3)",
                params![user.id.0 as i64, user.username, role_str(user.role)],
            )
            .map_err(storage)?;
        Ok(())
    }

    fn add_membership(&mut self, m: Membership) -> Result<(), StorageError> {
        self.conn
            .execute(
                "INSERT OR IGNORE INTO memberships (user_id, class_id) VALUES (?1, ?2)",
                params![m.user_id.0 as i64, m.class_id.0 as i64],
            )
            .map_err(storage)?;
        Ok(())
    }

    fn class(&self, id: ClassId) -> Result<Option<ClassGroup>, StorageError> {
        let row = self
            .conn
            .query_row(
                "SELECT name, join_code, teacher_id, created_ns FROM classes WHERE id = ?1",
                [id.0 as i64],
                |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, i64>(2)?, r.get::<_, i64>(3)?)),
            )
            .optional()
            .map_err(storage)?;
        row.map(|(name, code, teacher, created)| {
            Ok(ClassGroup {
                id,
                name,
                join_code: JoinCode::parse(&code).ok_or_else(|| StorageError(format!("bad join code `{code}`")))?,
                teacher_id: UserId(teacher as u64),
                created_at: from_ns(created),
            })
        })
        .transpose()
    }

    fn lookup_code(&self, code: &JoinCode) -> Result<CodeLookup, StorageError> {
        let row = self
            .conn
            .query_row("SELECT class_id, active FROM join_codes WHERE code = ?1", [code.as_str()], |r| {
                Ok((r.get::<_, i64>(0)?, r.get::<_, bool>(1)?))
            })
            .optional()
            .map_err(storage)?;
        Ok(match row {
            Some((id, true)) => CodeLookup::Active(ClassId(id as u64)),
            Some((id, false)) => CodeLookup::Revoked(ClassId(id as u64)),
            None => CodeLookup::Unknown,
        })
    }

    fn insert_class(&mut self, class: &ClassGroup) -> Result<(), StorageError> {
        self.conn
            .execute(
                "INSERT INTO classes (id, name, join_code, teacher_id, created_ns) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![class.id.0 as i64, class.name, class.join_code.as_str(), class.teacher_id.0 as i64, ns(class.created_at)],
            )
            .map_err(storage)?;
        self.conn
            .execute(
                "INSERT INTO join_codes (code, class_id, active) VALUES (?1, ?2, 1)",
                params![class.join_code.as_str(), class.id.0 as i64],
            )
            .map_err(storage)?;
        Ok(())
    }

    fn replace_join_code(&mut self, id: ClassId, code: &JoinCode) -> Result<(), StorageError> {
        let class = id.0 as i64;
        self.conn.execute("UPDATE join_codes SET active = 0 WHERE class_id = ?1", [class]).map_err(storage)?;
        self.conn
            .execute("INSERT INTO join_codes (code, class_id, active) VALUES (?1, ?2, 1)", params![code.as_str(), class])
            .map_err(storage)?;
        self.conn
            .execute("UPDATE classes SET join_code = ?1 WHERE id = ?2", params![code.as_str(), class])
            .map_err(storage)?;
        Ok(())
    }

    fn inquiry(&self, id: InquiryId) -> Result<Option<Inquiry>, StorageError> {
        Ok(self.select_inquiries("WHERE id = ?1", &[&(id.0 as i64)])?.pop())
    }

    fn insert_inquiry(&mut self, i: &Inquiry) -> Result<(), StorageError> {
        self.conn
            .execute(
                &format!("INSERT INTO inquiries ({INQUIRY_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)"),
                params![
                    i.id.0 as i64,
                    i.author_id.0 as i64,
                    i.class_id.0 as i64,
                    i.sensor_type.as_str(),
                    i.title,
                    i.description,
                    i.notes,
                    if i.is_published() { "published" } else { "draft" },
                    i.exemplar,
                    ns(i.created_at),
                    i.published_at.map(ns),
                    i.manual_score_override.as_ref().map(to_json).transpose()?,
                ],
            )
            .map_err(storage)?;
        self.write_slots_and_lineage(i)
    }

    fn update_inquiry(&mut self, i: &Inquiry) -> Result<(), StorageError> {
        let changed = self
            .conn
            .execute(
                "UPDATE inquiries SET title = ?2, description = ?3, notes = ?4, status = ?5, published_ns = ?6, override_json = ?7 WHERE id = ?1",
                params![
                    i.id.0 as i64,
                    i.title,
                    i.description,
                    i.notes,
                    if i.is_published() { "published" } else { "draft" },
                    i.published_at.map(ns),
                    i.manual_score_override.as_ref().map(to_json).transpose()?,
                ],
            )
            .map_err(storage)?;
        if changed != 1 {
            return Err(StorageError(format!("no inquiry {}", i.id)));
        }
        self.write_slots_and_lineage(i)
    }

    fn inquiries(&self) -> Result<Vec<Inquiry>, StorageError> {
        self.select_inquiries("ORDER BY id", &[])
    }

    fn discover(&self, query: &DiscoverQuery) -> Result<Vec<Inquiry>, StorageError> {
        let (clause, args) = Self::discover_sql(query);
        let limit = query.limit.map_or(String::new(), |n| format!(" LIMIT {n}"));
        let refs: Vec<&dyn rusqlite::ToSql> = args.iter().map(|a| a.as_ref()).collect();
        self.select_inquiries(&format!("{clause} ORDER BY published_ns DESC, id DESC{limit}"), &refs)
    }

    fn discover_count(&self, query: &DiscoverQuery) -> Result<usize, StorageError> {
        let all = DiscoverQuery { after: None, limit: None, ..query.clone() };
        let (clause, args) = Self::discover_sql(&all);
        let refs: Vec<&dyn rusqlite::ToSql> = args.iter().map(|a| a.as_ref()).collect();
        let n: i64 = self
            .conn
            .query_row(&format!("SELECT COUNT(*) FROM inquiries {clause}"), refs.as_slice(), |r| r.get(0))
            .map_err(storage)?;
        Ok(n as usize)
    }

    fn insert_comment(&mut self, c: &Comment) -> Result<(), StorageError> {
        self.conn
            .execute(
                "INSERT INTO comments (id, inquiry_id, author_id, body, created_ns) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![c.id.0 as i64, c.inquiry_id.0 as i64, c.author_id.0 as i64, c.body, ns(c.created_at)],
            )
            .map_err(storage)?;
        Ok(())
    }

    fn comments(&self, inquiry: InquiryId) -> Result<Vec<Comment>, StorageError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT id, author_id, body, created_ns FROM comments WHERE inquiry_id = ?1 ORDER BY id")
            .map_err(storage)?;
        let rows = stmt
            .query_map([inquiry.0 as i64], |r| {
                Ok(Comment {
                    id: CommentId(r.get::<_, i64>(0)? as u64),
                    inquiry_id: inquiry,
                    author_id: UserId(r.get::<_, i64>(1)? as u64),
                    body: r.get(2)?,
                    created_at: from_ns(r.get(3)?),
                })
            })
            .map_err(storage)?;
        rows.collect::<Result<_, _>>().map_err(storage)
    }

    fn append_event(&mut self, event: &EventRecord) -> Result<(), StorageError> {
        self.conn
            .execute(
                "INSERT INTO events (timestamp_ns, record) VALUES (?1, ?2)",
                params![ns(event.timestamp), to_json(event)?],
            )
            .map_err(storage)?;
        Ok(())
    }

    fn last_event_time(&self) -> Result<Option<DateTime<Utc>>, StorageError> {
        self.conn
            .query_row("SELECT timestamp_ns FROM events ORDER BY seq DESC LIMIT 1", [], |r| r.get::<_, i64>(0))
            .optional()
            .map(|v| v.map(from_ns))
            .map_err(storage)
    }

    fn events(&self) -> Result<Vec<EventRecord>, StorageError> {
        let mut stmt = self.conn.prepare_cached("SELECT record FROM events ORDER BY seq").map_err(storage)?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(storage)?;
        let mut out = Vec::new();
        for row in rows {
            out.push(from_json(&row.map_err(storage)?)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PhotoMeta {
    pub id: String,
    pub media_type: String,
    pub size: u64,
}

/// Owner of the SQLite connection.
pub struct Store {
    conn: Connection,
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        Self::init(Connection::open(path).map_err(|e| StorageError(format!("{}: {e}", path.display())))?)
    }

    pub fn in_memory() -> Result<Self, StorageError> {
        Self::init(Connection::open_in_memory().map_err(storage)?)
    }

    fn init(conn: Connection) -> Result<Self, StorageError> {
        conn.execute_batch(SCHEMA).map_err(storage)?;
        conn.pragma_update(None, "journal_mode", "WAL").map_err(storage)?;
        Ok(Store { conn })
    }

    pub fn conn(&self) -> &Connection {
        &self.conn
    }

    pub fn repo(&self) -> SqlRepository<'_> {
        SqlRepository::new(&self.conn)
    }

    /// Runs `f` in one transaction, committing only if it succeeds.
    pub fn transaction<T, E: From<StorageError>>(
        &mut self,
        f: impl FnOnce(&Transaction<'_>) -> Result<T, E>,
    ) -> Result<T, E> {
        let tx = self.conn.transaction().map_err(storage)?;
        let out = f(&tx)?;
        tx.commit().map_err(storage)?;
        Ok(out)
    }

    pub fn is_empty(&self) -> Result<bool, StorageError> {
        let n: i64 = self.conn.query_row("SELECT COUNT(*) FROM events", [], |r| r.get(0)).map_err(storage)?;
        Ok(n == 0)
    }
}

pub fn set_credentials(conn: &Connection, user: UserId, phc: &str) -> Result<(), StorageError> {
    conn.execute("INSERT OR REPLACE INTO credentials (user_id, phc) VALUES (?1, ?2)", params![user.0 as i64, phc])
        .map_err(storage)?;
    Ok(())
}

pub fn credentials(conn: &Connection, user: UserId) -> Result<Option<String>, StorageError> {
    conn.query_row("SELECT phc FROM credentials WHERE user_id = ?1", [user.0 as i64], |r| r.get(0))
        .optional()
        .map_err(storage)
}

pub fn insert_session(conn: &Connection, token: &str, user: UserId, expires: DateTime<Utc>) -> Result<(), StorageError> {
    conn.execute(
        "INSERT INTO sessions (token, user_id, expires_ns) VALUES (?1, ?2, ?3)",
        params![token, user.0 as i64, ns(expires)],
    )
    .map_err(storage)?;
    Ok(())
}

/// The user a token belongs to, if it exists and has not expired.
pub fn session_user(conn: &Connection, token: &str, now: DateTime<Utc>) -> Result<Option<UserId>, StorageError> {
    conn.query_row(
        "SELECT user_id FROM sessions WHERE token = ?1 AND expires_ns > ?2",
        params![token, ns(now)],
        |r| r.get::<_, i64>(0),
    )
    .optional()
    .map(|v| v.map(|id| UserId(id as u64)))
    .map_err(storage)
}

pub fn insert_photo(conn: &Connection, meta: &PhotoMeta, by: UserId, at: DateTime<Utc>) -> Result<(), StorageError> {
    conn.execute(
        "INSERT OR IGNORE INTO photos (id, media_type, size, uploaded_by, uploaded_ns) VALUES (?1, ?2, ?3, ?4, ?5)",
        params![meta.id, meta.media_type, meta.size as i64, by.0 as i64, ns(at)],
    )
    .map_err(storage)?;
    Ok(())
}

pub fn photo(conn: &Connection, id: &str) -> Result<Option<PhotoMeta>, StorageError> {
    conn.query_row("SELECT media_type, size FROM photos WHERE id = ?1", [id], |r| {
        Ok(PhotoMeta { id: id.to_string(), media_type: r.get(0)?, size: r.get::<_, i64>(1)? as u64 })
    })
    .optional()
    .map_err(storage)
}

/// Members of a class: its teacher plus everyone who joined.
pub fn class_members(conn: &Connection, class: ClassId) -> Result<Vec<UserId>, StorageError> {
    let mut stmt = conn.prepare_cached("SELECT user_id FROM memberships WHERE class_id = ?1 ORDER BY seq").map_err(storage)?;
    let rows = stmt.query_map([class.0 as i64], |r| r.get::<_, i64>(0)).map_err(storage)?;
    rows.map(|r| r.map(|id| UserId(id as u64)).map_err(storage)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use sensorlab_core::event::payload::InquiryText;
    use sensorlab_core::{MemoryRepository, Workflow};

    #[test]
    fn sql_and_memory_repositories_agree() {
        let wf = Workflow::default();
        let t = Utc.with_ymd_and_hms(2021, 6, 1, 9, 0, 0).unwrap();
        let mut store = Store::in_memory().unwrap();
        let mut mem = MemoryRepository::new();
        fn history<R: Repository>(wf: &Workflow, repo: &mut R, t: DateTime<Utc>) {
            use rand::SeedableRng;
            let mut rng = rand::rngs::StdRng::seed_from_u64(3);
            let teacher = wf.register(repo, "t", Role::Teacher, t).unwrap();
            let class = wf.create_class(repo, teacher.id, "7A", &mut rng, t).unwrap();
            let s = wf.register(repo, "s", Role::Student, t).unwrap();
            wf.join_class(repo, s.id, class.join_code.as_str(), t).unwrap();
            let text = InquiryText { title: "Pulse".into(), description: "I think".into(), notes: String::new() };
            let i = wf.create_inquiry(repo, s.id, None, SensorType::HeartRate, text, t).unwrap();
            let m = sensorlab_protocol::Measurement {
                sensor_type: SensorType::HeartRate,
                timestamp_ms: 5,
                values: vec![sensorlab_protocol::Centi(7200)],
            };
            wf.capture(repo, s.id, i.id, sensorlab_core::Capture { measurement: m, label: "rest".into(), photo_ref: None }, t).unwrap();
            wf.publish(repo, s.id, i.id, t).unwrap();
            wf.derive(repo, s.id, i.id, LineageKind::Remix, None, t).unwrap();
            wf.comment(repo, s.id, i.id, "nice", t).unwrap();
        }
        store.transaction(|tx| {
            history(&wf, &mut SqlRepository::new(tx), t);
            Ok::<_, StorageError>(())
        })
        .unwrap();
        history(&wf, &mut mem, t);
        let sql = store.repo();
        assert_eq!(sql.inquiries().unwrap(), mem.inquiries().unwrap());
        assert_eq!(sql.events().unwrap(), mem.events().unwrap());
        assert_eq!(sql.user_by_name("s").unwrap(), mem.user_by_name("s").unwrap());
        assert_eq!(sql.comments(InquiryId(1)).unwrap(), mem.comments(InquiryId(1)).unwrap());
        let q = DiscoverQuery::default();
        assert_eq!(sql.discover(&q).unwrap(), mem.discover(&q).unwrap());
        assert_eq!(sql.discover_count(&q).unwrap(), 1);
    }

    #[test]
    fn slot_index_is_capped_by_schema() {
        let store = Store::in_memory().unwrap();
        let err = store
            .conn
            .execute("INSERT INTO slots (inquiry_id, idx, measurement_json, label) VALUES (1, 3, '{}', 'x')", []);
        assert!(err.is_err());
    }
}
