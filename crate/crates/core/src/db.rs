//! Read-only loaders for `wa.db` and `msgstore.db`.
//!
//! Columns are looked up by name. Extra columns are ignored and missing optional
//! columns decode as absent, so schema drift between WhatsApp builds does not
//! break loading. Evidence files are opened with SQLite's `immutable` URI flag:
//! no journal, WAL or lock file is ever created next to them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use rusqlite::types::Value;
use rusqlite::{Connection, OpenFlags};
use thiserror::Error;

use crate::model::records::PHONEBOOK_COLUMNS;
use crate::model::{
    parse_jid, parse_message_key, ChatListRecord, ContactRecord, EpochMillis, EpochSeconds,
    MessageRecord, ParseWarning, WaJid,
};

pub const SQLITE_MAGIC: &[u8; 16] = b"SQLite format 3\0";

pub const CONTACTS_TABLE: &str = "wa_contacts";
pub const MESSAGES_TABLE: &str = "messages";
pub const CHAT_LIST_TABLE: &str = "chat_list";

/// `wa_contacts` columns and the SQL types the forge declares for them.
pub const WA_CONTACTS_SCHEMA: &[(&str, &str)] = &[
    ("_id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("jid", "TEXT NOT NULL"),
    ("is_whatsapp_user", "BOOLEAN NOT NULL"),
    ("unseen_msg_count", "INTEGER"),
    ("photo_ts", "INTEGER"),
    ("thumb_ts", "INTEGER"),
    ("photo_id_timestamp", "INTEGER"),
    ("wa_name", "TEXT"),
    ("status", "TEXT"),
    ("sort_name", "TEXT"),
    ("number", "TEXT"),
    ("raw_contact_id", "INTEGER"),
    ("display_name", "TEXT"),
    ("phone_type", "INTEGER"),
    ("phone_label", "TEXT"),
    ("given_name", "TEXT"),
    ("family_name", "TEXT"),
];

pub const MESSAGES_SCHEMA: &[(&str, &str)] = &[
    ("_id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("key_remote_jid", "TEXT NOT NULL"),
    ("key_from_me", "INTEGER"),
    ("key_id", "TEXT NOT NULL"),
    ("status", "INTEGER"),
    ("needs_push", "INTEGER"),
    ("data", "TEXT"),
    ("timestamp", "INTEGER"),
    ("media_url", "TEXT"),
    ("media_mime_type", "TEXT"),
    ("media_wa_type", "TEXT"),
    ("media_size", "INTEGER"),
    ("media_name", "TEXT"),
    ("media_hash", "TEXT"),
    ("media_duration", "INTEGER"),
    ("latitude", "REAL"),
    ("longitude", "REAL"),
    ("thumb_image", "TEXT"),
    ("remote_resource", "TEXT"),
    ("received_timestamp", "INTEGER"),
    ("send_timestamp", "INTEGER"),
    ("receipt_server_timestamp", "INTEGER"),
    ("receipt_device_timestamp", "INTEGER"),
    ("raw_data", "BLOB"),
    ("recipient_count", "INTEGER"),
];

pub const CHAT_LIST_SCHEMA: &[(&str, &str)] = &[
    ("_id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("key_remote_jid", "TEXT UNIQUE"),
    ("message_table_id", "INTEGER"),
];

#[derive(Debug, Error)]
pub enum DbError {
    #[error("{0}: not a SQLite 3 database")]
    NotSqlite(PathBuf),
    #[error("{path}: required table `{table}` is missing")]
    MissingTable { path: PathBuf, table: &'static str },
    #[error("{path}: opened as {found:?} but {wanted:?} was requested")]
    WrongKind {
        path: PathBuf,
        found: DbKind,
        wanted: DbKind,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Sqlite {
        path: PathBuf,
        source: rusqlite::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbKind {
    Contacts,
    ChatStore,
}

impl DbKind {
    fn required_tables(self) -> &'static [&'static str] {
        match self {
            DbKind::Contacts => &[CONTACTS_TABLE],
            DbKind::ChatStore => &[MESSAGES_TABLE, CHAT_LIST_TABLE],
        }
    }
}

/// A validated database file of a known kind.
#[derive(Debug, Clone)]
pub struct DbSource {
    pub path: PathBuf,
    pub db_kind: DbKind,
    pub table_names_found: Vec<String>,
}

/// Records plus the warnings raised while decoding them.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub warnings: Vec<ParseWarning>,
}

pub fn has_sqlite_magic(bytes: &[u8]) -> bool {
    bytes.len() >= SQLITE_MAGIC.len() && &bytes[..SQLITE_MAGIC.len()] == SQLITE_MAGIC
}

fn sqlite_err(path: &Path) -> impl Fn(rusqlite::Error) -> DbError + '_ {
    move |source| DbError::Sqlite {
        path: path.to_path_buf(),
        source,
    }
}

/// `file:` URI for a read-only, never-written open.
fn immutable_uri(path: &Path) -> String {
    let absolute = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut uri = String::from("file:");
    for byte in absolute.to_string_lossy().bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' | b'/' => {
                uri.push(byte as char)
            }
            _ => uri.push_str(&format!("%{byte:02X}")),
        }
    }
    uri.push_str("?mode=ro&immutable=1");
    uri
}

fn open_read_only(path: &Path) -> Result<Connection, DbError> {
    Connection::open_with_flags(
        immutable_uri(path),
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_URI | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
    .map_err(sqlite_err(path))
}

impl DbSource {
    pub fn open(path: impl AsRef<Path>, db_kind: DbKind) -> Result<DbSource, DbError> {
        let path = path.as_ref();
        let mut header = [0u8; 16];
        let read = File::open(path)
            .and_then(|mut f| f.read(&mut header))
            .map_err(|source| DbError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        if read < header.len() || !has_sqlite_magic(&header) {
            return Err(DbError::NotSqlite(path.to_path_buf()));
        }
        let conn = open_read_only(path)?;
        let table_names_found = table_names(&conn).map_err(sqlite_err(path))?;
        for table in db_kind.required_tables() {
            if !table_names_found.iter().any(|t| t == table) {
                return Err(DbError::MissingTable {
                    path: path.to_path_buf(),
                    table,
                });
            }
        }
        Ok(DbSource {
            path: path.to_path_buf(),
            db_kind,
            table_names_found,
        })
    }

    fn expect_kind(&self, wanted: DbKind) -> Result<(), DbError> {
        if self.db_kind == wanted {
            Ok(())
        } else {
            Err(DbError::WrongKind {
                path: self.path.clone(),
                found: self.db_kind,
                wanted,
            })
        }
    }

    fn label(&self) -> String {
        self.path.display().to_string()
    }
}

fn table_names(conn: &Connection) -> rusqlite::Result<Vec<String>> {
    let mut stmt = conn.prepare("SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name")?;
    let names = stmt.query_map([], |row| row.get::<_, String>(0))?;
    names.collect()
}

/// One row as a column-name map, with typed accessors that record mismatches.
struct Row<'a> {
    values: HashMap<String, Value>,
    table: &'static str,
    source: &'a str,
    id: i64,
    warnings: &'a mut Vec<ParseWarning>,
}

impl Row<'_> {
    fn warn(&mut self, column: &str, message: String) {
        self.warnings.push(ParseWarning::new(
            self.source,
            Some(format!("{} _id={} column {}", self.table, self.id, column)),
            message,
        ));
    }

    fn int(&mut self, column: &str) -> Option<i64> {
        match self.values.get(column)? {
            Value::Null => None,
            Value::Integer(v) => Some(*v),
            Value::Real(v) if v.fract() == 0.0 => Some(*v as i64),
            Value::Text(t) if t.trim().parse::<i64>().is_ok() => t.trim().parse().ok(),
            other => {
                let msg = format!("expected integer, found {}", describe(other));
                self.warn(column, msg);
                None
            }
        }
    }

    fn text(&mut self, column: &str) -> Option<String> {
        match self.values.get(column)? {
            Value::Null => None,
            Value::Text(t) => Some(t.clone()),
            Value::Integer(v) => Some(v.to_string()),
            Value::Real(v) => Some(v.to_string()),
            Value::Blob(b) => match String::from_utf8(b.clone()) {
                Ok(s) => Some(s),
                Err(_) => {
                    self.warn(column, "expected text, found non-UTF-8 blob".into());
                    None
                }
            },
        }
    }

    fn real(&mut self, column: &str) -> Option<f64> {
        match self.values.get(column)? {
            Value::Null => None,
            Value::Real(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            Value::Text(t) if t.trim().parse::<f64>().is_ok() => t.trim().parse().ok(),
            other => {
                let msg = format!("expected real, found {}", describe(other));
                self.warn(column, msg);
                None
            }
        }
    }

    fn blob(&mut self, column: &str) -> Option<Vec<u8>> {
        match self.values.get(column)? {
            Value::Null => None,
            Value::Blob(b) => Some(b.clone()),
            Value::Text(t) => Some(t.as_bytes().to_vec()),
            other => {
                let msg = format!("expected blob, found {}", describe(other));
                self.warn(column, msg);
                None
            }
        }
    }

    /// An epoch column where NULL and a missing column both mean "absent".
    fn epoch(&mut self, column: &str) -> i64 {
        let value = self.int(column).unwrap_or(crate::model::time::ABSENT);
        if value < crate::model::time::ABSENT {
            self.warn(column, format!("negative timestamp {value}"));
            return crate::model::time::ABSENT;
        }
        value
    }

    fn jid(&mut self, column: &str) -> WaJid {
        let raw = self.text(column).unwrap_or_default();
        match parse_jid(&raw) {
            Ok(jid) => jid,
            Err(e) => {
                self.warn(column, e.to_string());
                WaJid::unrecognized(&raw)
            }
        }
    }
}

fn describe(value: &Value) -> &'static str {
    match value {
        Value::Null => "NULL",
        Value::Integer(_) => "integer",
        Value::Real(_) => "real",
        Value::Text(_) => "text",
        Value::Blob(_) => "blob",
    }
}

/// Reads every row of `table` ordered by `_id`, then by rowid.
fn for_each_row<T>(
    source: &DbSource,
    table: &'static str,
    required: &[&str],
    mut decode: impl FnMut(&mut Row<'_>) -> T,
) -> Result<Loaded<T>, DbError> {
    let conn = open_read_only(&source.path)?;
    let err = sqlite_err(&source.path);
    let label = source.label();
    let mut warnings = Vec::new();

    let columns: BTreeSet<String> = {
        let mut stmt = conn.prepare(&format!("PRAGMA table_info({table})")).map_err(&err)?;
        let names = stmt.query_map([], |row| row.get::<_, String>(1)).map_err(&err)?;
        names.collect::<rusqlite::Result<_>>().map_err(&err)?
    };
    for col in required {
        if !columns.contains(*col) {
            warnings.push(ParseWarning::new(
                label.clone(),
                Some(table.to_string()),
                format!("column `{col}` is missing"),
            ));
        }
    }
    let order = if columns.contains("_id") { "_id, rowid" } else { "rowid" };
    let mut stmt = conn
        .prepare(&format!("SELECT * FROM {table} ORDER BY {order}"))
        .map_err(&err)?;
    let names: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
    let mut rows = stmt.query([]).map_err(&err)?;
    let mut records = Vec::new();
    while let Some(row) = rows.next().map_err(&err)? {
        let mut values = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            values.insert(name.clone(), row.get::<_, Value>(i).map_err(&err)?);
        }
        let id = match values.get("_id") {
            Some(Value::Integer(v)) => *v,
            _ => -1,
        };
        let mut decoded = Row {
            values,
            table,
            source: &label,
            id,
            warnings: &mut warnings,
        };
        records.push(decode(&mut decoded));
    }
    Ok(Loaded { records, warnings })
}

pub fn load_contacts(source: &DbSource) -> Result<Loaded<ContactRecord>, DbError> {
    source.expect_kind(DbKind::Contacts)?;
    for_each_row(source, CONTACTS_TABLE, &["_id", "jid", "is_whatsapp_user"], |row| {
        let mut phonebook = BTreeMap::new();
        for column in PHONEBOOK_COLUMNS {
            if let Some(value) = row.text(column) {
                phonebook.insert(column.to_string(), value);
            }
        }
        ContactRecord {
            id: row.id,
            jid: row.jid("jid"),
            is_whatsapp_user: row.int("is_whatsapp_user").unwrap_or(0) != 0,
            unseen_msg_count: row.int("unseen_msg_count").unwrap_or(0),
            thumb_ts: EpochSeconds(row.epoch("thumb_ts")),
            photo_id_timestamp: EpochMillis(row.epoch("photo_id_timestamp")),
            wa_name: row.text("wa_name"),
            status_line: row.text("status"),
            phonebook,
            photo_ts: row.int("photo_ts").unwrap_or(0),
        }
    })
}

pub fn load_messages(source: &DbSource) -> Result<Loaded<MessageRecord>, DbError> {
    source.expect_kind(DbKind::ChatStore)?;
    let mut loaded = for_each_row(
        source,
        MESSAGES_TABLE,
        &["_id", "key_remote_jid", "key_from_me", "key_id", "status", "timestamp"],
        |row| {
            let key_id_raw = row.text("key_id").unwrap_or_default();
            let key_id = match parse_message_key(&key_id_raw) {
                Ok(k) => Some(k),
                Err(e) => {
                    row.warn("key_id", e.to_string());
                    None
                }
            };
            let remote_resource_raw = row.text("remote_resource");
            let mut remote_resource = Vec::new();
            for part in remote_resource_raw
                .iter()
                .flat_map(|r| r.split(','))
                .map(str::trim)
                .filter(|p| !p.is_empty())
            {
                match parse_jid(part) {
                    Ok(jid) => remote_resource.push(jid),
                    Err(e) => {
                        row.warn("remote_resource", e.to_string());
                        remote_resource.push(WaJid::unrecognized(part));
                    }
                }
            }
            MessageRecord {
                id: row.id,
                key_remote_jid: row.jid("key_remote_jid"),
                key_id_raw,
                key_id,
                from_me: row.int("key_from_me").unwrap_or(0) != 0,
                status_code: row.int("status").unwrap_or(0),
                timestamp: EpochMillis(row.epoch("timestamp")),
                received_timestamp: EpochMillis(row.epoch("received_timestamp")),
                receipt_server_timestamp: EpochMillis(row.epoch("receipt_server_timestamp")),
                receipt_device_timestamp: EpochMillis(row.epoch("receipt_device_timestamp")),
                send_timestamp: row.int("send_timestamp").unwrap_or(crate::model::time::ABSENT),
                needs_push: row.int("needs_push").unwrap_or(0),
                recipient_count: row.int("recipient_count"),
                remote_resource_raw,
                remote_resource,
                media_wa_type: row.int("media_wa_type").unwrap_or(0),
                data: row.text("data"),
                raw_data: row.blob("raw_data"),
                media_hash: row.text("media_hash"),
                media_url: row.text("media_url"),
                media_mime_type: row.text("media_mime_type"),
                media_size: row.int("media_size"),
                media_name: row.text("media_name"),
                media_duration: row.int("media_duration"),
                latitude: row.real("latitude"),
                longitude: row.real("longitude"),
                thumb_image: row.blob("thumb_image"),
            }
        },
    )?;
    let label = source.label();
    for m in &loaded.records {
        validate_message(m, &label, &mut loaded.warnings);
    }
    Ok(loaded)
}

/// Cross-field checks that do not prevent the row from loading.
fn validate_message(m: &MessageRecord, source: &str, warnings: &mut Vec<ParseWarning>) {
    let loc = || Some(format!("{MESSAGES_TABLE} _id={}", m.id));
    if !(0..=5).contains(&m.media_wa_type) {
        warnings.push(ParseWarning::new(
            source,
            loc(),
            format!("media_wa_type {} outside 0..=5", m.media_wa_type),
        ));
    }
    if let Some(hash) = &m.media_hash {
        if !hash.is_empty() && m.media_digest().is_none() {
            warnings.push(ParseWarning::new(
                source,
                loc(),
                "media_hash is not base64 of a 32-byte SHA-256 digest",
            ));
        }
    }
    if m.media_wa_type == crate::model::records::media_type::GEO {
        let lat_ok = m.latitude.is_some_and(|v| (-90.0..=90.0).contains(&v));
        let lon_ok = m.longitude.is_some_and(|v| (-180.0..=180.0).contains(&v));
        if !lat_ok || !lon_ok {
            warnings.push(ParseWarning::new(
                source,
                loc(),
                "geolocation message without valid latitude/longitude",
            ));
        }
    }
    if !m.from_me && !m.is_control() && !m.received_timestamp.is_present() {
        warnings.push(ParseWarning::new(
            source,
            loc(),
            "incoming message without received_timestamp",
        ));
    }
}

pub fn load_chat_list(source: &DbSource) -> Result<Loaded<ChatListRecord>, DbError> {
    source.expect_kind(DbKind::ChatStore)?;
    let mut loaded = for_each_row(
        source,
        CHAT_LIST_TABLE,
        &["_id", "key_remote_jid", "message_table_id"],
        |row| ChatListRecord {
            id: row.id,
            key_remote_jid: row.jid("key_remote_jid"),
            message_table_id: row.int("message_table_id").unwrap_or(-1),
        },
    )?;
    let conn = open_read_only(&source.path)?;
    let ids: BTreeSet<i64> = {
        let err = sqlite_err(&source.path);
        let mut stmt = conn
            .prepare(&format!("SELECT _id FROM {MESSAGES_TABLE}"))
            .map_err(&err)?;
        let ids = stmt.query_map([], |row| row.get::<_, i64>(0)).map_err(&err)?;
        ids.collect::<rusqlite::Result<_>>().map_err(&err)?
    };
    let label = source.label();
    for chat in &loaded.records {
        if !ids.contains(&chat.message_table_id) {
            loaded.warnings.push(ParseWarning::new(
                label.clone(),
                Some(format!("{CHAT_LIST_TABLE} _id={}", chat.id)),
                format!(
                    "message_table_id {} does not reference an existing message",
                    chat.message_table_id
                ),
            ));
        }
    }
    Ok(loaded)
}

/// Loads both chat-store tables from one file.
pub fn load_chat_store(
    path: impl AsRef<Path>,
) -> Result<(Loaded<MessageRecord>, Loaded<ChatListRecord>), DbError> {
    let source = DbSource::open(path, DbKind::ChatStore)?;
    Ok((load_messages(&source)?, load_chat_list(&source)?))
}
