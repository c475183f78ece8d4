//! Puts a simulated device on disk.

use std::path::Path;

use rusqlite::{params, Connection};

use super::world::{Snapshot, World};
use super::ForgeError;
use crate::crypt::{encrypt_fixture, BackupKey};
use crate::db::{CHAT_LIST_SCHEMA, CHAT_LIST_TABLE, CONTACTS_TABLE, MESSAGES_SCHEMA, MESSAGES_TABLE, WA_CONTACTS_SCHEMA};
use crate::layout;
use crate::model::{ChatListRecord, ContactRecord, MessageRecord};

fn io(path: &Path) -> impl Fn(std::io::Error) -> ForgeError + '_ {
    move |source| ForgeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sql(path: &Path) -> impl Fn(rusqlite::Error) -> ForgeError + '_ {
    move |source| ForgeError::Sqlite {
        path: path.to_path_buf(),
        source,
    }
}

fn put(root: &Path, relative: &str, bytes: &[u8]) -> Result<(), ForgeError> {
    let path = root.join(relative);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    std::fs::write(&path, bytes).map_err(io(&path))
}

fn create_table(conn: &Connection, table: &str, schema: &[(&str, &str)]) -> rusqlite::Result<()> {
    let columns: Vec<String> = schema.iter().map(|(c, t)| format!("{c} {t}")).collect();
    conn.execute_batch(&format!("CREATE TABLE {table} ({});", columns.join(", ")))
}

fn set_sequence(conn: &Connection, table: &str, value: i64) -> rusqlite::Result<()> {
    conn.execute("DELETE FROM sqlite_sequence WHERE name = ?1", [table])?;
    if value > 0 {
        conn.execute("INSERT INTO sqlite_sequence (name, seq) VALUES (?1, ?2)", params![table, value])?;
    }
    Ok(())
}

fn fresh(path: &Path) -> Result<Connection, ForgeError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io(dir))?;
    }
    if path.exists() {
        std::fs::remove_file(path).map_err(io(path))?;
    }
    let conn = Connection::open(path).map_err(sql(path))?;
    conn.execute_batch("CREATE TABLE android_metadata (locale TEXT); INSERT INTO android_metadata VALUES ('en_US');")
        .map_err(sql(path))?;
    Ok(conn)
}

fn write_contacts(path: &Path, contacts: &[ContactRecord], sequence: i64) -> Result<(), ForgeError> {
    let mut conn = fresh(path)?;
    let err = sql(path);
    create_table(&conn, CONTACTS_TABLE, WA_CONTACTS_SCHEMA).map_err(&err)?;
    let tx = conn.transaction().map_err(&err)?;
    {
        let mut stmt = tx
            .prepare(&format!(
                "INSERT INTO {CONTACTS_TABLE} (_id, jid, is_whatsapp_user, unseen_msg_count, photo_ts, thumb_ts, \
                 photo_id_timestamp, wa_name, status, number, raw_contact_id, display_name) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)"
            ))
            .map_err(&err)?;
        for c in contacts {
            let raw_contact_id: Option<i64> = c.phonebook.get("raw_contact_id").and_then(|v| v.parse().ok());
            stmt.execute(params![
                c.id,
                c.jid.raw,
                c.is_whatsapp_user,
                c.unseen_msg_count,
                c.photo_ts,
                c.thumb_ts.0,
                c.photo_id_timestamp.0,
                c.wa_name,
                c.status_line,
                c.phonebook.get("number"),
                raw_contact_id,
                c.phonebook.get("display_name"),
            ])
            .map_err(&err)?;
        }
        set_sequence(&tx, CONTACTS_TABLE, sequence).map_err(&err)?;
    }
    tx.commit().map_err(&err)
}

fn write_chat_store(
    path: &Path,
    messages: &[MessageRecord],
    chat_list: &[ChatListRecord],
    sequence: i64,
) -> Result<(), ForgeError> {
    let mut conn = fresh(path)?;
    let err = sql(path);
    create_table(&conn, MESSAGES_TABLE, MESSAGES_SCHEMA).map_err(&err)?;
    create_table(&conn, CHAT_LIST_TABLE, CHAT_LIST_SCHEMA).map_err(&err)?;
    let tx = conn.transaction().map_err(&err)?;
    {
        let mut stmt = tx
            .prepare(&format!(
                "INSERT INTO {MESSAGES_TABLE} (_id, key_remote_jid, key_from_me, key_id, status, needs_push, data, \
                 timestamp, media_url, media_mime_type, media_wa_type, media_size, media_name, media_hash, \
                 media_duration, latitude, longitude, thumb_image, remote_resource, received_timestamp, \
                 send_timestamp, receipt_server_timestamp, receipt_device_timestamp, raw_data, recipient_count) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16, ?17, ?18, ?19, \
                 ?20, ?21, ?22, ?23, ?24, ?25)"
            ))
            .map_err(&err)?;
        for m in messages {
            stmt.execute(params![
                m.id,
                m.key_remote_jid.raw,
                m.from_me,
                m.key_id_raw,
                m.status_code,
                m.needs_push,
                m.data,
                m.timestamp.0,
                m.media_url,
                m.media_mime_type,
                m.media_wa_type.to_string(),
                m.media_size,
                m.media_name,
                m.media_hash,
                m.media_duration,
                m.latitude,
                m.longitude,
                m.thumb_image,
                m.remote_resource_raw,
                m.received_timestamp.0,
                m.send_timestamp,
                m.receipt_server_timestamp.0,
                m.receipt_device_timestamp.0,
                m.raw_data,
                m.recipient_count,
            ])
            .map_err(&err)?;
        }
        let mut stmt = tx
            .prepare(&format!(
                "INSERT INTO {CHAT_LIST_TABLE} (_id, key_remote_jid, message_table_id) VALUES (?1, ?2, ?3)"
            ))
            .map_err(&err)?;
        let mut chat_sequence = 0;
        for c in chat_list {
            stmt.execute(params![c.id, c.key_remote_jid.raw, c.message_table_id])
                .map_err(&err)?;
            chat_sequence = chat_sequence.max(c.id);
        }
        set_sequence(&tx, MESSAGES_TABLE, sequence).map_err(&err)?;
        set_sequence(&tx, CHAT_LIST_TABLE, chat_sequence).map_err(&err)?;
    }
    tx.commit().map_err(&err)
}

fn encrypted_snapshot(snapshot: &Snapshot, scratch: &Path) -> Result<Vec<u8>, ForgeError> {
    let path = scratch.join(format!("{}.plain", snapshot.name));
    write_chat_store(&path, &snapshot.messages, &snapshot.chat_list, snapshot.sequence)?;
    let plaintext = std::fs::read(&path).map_err(io(&path))?;
    std::fs::remove_file(&path).map_err(io(&path))?;
    Ok(encrypt_fixture(&plaintext, &BackupKey::default())?)
}

/// Writes every artifact; returns the relative paths written, sorted.
pub(crate) fn write_all(world: &World, root: &Path) -> Result<Vec<String>, ForgeError> {
    std::fs::create_dir_all(root).map_err(io(root))?;
    let mut written = Vec::new();

    write_contacts(&root.join(layout::CONTACTS_DB), &world.contacts, world.contact_sequence())?;
    written.push(layout::CONTACTS_DB.to_string());
    write_chat_store(
        &root.join(layout::CHAT_DB),
        &world.live_messages(),
        &world.chat_list(),
        world.message_sequence(),
    )?;
    written.push(layout::CHAT_DB.to_string());

    let scratch = tempfile::tempdir().map_err(io(root))?;
    for (name, snapshot) in world.backups() {
        let relative = layout::join(layout::BACKUPS, name);
        put(root, &relative, &encrypted_snapshot(snapshot, scratch.path())?)?;
        written.push(relative);
    }

    for file in world.log_files() {
        let relative = layout::join(layout::LOGS, &file.name);
        put(root, &relative, file.text.as_bytes())?;
        written.push(relative);
    }
    for (relative, bytes) in &world.files {
        put(root, relative, bytes)?;
        written.push(relative.clone());
    }
    written.sort();
    Ok(written)
}
