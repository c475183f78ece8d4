//! Loads every artifact of one device into a [`CaseBundle`].
//!
//! Evidence is only ever read. Encrypted backups are decrypted into a private
//! temporary directory, never next to the originals.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crypt::{decrypt_bytes, BackupKey};
use crate::db::{load_chat_store, load_contacts, DbKind, DbSource};
use crate::layout;
use crate::log::{merge, parse_log_text, LogGrammar, ParsedLog};
use crate::model::{AvatarFile, BackupSet, CaseBundle, MediaFile, ParseWarning};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}: no such directory")]
    MissingRoot(PathBuf),
    #[error("{0}: neither wa.db nor msgstore.db could be loaded")]
    NoEvidence(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub grammar: LogGrammar,
    pub key: BackupKey,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Files directly inside `dir`, by name. A missing directory is empty.
fn list_files(dir: &Path) -> Result<Vec<String>, IngestError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(dir)(e)),
    };
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io(dir))?;
        if entry.file_type().map_err(io(dir))?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Relative paths of every file under `relative_dir`, recursively.
fn walk(root: &Path, relative_dir: &str, out: &mut Vec<String>) -> Result<(), IngestError> {
    let dir = root.join(relative_dir);
    let entries = match std::fs::read_dir(&dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io(&dir)(e)),
    };
    for entry in entries {
        let entry = entry.map_err(io(&dir))?;
        let relative = layout::join(relative_dir, &entry.file_name().to_string_lossy());
        let kind = entry.file_type().map_err(io(&dir))?;
        if kind.is_dir() {
            walk(root, &relative, out)?;
        } else if kind.is_file() {
            out.push(relative);
        }
    }
    Ok(())
}

/// Warnings name files relative to the evidence root.
fn relativize(warnings: Vec<ParseWarning>, absolute: &Path, relative: &str) -> Vec<ParseWarning> {
    let absolute = absolute.display().to_string();
    warnings
        .into_iter()
        .map(|mut w| {
            if w.source == absolute {
                w.source = relative.to_string();
            }
            w
        })
        .collect()
}

/// The phone number in a `me` file: the first run of 7 to 15 digits.
pub fn parse_me(bytes: &[u8]) -> Option<String> {
    bytes
        .split(|b| !b.is_ascii_digit())
        .find(|run| (7..=15).contains(&run.len()))
        .map(|run| String::from_utf8_lossy(run).into_owned())
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

fn load_backup(
    root: &Path,
    relative: &str,
    options: &IngestOptions,
    scratch: &Path,
    index: usize,
) -> Result<(BackupSet, Vec<ParseWarning>), String> {
    let bytes = std::fs::read(root.join(relative)).map_err(|e| e.to_string())?;
    let plaintext = decrypt_bytes(&bytes, &options.key).map_err(|e| e.to_string())?;
    let plain = scratch.join(format!("backup-{index}.db"));
    std::fs::write(&plain, plaintext).map_err(|e| e.to_string())?;
    let (messages, chat_list) = load_chat_store(&plain).map_err(|e| e.to_string())?;
    let mut warnings = relativize(messages.warnings, &plain, relative);
    warnings.extend(relativize(chat_list.warnings, &plain, relative));
    let set = BackupSet {
        path: relative.to_string(),
        messages: messages.records,
    };
    Ok((set, warnings))
}

/// Reads the layout under `root`. Absent optional artifacts become warnings or
/// empty collections; only a root with no usable database is an error.
pub fn load_bundle(root: impl AsRef<Path>, options: &IngestOptions) -> Result<CaseBundle, IngestError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let mut bundle = CaseBundle::default();
    let mut warnings = Vec::new();
    let mut any_db = false;

    let contacts_path = root.join(layout::CONTACTS_DB);
    if contacts_path.is_file() {
        match DbSource::open(&contacts_path, DbKind::Contacts).and_then(|s| load_contacts(&s)) {
            Ok(loaded) => {
                any_db = true;
                bundle.contacts = loaded.records;
                warnings.extend(relativize(loaded.warnings, &contacts_path, layout::CONTACTS_DB));
            }
            Err(e) => warnings.push(ParseWarning::new(layout::CONTACTS_DB, None, e.to_string())),
        }
    } else {
        warnings.push(ParseWarning::new(layout::CONTACTS_DB, None, "file not found"));
    }

    let chat_path = root.join(layout::CHAT_DB);
    if chat_path.is_file() {
        match load_chat_store(&chat_path) {
            Ok((messages, chat_list)) => {
                any_db = true;
                bundle.messages = messages.records;
                bundle.chat_list = chat_list.records;
                warnings.extend(relativize(messages.warnings, &chat_path, layout::CHAT_DB));
                warnings.extend(relativize(chat_list.warnings, &chat_path, layout::CHAT_DB));
            }
            Err(e) => warnings.push(ParseWarning::new(layout::CHAT_DB, None, e.to_string())),
        }
    } else {
        warnings.push(ParseWarning::new(layout::CHAT_DB, None, "file not found"));
    }
    if !any_db {
        return Err(IngestError::NoEvidence(root.to_path_buf()));
    }

    let scratch = tempfile::tempdir().map_err(io(root))?;
    for (index, name) in list_files(&root.join(layout::BACKUPS))?
        .into_iter()
        .filter(|n| layout::is_backup_name(n))
        .enumerate()
    {
        let relative = layout::join(layout::BACKUPS, &name);
        match load_backup(root, &relative, options, scratch.path(), index) {
            Ok((set, set_warnings)) => {
                bundle.backups.push(set);
                warnings.extend(set_warnings);
            }
            Err(message) => warnings.push(ParseWarning::new(relative, None, message)),
        }
    }

    let log_names: Vec<String> = list_files(&root.join(layout::LOGS))?
        .into_iter()
        .filter(|n| layout::is_log_name(n))
        .collect();
    if log_names.is_empty() {
        warnings.push(ParseWarning::new(layout::LOGS, None, "no log files"));
    }
    let mut parts: Vec<ParsedLog> = Vec::new();
    for name in log_names {
        let relative = layout::join(layout::LOGS, &name);
        let path = root.join(&relative);
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        parts.push(parse_log_text(&String::from_utf8_lossy(&bytes), &relative, &options.grammar));
    }
    let merged = merge(parts);
    bundle.log_events = merged.events;
    warnings.extend(merged.warnings);

    let mut media = Vec::new();
    walk(root, layout::MEDIA, &mut media)?;
    media.sort();
    for relative in media {
        let path = root.join(&relative);
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        bundle.media_inventory.push(MediaFile {
            size: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
            sent: layout::is_sent_media(&relative),
            path: relative,
        });
    }

    for dir in [layout::AVATARS, layout::PROFILE_PICTURES] {
        for name in list_files(&root.join(dir))? {
            if let Some(jid) = name.strip_suffix(layout::AVATAR_EXTENSION) {
                bundle.avatar_inventory.push(AvatarFile {
                    jid: jid.to_string(),
                    path: layout::join(dir, &name),
                });
            }
        }
    }
    bundle.avatar_inventory.sort_by(|a, b| a.path.cmp(&b.path));

    match std::fs::read(root.join(layout::ME)) {
        Ok(bytes) => {
            bundle.registered_number = parse_me(&bytes);
            if bundle.registered_number.is_none() {
                warnings.push(ParseWarning::new(layout::ME, None, "no phone number in file"));
            }
        }
        Err(_) => warnings.push(ParseWarning::new(layout::ME, None, "file not found")),
    }
    bundle.own_avatar_present = root.join(layout::ME_AVATAR).is_file();

    bundle.warnings = warnings;
    Ok(bundle)
}
