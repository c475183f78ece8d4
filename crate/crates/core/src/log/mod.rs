//! WhatsApp log files (`whatsapp.log`, `whatsapp-<date>.log`) to classified events.

pub mod grammar;

use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, TimeZone};
use thiserror::Error;

pub use grammar::{CaptureRole, EventRule, LogGrammar};

use crate::model::{
    parse_group_id, parse_jid, parse_message_key, EpochMillis, JidKind, LogEvent, LogEventKind,
    ParseWarning, WaJid,
};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid grammar: {0}")]
    Grammar(String),
}

/// Events from one or more files, in order, with decoding warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub events: Vec<LogEvent>,
    pub warnings: Vec<ParseWarning>,
}

/// Classifies every line of `text`. One event per line, in file order.
pub fn parse_log_text(text: &str, source_file: &str, grammar: &LogGrammar) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (index, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let event = parse_line(line, source_file, index + 1, grammar, &mut out.warnings);
        out.events.push(event);
    }
    out
}

pub fn parse_log_file(path: impl AsRef<Path>, grammar: &LogGrammar) -> Result<ParsedLog, LogError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| LogError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(parse_log_text(&text, &path.display().to_string(), grammar))
}

/// Merges per-file results by time, then source file, then line number.
pub fn merge(parts: impl IntoIterator<Item = ParsedLog>) -> ParsedLog {
    let mut merged = ParsedLog::default();
    for part in parts {
        merged.events.extend(part.events);
        merged.warnings.extend(part.warnings);
    }
    merged.events.sort_by(|a, b| {
        (a.occurred_at, &a.source_file, a.line_number).cmp(&(b.occurred_at, &b.source_file, b.line_number))
    });
    merged
}

fn other(line: &str, source_file: &str, line_number: usize, occurred_at: EpochMillis) -> LogEvent {
    LogEvent {
        occurred_at,
        kind: LogEventKind::Other,
        subject_jid: None,
        message_key: None,
        group_id: None,
        detail: None,
        raw_line: line.to_string(),
        source_file: source_file.to_string(),
        line_number,
    }
}

fn parse_line(
    line: &str,
    source_file: &str,
    line_number: usize,
    grammar: &LogGrammar,
    warnings: &mut Vec<ParseWarning>,
) -> LogEvent {
    let location = Some(format!("line {line_number}"));
    let mut warn = |message: String| {
        warnings.push(ParseWarning::new(source_file, location.clone(), message));
    };
    if line.trim().is_empty() {
        return other(line, source_file, line_number, EpochMillis::ABSENT);
    }
    let Some(caps) = grammar.line_pattern.captures(line) else {
        warn("line does not match the line pattern".into());
        return other(line, source_file, line_number, EpochMillis::ABSENT);
    };
    let ts_text = caps.name("ts").map_or("", |m| m.as_str());
    let body = caps.name("body").map_or("", |m| m.as_str());
    let occurred_at = match NaiveDateTime::parse_from_str(ts_text, &grammar.timestamp_format)
        .ok()
        .and_then(|naive| grammar.utc_offset.from_local_datetime(&naive).single())
    {
        Some(dt) => EpochMillis(dt.timestamp_millis()),
        None => {
            warn(format!("unparseable timestamp {ts_text:?}"));
            return other(line, source_file, line_number, EpochMillis::ABSENT);
        }
    };

    let Some((rule, body_caps)) = grammar
        .event_rules
        .iter()
        .find_map(|rule| rule.pattern.captures(body).map(|c| (rule, c)))
    else {
        return other(line, source_file, line_number, occurred_at);
    };
    let captured = |role: CaptureRole| {
        rule.group_for(role)
            .and_then(|g| body_caps.name(g))
            .map(|m| m.as_str())
            .filter(|s| !s.is_empty())
    };

    let mut event = other(line, source_file, line_number, occurred_at);
    event.kind = rule.kind;
    event.detail = captured(CaptureRole::Name).map(str::to_string);

    if let Some(raw) = captured(CaptureRole::Jid) {
        match parse_jid(raw) {
            Ok(jid) => {
                if jid.kind == JidKind::Group {
                    event.group_id = jid.group_id();
                }
                event.subject_jid = Some(jid);
            }
            Err(e) => warn(e.to_string()),
        }
    }
    if let Some(raw) = captured(CaptureRole::Group) {
        match parse_group_id(raw) {
            Ok(g) => event.group_id = Some(g),
            Err(e) => warn(e.to_string()),
        }
    }
    if let Some(raw) = captured(CaptureRole::Key) {
        match parse_message_key(raw) {
            Ok(k) => event.message_key = Some(k),
            Err(e) => warn(e.to_string()),
        }
    }

    // Unblock events never identify a contact, whatever the rule captured.
    if event.kind == LogEventKind::ContactUnblocked {
        event.subject_jid = None;
    }
    let missing = if event.kind.requires_key() && event.message_key.is_none() {
        Some("message key")
    } else if needs_user(event.kind) && !event.subject_jid.as_ref().is_some_and(WaJid::is_user) {
        Some("user jid")
    } else if needs_group(event.kind) && event.group_id.is_none() {
        Some("group id")
    } else {
        None
    };
    if let Some(what) = missing {
        warn(format!("{} line without a valid {what}; kept as Other", event.kind.name()));
        return other(line, source_file, line_number, occurred_at);
    }
    event
}

fn needs_user(kind: LogEventKind) -> bool {
    matches!(
        kind,
        LogEventKind::ContactNotInDb
            | LogEventKind::ContactQuery
            | LogEventKind::AvatarDownloaded
            | LogEventKind::ContactBlocked
            | LogEventKind::GroupAddRequested
            | LogEventKind::GroupMemberAdded
            | LogEventKind::GroupMemberLeft
    )
}

fn needs_group(kind: LogEventKind) -> bool {
    matches!(
        kind,
        LogEventKind::GroupCreated
            | LogEventKind::GroupAddRequested
            | LogEventKind::GroupMemberAdded
            | LogEventKind::GroupMemberLeft
    )
}

/// A block of one named contact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEvent {
    pub jid: WaJid,
    pub at: EpochMillis,
    pub citation: String,
}

/// An unblock. The log never says whom it applied to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnblockEvent {
    pub at: EpochMillis,
    pub citation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockEvents {
    pub blocks: Vec<BlockEvent>,
    pub unblocks: Vec<UnblockEvent>,
}

pub fn classify_block_events(events: &[LogEvent]) -> BlockEvents {
    let mut out = BlockEvents::default();
    for e in events {
        match e.kind {
            LogEventKind::ContactBlocked => {
                if let Some(jid) = &e.subject_jid {
                    out.blocks.push(BlockEvent {
                        jid: jid.clone(),
                        at: e.occurred_at,
                        citation: e.citation(),
                    });
                }
            }
            LogEventKind::ContactUnblocked => out.unblocks.push(UnblockEvent {
                at: e.occurred_at,
                citation: e.citation(),
            }),
            _ => {}
        }
    }
    out
}
