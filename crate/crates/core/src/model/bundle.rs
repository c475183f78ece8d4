use serde::{Deserialize, Serialize};

use super::records::{ChatListRecord, ContactRecord, LogEvent, MessageRecord};
use super::time::EpochMillis;

/// A problem found while decoding evidence. Parsing continues past it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParseWarning {
    pub source: String,
    pub location: Option<String>,
    pub message: String,
}

impl ParseWarning {
    pub fn new(source: impl Into<String>, location: Option<String>, message: impl Into<String>) -> Self {
        ParseWarning {
            source: source.into(),
            location,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.location {
            Some(loc) => write!(f, "{} ({}): {}", self.source, loc, self.message),
            None => write!(f, "{}: {}", self.source, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaFile {
    /// Path relative to the evidence root, `/`-separated.
    pub path: String,
    pub size: u64,
    /// Lowercase hex SHA-256, computed from the file contents.
    pub sha256: String,
    /// True for files under `Media/Sent`.
    pub sent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvatarFile {
    /// The jid encoded in the file name (`<jid>.j`).
    pub jid: String,
    pub path: String,
}

/// Messages decoded from one encrypted chat database backup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupSet {
    pub path: String,
    pub messages: Vec<MessageRecord>,
}

/// Everything parsed from one device.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseBundle {
    pub contacts: Vec<ContactRecord>,
    pub messages: Vec<MessageRecord>,
    pub chat_list: Vec<ChatListRecord>,
    pub log_events: Vec<LogEvent>,
    pub registered_number: Option<String>,
    pub own_avatar_present: bool,
    pub media_inventory: Vec<MediaFile>,
    pub avatar_inventory: Vec<AvatarFile>,
    pub backups: Vec<BackupSet>,
    pub warnings: Vec<ParseWarning>,
}

/// First and last timestamped log event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogCoverage {
    pub first: EpochMillis,
    pub last: EpochMillis,
}

impl CaseBundle {
    pub fn log_coverage(&self) -> Option<LogCoverage> {
        let mut times = self
            .log_events
            .iter()
            .map(|e| e.occurred_at)
            .filter(|t| t.is_present());
        let first = times.next()?;
        let (first, last) = times.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t)));
        Some(LogCoverage { first, last })
    }

    pub fn has_logs(&self) -> bool {
        self.log_events.iter().any(|e| e.occurred_at.is_present())
    }

    pub fn owner_jid(&self) -> Option<String> {
        self.registered_number
            .as_ref()
            .map(|n| format!("{n}{}", super::ids::USER_SUFFIX))
    }
}
