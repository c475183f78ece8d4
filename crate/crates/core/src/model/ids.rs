//! WhatsApp identifiers: user/group/broadcast jids, group ids and message keys.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const USER_SUFFIX: &str = "@s.whatsapp.net";
pub const GROUP_SUFFIX: &str = "@g.us";
pub const BROADCAST_JID: &str = "broadcast";
/// Prefix stored in front of the sender's key on a broadcast recipient's record.
pub const BROADCAST_KEY_PREFIX: &str = "%~";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("malformed jid {0:?}")]
    MalformedJid(String),
    #[error("malformed group id {0:?}")]
    MalformedGroupId(String),
    #[error("malformed message key {0:?}")]
    MalformedKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JidKind {
    User,
    Group,
    Broadcast,
    /// Kept verbatim because it matched no known pattern.
    Unrecognized,
}

/// A WhatsApp identifier as stored in `jid`, `key_remote_jid` and `remote_resource`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WaJid {
    pub raw: String,
    /// Digits only. For groups this is the creator's number; empty for broadcast.
    pub phone_number: String,
    pub kind: JidKind,
}

impl WaJid {
    pub fn user(phone_number: &str) -> Self {
        WaJid {
            raw: format!("{phone_number}{USER_SUFFIX}"),
            phone_number: phone_number.to_string(),
            kind: JidKind::User,
        }
    }

    pub fn broadcast() -> Self {
        WaJid {
            raw: BROADCAST_JID.to_string(),
            phone_number: String::new(),
            kind: JidKind::Broadcast,
        }
    }

    /// Wraps a value that failed to parse so the owning record can still be kept.
    pub fn unrecognized(raw: &str) -> Self {
        WaJid {
            raw: raw.to_string(),
            phone_number: String::new(),
            kind: JidKind::Unrecognized,
        }
    }

    pub fn is_user(&self) -> bool {
        self.kind == JidKind::User
    }

    pub fn is_group(&self) -> bool {
        self.kind == JidKind::Group
    }

    pub fn is_broadcast(&self) -> bool {
        self.kind == JidKind::Broadcast
    }

    pub fn group_id(&self) -> Option<GroupId> {
        if self.is_group() {
            parse_group_id(&self.raw).ok()
        } else {
            None
        }
    }

    /// Rebuilds the textual form from the decoded fields.
    pub fn to_raw(&self) -> String {
        match self.kind {
            JidKind::User => format!("{}{USER_SUFFIX}", self.phone_number),
            JidKind::Group => self
                .group_id()
                .map(|g| g.to_raw())
                .unwrap_or_else(|| self.raw.clone()),
            JidKind::Broadcast => BROADCAST_JID.to_string(),
            JidKind::Unrecognized => self.raw.clone(),
        }
    }
}

impl fmt::Display for WaJid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Digits with no superfluous leading zero, so that reformatting the integer
/// reproduces the text.
fn is_canonical_uint(s: &str) -> bool {
    is_digits(s) && (s == "0" || !s.starts_with('0'))
}

pub fn parse_jid(raw: &str) -> Result<WaJid, IdError> {
    if raw == BROADCAST_JID {
        return Ok(WaJid::broadcast());
    }
    if let Some(number) = raw.strip_suffix(USER_SUFFIX) {
        if is_digits(number) {
            return Ok(WaJid {
                raw: raw.to_string(),
                phone_number: number.to_string(),
                kind: JidKind::User,
            });
        }
        return Err(IdError::MalformedJid(raw.to_string()));
    }
    if raw.ends_with(GROUP_SUFFIX) {
        let group = parse_group_id(raw).map_err(|_| IdError::MalformedJid(raw.to_string()))?;
        return Ok(WaJid {
            raw: raw.to_string(),
            phone_number: group.creator.phone_number,
            kind: JidKind::Group,
        });
    }
    Err(IdError::MalformedJid(raw.to_string()))
}

/// Group identifier `<creator>-<creation epoch seconds>@g.us`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId {
    pub creator: WaJid,
    pub creation_time: i64,
    pub raw: String,
}

impl GroupId {
    pub fn new(creator_number: &str, creation_time: i64) -> Self {
        GroupId {
            creator: WaJid::user(creator_number),
            creation_time,
            raw: format!("{creator_number}-{creation_time}{GROUP_SUFFIX}"),
        }
    }

    pub fn to_raw(&self) -> String {
        format!(
            "{}-{}{GROUP_SUFFIX}",
            self.creator.phone_number, self.creation_time
        )
    }

    pub fn jid(&self) -> WaJid {
        WaJid {
            raw: self.raw.clone(),
            phone_number: self.creator.phone_number.clone(),
            kind: JidKind::Group,
        }
    }

    /// True when the creation time is a 10-digit epoch no earlier than 2009-01-01
    /// (WhatsApp's launch year) and not in the future.
    pub fn has_plausible_creation_time(&self) -> bool {
        const JAN_2009: i64 = 1_230_768_000;
        let now = chrono::Utc::now().timestamp();
        (JAN_2009..=now).contains(&self.creation_time)
    }
}

pub fn parse_group_id(raw: &str) -> Result<GroupId, IdError> {
    let malformed = || IdError::MalformedGroupId(raw.to_string());
    let body = raw.strip_suffix(GROUP_SUFFIX).ok_or_else(malformed)?;
    let (creator, epoch) = body.split_once('-').ok_or_else(malformed)?;
    if !is_digits(creator) || !is_canonical_uint(epoch) {
        return Err(malformed());
    }
    let creation_time: i64 = epoch.parse().map_err(|_| malformed())?;
    Ok(GroupId {
        creator: WaJid::user(creator),
        creation_time,
        raw: raw.to_string(),
    })
}

/// The `key_id` of a message: `[%~]<session start epoch>-<sequence>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageKey {
    pub raw: String,
    pub session_start: i64,
    pub sequence: u64,
    pub broadcast_received: bool,
}

impl MessageKey {
    pub fn new(session_start: i64, sequence: u64, broadcast_received: bool) -> Self {
        let mut key = MessageKey {
            raw: String::new(),
            session_start,
            sequence,
            broadcast_received,
        };
        key.raw = key.to_raw();
        key
    }

    pub fn to_raw(&self) -> String {
        let prefix = if self.broadcast_received {
            BROADCAST_KEY_PREFIX
        } else {
            ""
        };
        format!("{prefix}{}-{}", self.session_start, self.sequence)
    }

    /// The identifier as assigned by the sender, without the broadcast prefix.
    pub fn sender_form(&self) -> String {
        format!("{}-{}", self.session_start, self.sequence)
    }
}

impl fmt::Display for MessageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

pub fn parse_message_key(raw: &str) -> Result<MessageKey, IdError> {
    let malformed = || IdError::MalformedKey(raw.to_string());
    let (body, broadcast_received) = match raw.strip_prefix(BROADCAST_KEY_PREFIX) {
        Some(rest) => (rest, true),
        None => (raw, false),
    };
    let (session, sequence) = body.split_once('-').ok_or_else(malformed)?;
    if !is_canonical_uint(session) || !is_canonical_uint(sequence) {
        return Err(malformed());
    }
    Ok(MessageKey {
        raw: raw.to_string(),
        session_start: session.parse().map_err(|_| malformed())?,
        sequence: sequence.parse().map_err(|_| malformed())?,
        broadcast_received,
    })
}
