//! Decoded rows of `wa_contacts`, `messages` and `chat_list`, and classified log events.

use std::collections::BTreeMap;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::ids::{GroupId, MessageKey, WaJid};
use super::time::{EpochMillis, EpochSeconds};

/// Phonebook-sourced columns of `wa_contacts`. Kept verbatim, never interpreted.
pub const PHONEBOOK_COLUMNS: [&str; 8] = [
    "number",
    "display_name",
    "given_name",
    "family_name",
    "phone_type",
    "phone_label",
    "raw_contact_id",
    "sort_name",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub id: i64,
    pub jid: WaJid,
    pub is_whatsapp_user: bool,
    pub unseen_msg_count: i64,
    pub thumb_ts: EpochSeconds,
    pub photo_id_timestamp: EpochMillis,
    pub wa_name: Option<String>,
    pub status_line: Option<String>,
    /// Column name to textual value; NULL columns are omitted.
    pub phonebook: BTreeMap<String, String>,
    pub photo_ts: i64,
}

impl ContactRecord {
    /// An avatar cannot be downloaded before it was set.
    pub fn avatar_times_consistent(&self) -> bool {
        if self.thumb_ts.0 <= 0 || self.photo_id_timestamp.0 <= 0 {
            return true;
        }
        self.thumb_ts.0 <= self.photo_id_timestamp.0 / 1000
    }
}

/// `media_wa_type` codes.
pub mod media_type {
    pub const TEXT: i64 = 0;
    pub const IMAGE: i64 = 1;
    pub const AUDIO: i64 = 2;
    pub const VIDEO: i64 = 3;
    pub const CONTACT_CARD: i64 = 4;
    pub const GEO: i64 = 5;
}

/// `status` codes.
pub mod status {
    pub const RECEIVED_OR_PENDING: i64 = 0;
    pub const ON_SERVER: i64 = 4;
    pub const DELIVERED: i64 = 5;
    pub const CONTROL: i64 = 6;
}

/// `media_size` values carried by group control messages (`status` = 6).
pub mod control_op {
    pub const CREATED: i64 = 1;
    pub const JOINED: i64 = 4;
    pub const LEFT: i64 = 5;
}

/// `needs_push` value for broadcast messages.
pub const NEEDS_PUSH_BROADCAST: i64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: i64,
    pub key_remote_jid: WaJid,
    /// The raw key is always kept; `key_id` is `None` only when it did not parse.
    pub key_id_raw: String,
    pub key_id: Option<MessageKey>,
    pub from_me: bool,
    pub status_code: i64,
    pub timestamp: EpochMillis,
    pub received_timestamp: EpochMillis,
    pub receipt_server_timestamp: EpochMillis,
    pub receipt_device_timestamp: EpochMillis,
    /// Unused by WhatsApp, retained verbatim.
    pub send_timestamp: i64,
    pub needs_push: i64,
    pub recipient_count: Option<i64>,
    pub remote_resource_raw: Option<String>,
    /// `remote_resource` split on commas; broadcast senders list every destination.
    pub remote_resource: Vec<WaJid>,
    pub media_wa_type: i64,
    pub data: Option<String>,
    pub raw_data: Option<Vec<u8>>,
    pub media_hash: Option<String>,
    pub media_url: Option<String>,
    pub media_mime_type: Option<String>,
    pub media_size: Option<i64>,
    pub media_name: Option<String>,
    pub media_duration: Option<i64>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub thumb_image: Option<Vec<u8>>,
}

impl MessageRecord {
    /// Receipt time for incoming messages, send time otherwise.
    ///
    /// Control records and incoming records without a receipt time fall back
    /// to `timestamp`.
    pub fn effective_time(&self) -> EpochMillis {
        if !self.from_me
            && self.status_code != status::CONTROL
            && self.received_timestamp.is_present()
        {
            self.received_timestamp
        } else {
            self.timestamp
        }
    }

    pub fn is_control(&self) -> bool {
        self.status_code == status::CONTROL
    }

    pub fn is_broadcast_sender_record(&self) -> bool {
        self.from_me && self.needs_push == NEEDS_PUSH_BROADCAST
    }

    /// The key as the sender assigned it (broadcast prefix removed).
    pub fn sender_key(&self) -> String {
        self.key_id
            .as_ref()
            .map(|k| k.sender_form())
            .unwrap_or_else(|| self.key_id_raw.clone())
    }

    /// Last path component of `media_url`: the name the server gave the file.
    pub fn server_filename(&self) -> Option<String> {
        server_filename(self.media_url.as_deref()?)
    }

    /// `media_hash` decoded from base64, when it is a 32-byte digest.
    pub fn media_digest(&self) -> Option<[u8; 32]> {
        decode_media_hash(self.media_hash.as_deref()?)
    }

    /// The identity used to match live and backup copies of a row.
    pub fn row_identity(&self) -> RowIdentity {
        RowIdentity {
            key_remote_jid: self.key_remote_jid.raw.clone(),
            from_me: self.from_me,
            key_id: self.key_id_raw.clone(),
        }
    }
}

/// (`key_remote_jid`, `key_from_me`, `key_id`): unique per row in `messages`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowIdentity {
    pub key_remote_jid: String,
    pub from_me: bool,
    pub key_id: String,
}

pub fn server_filename(url: &str) -> Option<String> {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let name = path.trim_end_matches('/').rsplit('/').next()?;
    (!name.is_empty() && !name.contains(':')).then(|| name.to_string())
}

pub fn decode_media_hash(text: &str) -> Option<[u8; 32]> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .ok()?;
    bytes.try_into().ok()
}

pub fn encode_media_hash(digest: &[u8; 32]) -> String {
    base64::engine::general_purpose::STANDARD.encode(digest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatListRecord {
    pub id: i64,
    pub key_remote_jid: WaJid,
    pub message_table_id: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogEventKind {
    ContactNotInDb,
    ContactQuery,
    AvatarDownloaded,
    ContactBlocked,
    ContactUnblocked,
    MessageSent,
    MessageReceived,
    ServerAck,
    DeviceAck,
    MessageDeleted,
    GroupCreated,
    GroupAddRequested,
    GroupMemberAdded,
    GroupMemberLeft,
    Other,
}

impl LogEventKind {
    pub const ALL: [LogEventKind; 15] = [
        LogEventKind::ContactNotInDb,
        LogEventKind::ContactQuery,
        LogEventKind::AvatarDownloaded,
        LogEventKind::ContactBlocked,
        LogEventKind::ContactUnblocked,
        LogEventKind::MessageSent,
        LogEventKind::MessageReceived,
        LogEventKind::ServerAck,
        LogEventKind::DeviceAck,
        LogEventKind::MessageDeleted,
        LogEventKind::GroupCreated,
        LogEventKind::GroupAddRequested,
        LogEventKind::GroupMemberAdded,
        LogEventKind::GroupMemberLeft,
        LogEventKind::Other,
    ];

    pub fn requires_key(self) -> bool {
        matches!(
            self,
            LogEventKind::MessageSent
                | LogEventKind::MessageDeleted
                | LogEventKind::ServerAck
                | LogEventKind::DeviceAck
        )
    }

    /// Events a contact's addition to `wa.db` leaves behind.
    pub fn is_contact_addition(self) -> bool {
        matches!(
            self,
            LogEventKind::ContactNotInDb | LogEventKind::ContactQuery | LogEventKind::AvatarDownloaded
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LogEventKind::ContactNotInDb => "ContactNotInDb",
            LogEventKind::ContactQuery => "ContactQuery",
            LogEventKind::AvatarDownloaded => "AvatarDownloaded",
            LogEventKind::ContactBlocked => "ContactBlocked",
            LogEventKind::ContactUnblocked => "ContactUnblocked",
            LogEventKind::MessageSent => "MessageSent",
            LogEventKind::MessageReceived => "MessageReceived",
            LogEventKind::ServerAck => "ServerAck",
            LogEventKind::DeviceAck => "DeviceAck",
            LogEventKind::MessageDeleted => "MessageDeleted",
            LogEventKind::GroupCreated => "GroupCreated",
            LogEventKind::GroupAddRequested => "GroupAddRequested",
            LogEventKind::GroupMemberAdded => "GroupMemberAdded",
            LogEventKind::GroupMemberLeft => "GroupMemberLeft",
            LogEventKind::Other => "Other",
        }
    }

    pub fn from_name(name: &str) -> Option<LogEventKind> {
        LogEventKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub occurred_at: EpochMillis,
    pub kind: LogEventKind,
    pub subject_jid: Option<WaJid>,
    pub message_key: Option<MessageKey>,
    pub group_id: Option<GroupId>,
    /// Free text captured by the rule, e.g. a group name.
    pub detail: Option<String>,
    pub raw_line: String,
    pub source_file: String,
    pub line_number: usize,
}

impl LogEvent {
    pub fn citation(&self) -> String {
        format!("{}:{}", self.source_file, self.line_number)
    }
}
