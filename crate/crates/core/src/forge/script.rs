//! Scenario scripts: a versioned TOML description of what happened on a device.
//!
//! ```toml
//! version = 1
//! owner = "393401234567"
//! start = "2013-03-12T09:00:00Z"
//! actors = ["393201234567", "393351234567"]
//!
//! [[actions]]
//! kind = "add_contact"
//! contact = "393201234567"
//!
//! [[actions]]
//! kind = "send_text"
//! to = "393201234567"
//! text = "hello"
//! alias = "hello"
//! at = "2013-03-12T09:05:00.250Z"
//!
//! [[actions]]
//! kind = "delete_message"
//! message = "hello"
//! ```
//!
//! Actions without `at` happen `step_seconds` after the previous one.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::correlate::content::MediaKind;

pub const SCRIPT_VERSION: u32 = 1;

fn default_step() -> i64 {
    60
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub version: u32,
    /// Phone number of the device owner.
    pub owner: String,
    pub start: DateTime<Utc>,
    #[serde(default = "default_step")]
    pub step_seconds: i64,
    /// Whether the owner has set an avatar (`me.jpg`).
    #[serde(default)]
    pub owner_avatar: bool,
    pub actors: Vec<String>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<DateTime<Utc>>,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryState {
    /// Never reached the server.
    Pending,
    OnServer,
    #[default]
    Delivered,
}

/// Delays are relative to the action time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Delivery {
    pub state: DeliveryState,
    pub server_ack_after_ms: i64,
    pub device_ack_after_ms: i64,
    /// Incoming messages: gap between the sender's timestamp and local receipt.
    pub receive_after_ms: i64,
}

impl Default for Delivery {
    fn default() -> Self {
        Delivery {
            state: DeliveryState::Delivered,
            server_ack_after_ms: 1_500,
            device_ack_after_ms: 3_500,
            receive_after_ms: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    AddContact {
        contact: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "yes")]
        whatsapp_user: bool,
        #[serde(default = "yes")]
        avatar: bool,
    },
    DeleteContact {
        contact: String,
    },
    BlockContact {
        contact: String,
    },
    UnblockAll,
    SendText {
        /// Sender; the owner when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        /// Actor, group label, or the owner (the default for incoming messages).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
        /// Incoming message that the sender addressed to a broadcast list.
        #[serde(default)]
        via_broadcast: bool,
        #[serde(default)]
        delivery: Delivery,
    },
    SendMedia {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        media: MediaKind,
        size: usize,
        /// File bytes depend only on this and `size`, so two scripts can share a file.
        #[serde(default)]
        content_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        server_filename: Option<String>,
        /// Recipient side: whether the file was downloaded into the media folder.
        #[serde(default = "yes")]
        downloaded: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
        #[serde(default)]
        delivery: Delivery,
    },
    SendVcard {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
        #[serde(default)]
        delivery: Delivery,
    },
    SendGeo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        from: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        lat: f64,
        lon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
        #[serde(default)]
        delivery: Delivery,
    },
    /// The owner sends one message to a broadcast list.
    Broadcast {
        recipients: Vec<String>,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alias: Option<String>,
        #[serde(default)]
        delivery: Delivery,
    },
    /// The owner creates a group; `group` is the label later actions use.
    CreateGroup {
        group: String,
        name: String,
    },
    AddToGroup {
        group: String,
        member: String,
    },
    LeaveGroup {
        group: String,
        member: String,
    },
    /// Deletes every row of a message by alias or key.
    DeleteMessage {
        message: String,
    },
    SnapshotBackup,
    RotateLog,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::AddContact { .. } => "add_contact",
            Action::DeleteContact { .. } => "delete_contact",
            Action::BlockContact { .. } => "block_contact",
            Action::UnblockAll => "unblock_all",
            Action::SendText { .. } => "send_text",
            Action::SendMedia { .. } => "send_media",
            Action::SendVcard { .. } => "send_vcard",
            Action::SendGeo { .. } => "send_geo",
            Action::Broadcast { .. } => "broadcast",
            Action::CreateGroup { .. } => "create_group",
            Action::AddToGroup { .. } => "add_to_group",
            Action::LeaveGroup { .. } => "leave_group",
            Action::DeleteMessage { .. } => "delete_message",
            Action::SnapshotBackup => "snapshot_backup",
            Action::RotateLog => "rotate_log",
        }
    }
}

impl ScenarioScript {
    pub fn new(owner: &str, start: DateTime<Utc>, actors: &[&str]) -> Self {
        ScenarioScript {
            version: SCRIPT_VERSION,
            owner: owner.to_string(),
            start,
            step_seconds: default_step(),
            owner_avatar: false,
            actors: actors.iter().map(|a| a.to_string()).collect(),
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Action) -> &mut Self {
        self.actions.push(TimedAction { at: None, action });
        self
    }

    pub fn push_at(&mut self, at: DateTime<Utc>, action: Action) -> &mut Self {
        self.actions.push(TimedAction { at: Some(at), action });
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario scripts always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let text = r#"
version = 1
owner = "393401234567"
start = "2013-03-12T09:00:00Z"
actors = ["393201234567"]

[[actions]]
kind = "add_contact"
contact = "393201234567"

[[actions]]
kind = "send_text"
to = "393201234567"
text = "hello"
at = "2013-03-12T09:05:00.250Z"
delivery = { state = "on_server", server_ack_after_ms = 90 }

[[actions]]
kind = "unblock_all"

[[actions]]
kind = "send_media"
from = "393201234567"
media = "image"
size = 100
"#;
        let script = ScenarioScript::from_toml(text).unwrap();
        assert_eq!(script.actions.len(), 4);
        assert_eq!(script.step_seconds, 60);
        match &script.actions[1].action {
            Action::SendText { delivery, .. } => {
                assert_eq!(delivery.state, DeliveryState::OnServer);
                assert_eq!(delivery.server_ack_after_ms, 90);
                assert_eq!(delivery.device_ack_after_ms, 3_500);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(script.actions[2].action, Action::UnblockAll));
        assert!(matches!(script.actions[3].action, Action::SendMedia { downloaded: true, .. }));
        let again = ScenarioScript::from_toml(&script.to_toml()).unwrap();
        assert_eq!(again, script);
    }
}
