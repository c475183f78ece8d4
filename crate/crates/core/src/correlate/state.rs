//! Delivery state of a message from its `status` code and ack timestamps.

use serde::{Deserialize, Serialize};

use crate::model::records::status;
use crate::model::{EpochMillis, MessageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "state", content = "status", rename_all = "snake_case")]
pub enum StateCode {
    /// Incoming, status 0.
    ReceivedIncoming,
    /// Outgoing, status 0: never reached the server.
    PendingLocal,
    /// Outgoing, status 4: acknowledged by the server only.
    OnServer,
    /// Outgoing, status 5: acknowledged by the recipient's device.
    DeliveredToDevice,
    /// Status 6: group control message.
    Control,
    Unknown(i64),
}

impl StateCode {
    pub fn from_record(from_me: bool, status_code: i64) -> StateCode {
        match (from_me, status_code) {
            (_, status::CONTROL) => StateCode::Control,
            (true, status::RECEIVED_OR_PENDING) => StateCode::PendingLocal,
            (true, status::ON_SERVER) => StateCode::OnServer,
            (true, status::DELIVERED) => StateCode::DeliveredToDevice,
            (false, status::RECEIVED_OR_PENDING) => StateCode::ReceivedIncoming,
            (_, n) => StateCode::Unknown(n),
        }
    }

    pub fn label(self) -> String {
        match self {
            StateCode::ReceivedIncoming => "received".into(),
            StateCode::PendingLocal => "pending_local".into(),
            StateCode::OnServer => "on_server".into(),
            StateCode::DeliveredToDevice => "delivered_to_device".into(),
            StateCode::Control => "control".into(),
            StateCode::Unknown(n) => format!("unknown_status_{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageState {
    pub code: StateCode,
    pub sent_at: Option<EpochMillis>,
    pub server_ack_at: Option<EpochMillis>,
    pub device_ack_at: Option<EpochMillis>,
    /// Receipt time for incoming messages; record insertion time for a pending
    /// outgoing one.
    pub received_at: Option<EpochMillis>,
}

fn present(t: EpochMillis) -> Option<EpochMillis> {
    t.is_present().then_some(t)
}

pub fn message_state(record: &MessageRecord) -> MessageState {
    let code = StateCode::from_record(record.from_me, record.status_code);
    if record.from_me {
        MessageState {
            code,
            sent_at: present(record.timestamp),
            server_ack_at: present(record.receipt_server_timestamp),
            device_ack_at: present(record.receipt_device_timestamp),
            received_at: present(record.received_timestamp),
        }
    } else {
        MessageState {
            code,
            sent_at: None,
            server_ack_at: None,
            device_ack_at: None,
            received_at: present(record.received_timestamp).or(present(record.timestamp)),
        }
    }
}

/// Inconsistencies between the status code and the timestamps. Never reorders anything.
pub fn state_warnings(record: &MessageRecord) -> Vec<String> {
    let state = message_state(record);
    let mut out = Vec::new();
    match state.code {
        StateCode::DeliveredToDevice if state.device_ack_at.is_none() => {
            out.push("status 5 without receipt_device_timestamp".to_string())
        }
        StateCode::OnServer if state.server_ack_at.is_none() => {
            out.push("status 4 without receipt_server_timestamp".to_string())
        }
        StateCode::OnServer if state.device_ack_at.is_some() => {
            out.push("status 4 with a receipt_device_timestamp".to_string())
        }
        StateCode::PendingLocal if state.server_ack_at.is_some() || state.device_ack_at.is_some() => {
            out.push("status 0 outgoing message with ack timestamps".to_string())
        }
        _ => {}
    }
    if record.from_me {
        let chain = [
            ("timestamp", record.timestamp),
            ("receipt_server_timestamp", record.receipt_server_timestamp),
            ("receipt_device_timestamp", record.receipt_device_timestamp),
        ];
        let present: Vec<_> = chain.iter().filter(|(_, t)| t.is_present()).collect();
        for pair in present.windows(2) {
            let ((a, ta), (b, tb)) = (pair[0], pair[1]);
            if ta > tb {
                out.push(format!("{a} ({}) is later than {b} ({})", ta.0, tb.0));
            }
        }
    }
    out
}
