//! Per-conversation chronology of the chat database, including rows only a
//! backup still holds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::content::{extract_content, Content};
use super::deleted::recovered_from_backups;
use super::state::{message_state, MessageState};
use crate::model::{CaseBundle, EpochMillis, MessageRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Origin {
    Live,
    RecoveredFromBackup { backup: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub record_id: i64,
    pub key_id: String,
    pub from_me: bool,
    pub effective_time: EpochMillis,
    /// `remote_resource` of a group row: the sender, or the member a control message names.
    pub author: Option<String>,
    pub state: MessageState,
    pub content: Content,
    pub origin: Origin,
    pub notes: Vec<String>,
}

/// Conversation (`key_remote_jid`) to its messages in chronological order.
pub type Histories = BTreeMap<String, Vec<HistoryEntry>>;

fn entry(record: &MessageRecord, origin: Origin) -> HistoryEntry {
    let (content, content_note) = extract_content(record);
    let mut notes: Vec<String> = content_note.into_iter().collect();
    if record.key_remote_jid.is_group()
        && !record.from_me
        && !record.is_control()
        && record.received_timestamp.is_present()
        && record.timestamp.is_present()
        && record.received_timestamp != record.timestamp
    {
        notes.push(format!(
            "group message: received_timestamp ({}) used in preference to timestamp ({})",
            record.received_timestamp.0, record.timestamp.0
        ));
    }
    HistoryEntry {
        record_id: record.id,
        key_id: record.key_id_raw.clone(),
        from_me: record.from_me,
        effective_time: record.effective_time(),
        author: record
            .key_remote_jid
            .is_group()
            .then(|| record.remote_resource.first().map(|j| j.raw.clone()))
            .flatten(),
        state: message_state(record),
        content,
        origin,
        notes,
    }
}

/// Groups messages by conversation and orders each by effective time, then `_id`.
pub fn reconstruct_history(bundle: &CaseBundle) -> Histories {
    let mut histories: Histories = BTreeMap::new();
    for record in &bundle.messages {
        histories
            .entry(record.key_remote_jid.raw.clone())
            .or_default()
            .push(entry(record, Origin::Live));
    }
    for (backup, record) in recovered_from_backups(bundle) {
        histories
            .entry(record.key_remote_jid.raw.clone())
            .or_default()
            .push(entry(
                record,
                Origin::RecoveredFromBackup {
                    backup: backup.to_string(),
                },
            ));
    }
    for entries in histories.values_mut() {
        entries.sort_by_key(|e| (e.effective_time, e.record_id));
    }
    histories
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::test_support::message;
    use crate::model::BackupSet;

    const PARTNER: &str = "393481234567@s.whatsapp.net";

    fn text(id: i64, key: &str, from_me: bool, at: i64, body: &str) -> MessageRecord {
        let mut m = message(id, PARTNER, key, from_me);
        m.data = Some(body.into());
        m.timestamp = EpochMillis(at);
        if from_me {
            m.status_code = 5;
        } else {
            m.received_timestamp = EpochMillis(at);
        }
        m
    }

    #[test]
    fn question_and_reply_order() {
        // 2012-02-13 06:59:09 and 07:00:23 UTC, then a second exchange.
        let bundle = CaseBundle {
            messages: vec![
                text(2, "1329116000-1", true, 1329116423000, "Reply 1"),
                text(1, "1329110000-7", false, 1329116349000, "Message 1"),
                text(4, "1329116000-2", true, 1329116600000, "Reply 2"),
                text(3, "1329110000-8", false, 1329116500000, "Message 2"),
            ],
            ..Default::default()
        };
        let h = reconstruct_history(&bundle);
        let bodies: Vec<_> = h[PARTNER]
            .iter()
            .map(|e| match &e.content {
                Content::Text { text } => text.as_str(),
                _ => "",
            })
            .collect();
        assert_eq!(bodies, ["Message 1", "Reply 1", "Message 2", "Reply 2"]);
    }

    #[test]
    fn empty_bundle() {
        assert!(reconstruct_history(&CaseBundle::default()).is_empty());
    }

    #[test]
    fn ties_break_on_id_and_backup_rows_are_tagged() {
        let live = text(5, "1-5", true, 1000, "b");
        let deleted = text(4, "1-4", true, 1000, "a");
        let bundle = CaseBundle {
            messages: vec![live.clone()],
            backups: vec![BackupSet {
                path: "msgstore-2013-01-01.1.db.crypt".into(),
                messages: vec![deleted, live],
            }],
            ..Default::default()
        };
        let h = reconstruct_history(&bundle);
        let conv = &h[PARTNER];
        assert_eq!(conv.len(), 2);
        assert_eq!(conv[0].record_id, 4);
        assert!(matches!(conv[0].origin, Origin::RecoveredFromBackup { .. }));
        assert_eq!(conv[1].origin, Origin::Live);
    }
}
