//! Deleted messages: log delete events, log traffic with no surviving row, and
//! rows that only a backup still holds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::content::{extract_content, Content};
use super::finding::{message_citation, Category, Finding, Payload};
use super::groups::GroupTimeline;
use super::partners::{index_timelines, partners_of};
use super::state::{message_state, StateCode};
use crate::model::{CaseBundle, EpochMillis, LogEvent, LogEventKind, MessageRecord, RowIdentity};

/// Backup rows whose identity no live row has.
pub fn backup_diff<'a>(live: &[MessageRecord], backup: &'a [MessageRecord]) -> Vec<&'a MessageRecord> {
    let live: BTreeSet<RowIdentity> = live.iter().map(MessageRecord::row_identity).collect();
    backup
        .iter()
        .filter(|r| !live.contains(&r.row_identity()))
        .collect()
}

/// Rows recovered from every backup, each reported once (first backup by path wins).
pub fn recovered_from_backups(bundle: &CaseBundle) -> Vec<(&str, &MessageRecord)> {
    let mut backups: Vec<_> = bundle.backups.iter().collect();
    backups.sort_by(|a, b| a.path.cmp(&b.path));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for backup in backups {
        for record in backup_diff(&bundle.messages, &backup.messages) {
            if seen.insert(record.row_identity()) {
                out.push((backup.path.as_str(), record));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionEvidence {
    /// A `MessageDeleted` log line names the key.
    DeleteEvent,
    /// The key occurs in send, receive or ack log lines but in no live row.
    LogTraffic,
    /// A backup still holds the row.
    Backup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletedMessage {
    pub key_id: String,
    pub conversation: Option<String>,
    pub direction: Option<Direction>,
    pub partners: BTreeSet<String>,
    pub exchanged_at: Option<EpochMillis>,
    pub deleted_at: Option<EpochMillis>,
    pub server_ack_at: Option<EpochMillis>,
    pub device_ack_at: Option<EpochMillis>,
    pub last_state: Option<StateCode>,
    pub evidence_kinds: Vec<DeletionEvidence>,
    /// Only a backup copy can give the content back.
    pub recovered_content: Option<Content>,
    pub recovered_from: Option<String>,
}

#[derive(Default)]
struct Gathered<'a> {
    delete: Vec<&'a LogEvent>,
    traffic: Vec<&'a LogEvent>,
    backup: Vec<(&'a str, &'a MessageRecord)>,
}

fn first_of<'a>(events: &[&'a LogEvent], kind: LogEventKind) -> Option<&'a LogEvent> {
    events
        .iter()
        .copied()
        .filter(|e| e.kind == kind && e.occurred_at.is_present())
        .min_by_key(|e| (e.occurred_at, e.line_number))
}

/// Deleted messages with the citations each rests on, ordered by key.
pub fn deleted_messages(bundle: &CaseBundle, timelines: &[GroupTimeline]) -> Vec<(DeletedMessage, Vec<String>)> {
    let live_keys: BTreeSet<&str> = bundle.messages.iter().map(|m| m.key_id_raw.as_str()).collect();
    let mut gathered: BTreeMap<String, Gathered> = BTreeMap::new();
    for e in &bundle.log_events {
        let Some(key) = &e.message_key else { continue };
        let key = key.to_raw();
        match e.kind {
            LogEventKind::MessageDeleted => gathered.entry(key).or_default().delete.push(e),
            LogEventKind::MessageSent
            | LogEventKind::MessageReceived
            | LogEventKind::ServerAck
            | LogEventKind::DeviceAck => gathered.entry(key).or_default().traffic.push(e),
            _ => {}
        }
    }
    for (backup, record) in recovered_from_backups(bundle) {
        if record.is_control() && live_keys.contains(record.key_id_raw.as_str()) {
            continue;
        }
        gathered
            .entry(record.key_id_raw.clone())
            .or_default()
            .backup
            .push((backup, record));
    }

    let owner = bundle.owner_jid();
    let index = index_timelines(timelines);
    let mut out = Vec::new();
    for (key, g) in gathered {
        let mut kinds = Vec::new();
        if !g.delete.is_empty() {
            kinds.push(DeletionEvidence::DeleteEvent);
        }
        if !g.traffic.is_empty() && !live_keys.contains(key.as_str()) {
            kinds.push(DeletionEvidence::LogTraffic);
        }
        if !g.backup.is_empty() {
            kinds.push(DeletionEvidence::Backup);
        }
        if kinds.is_empty() {
            continue;
        }

        let mut evidence: Vec<String> = g
            .delete
            .iter()
            .chain(g.traffic.iter())
            .map(|e| e.citation())
            .collect();
        evidence.extend(g.backup.iter().map(|(b, r)| message_citation(Some(b), r.id)));

        let sent = first_of(&g.traffic, LogEventKind::MessageSent);
        let received = first_of(&g.traffic, LogEventKind::MessageReceived);
        let server_ack = first_of(&g.traffic, LogEventKind::ServerAck);
        let device_ack = first_of(&g.traffic, LogEventKind::DeviceAck);
        let backup_rows: Vec<&MessageRecord> = g.backup.iter().map(|(_, r)| *r).collect();
        let backup_first = backup_rows.first().copied();
        let backup_state = backup_first.map(message_state);

        let direction = if sent.is_some() {
            Some(Direction::Outgoing)
        } else if received.is_some() {
            Some(Direction::Incoming)
        } else {
            backup_first.map(|r| if r.from_me { Direction::Outgoing } else { Direction::Incoming })
        };
        let exchanged_at = sent
            .or(received)
            .map(|e| e.occurred_at)
            .or_else(|| backup_first.map(MessageRecord::effective_time));

        let sends: Vec<&LogEvent> = g
            .traffic
            .iter()
            .copied()
            .filter(|e| e.kind == LogEventKind::MessageSent)
            .collect();
        let log_subjects: BTreeSet<String> = sends
            .iter()
            .chain(received.iter())
            .filter_map(|e| e.subject_jid.as_ref().map(|j| j.raw.clone()))
            .collect();

        let mut partners = BTreeSet::new();
        let mut conversation = None;
        let mut warnings = Vec::new();
        if let Some((p, summary)) = partners_of(&backup_rows, owner.as_deref(), &index, &mut warnings) {
            partners = p.partners;
            conversation = Some(if summary.is_some() {
                crate::model::ids::BROADCAST_JID.to_string()
            } else {
                backup_rows[0].key_remote_jid.raw.clone()
            });
        } else if !log_subjects.is_empty() {
            let groups: Vec<&String> = log_subjects.iter().filter(|s| s.ends_with("@g.us")).collect();
            if let (Some(group), Some(at)) = (groups.first(), exchanged_at) {
                conversation = Some((*group).clone());
                if let Some(t) = index.get(group.as_str()) {
                    partners.extend(t.membership_at(at));
                }
            } else if log_subjects.len() == 1 {
                conversation = log_subjects.iter().next().cloned();
                partners = log_subjects.clone();
            } else {
                conversation = Some(crate::model::ids::BROADCAST_JID.to_string());
                partners = log_subjects.clone();
            }
            if let Some(owner) = &owner {
                partners.remove(owner);
            }
        }

        let last_state = match direction {
            _ if device_ack.is_some() => Some(StateCode::DeliveredToDevice),
            _ if server_ack.is_some() => Some(StateCode::OnServer),
            Some(Direction::Outgoing) if sent.is_some() => {
                Some(backup_state.map_or(StateCode::PendingLocal, |s| s.code))
            }
            Some(Direction::Incoming) if received.is_some() => Some(StateCode::ReceivedIncoming),
            _ => backup_state.map(|s| s.code),
        };

        let (recovered_content, recovered_from) = match g.backup.first() {
            Some((path, record)) => (Some(extract_content(record).0), Some(path.to_string())),
            None => (None, None),
        };
        let message = DeletedMessage {
            key_id: key,
            conversation,
            direction,
            partners,
            exchanged_at,
            deleted_at: first_of(&g.delete, LogEventKind::MessageDeleted).map(|e| e.occurred_at),
            server_ack_at: server_ack
                .map(|e| e.occurred_at)
                .or_else(|| backup_state.and_then(|s| s.server_ack_at)),
            device_ack_at: device_ack
                .map(|e| e.occurred_at)
                .or_else(|| backup_state.and_then(|s| s.device_ack_at)),
            last_state,
            evidence_kinds: kinds,
            recovered_content,
            recovered_from,
        };
        out.push((message, evidence));
    }
    out
}

pub fn infer_deleted_messages(bundle: &CaseBundle, timelines: &[GroupTimeline]) -> Vec<Finding> {
    deleted_messages(bundle, timelines)
        .into_iter()
        .map(|(m, evidence)| {
            let mut note = Vec::new();
            match &m.recovered_from {
                Some(b) => note.push(format!("content recovered from backup {b}")),
                None => note.push("content unrecoverable".to_string()),
            }
            if m.deleted_at.is_none() {
                note.push("deletion time unknown: no delete event in the available logs".into());
            }
            if !m.evidence_kinds.contains(&DeletionEvidence::Backup) && m.exchanged_at.is_some() {
                note.push("exchange time and state taken from log lines (device clock)".into());
            }
            Finding {
                category: Category::DeletedMessage,
                subject: m.key_id.clone(),
                time: m.deleted_at.or(m.exchanged_at),
                payload: Payload::DeletedMessage(m),
                confidence_note: note.join("; "),
                evidence,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::test_support::{log_event, message};
    use crate::model::BackupSet;

    const PARTNER: &str = "393661234567@s.whatsapp.net";

    #[test]
    fn deleted_after_delivery_from_logs() {
        // Sent 09:37:44, acked, deleted 10:49:22 (UTC) on March 14 2013.
        let bundle = CaseBundle {
            log_events: vec![
                log_event(1, "2013-03-14T09:37:44Z", LogEventKind::MessageSent, Some(PARTNER), Some("1363253484-1")),
                log_event(2, "2013-03-14T09:37:45Z", LogEventKind::ServerAck, None, Some("1363253484-1")),
                log_event(3, "2013-03-14T09:38:02Z", LogEventKind::DeviceAck, Some(PARTNER), Some("1363253484-1")),
                log_event(4, "2013-03-14T10:49:22Z", LogEventKind::MessageDeleted, None, Some("1363253484-1")),
            ],
            ..Default::default()
        };
        let found = deleted_messages(&bundle, &[]);
        assert_eq!(found.len(), 1);
        let (m, evidence) = &found[0];
        assert_eq!(m.key_id, "1363253484-1");
        assert_eq!(m.exchanged_at, Some(EpochMillis(1363253864000)));
        assert_eq!(m.deleted_at, Some(EpochMillis(1363258162000)));
        assert_eq!(m.partners, [PARTNER.to_string()].into_iter().collect());
        assert_eq!(m.direction, Some(Direction::Outgoing));
        assert_eq!(m.last_state, Some(StateCode::DeliveredToDevice));
        assert!(m.recovered_content.is_none());
        assert_eq!(evidence.len(), 4);
        let f = infer_deleted_messages(&bundle, &[]);
        assert!(f[0].confidence_note.contains("content unrecoverable"));
    }

    #[test]
    fn nothing_deleted() {
        let mut m = message(1, PARTNER, "1363253484-1", true);
        m.status_code = 5;
        let bundle = CaseBundle {
            messages: vec![m.clone()],
            log_events: vec![log_event(1, "2013-03-14T09:37:44Z", LogEventKind::MessageSent, Some(PARTNER), Some("1363253484-1"))],
            backups: vec![BackupSet {
                path: "b.crypt".into(),
                messages: vec![m],
            }],
            ..Default::default()
        };
        assert!(deleted_messages(&bundle, &[]).is_empty());
    }

    #[test]
    fn backup_diff_cases() {
        let rows: Vec<_> = (1..=5)
            .map(|i| message(i, PARTNER, &format!("1363253484-{i}"), true))
            .collect();
        assert!(backup_diff(&rows, &rows).is_empty());
        let live = vec![rows[0].clone(), rows[2].clone(), rows[4].clone()];
        let diff: Vec<i64> = backup_diff(&live, &rows).iter().map(|r| r.id).collect();
        assert_eq!(diff, [2, 4]);
        let other: Vec<_> = (1..=3)
            .map(|i| message(i, "393201234567@s.whatsapp.net", &format!("1363253000-{i}"), false))
            .collect();
        assert_eq!(backup_diff(&live, &other).len(), 3);
    }

    #[test]
    fn backup_recovers_content() {
        let mut m = message(2, PARTNER, "1363253484-2", false);
        m.data = Some("gone".into());
        m.received_timestamp = EpochMillis(5000);
        let bundle = CaseBundle {
            backups: vec![
                BackupSet { path: "z.crypt".into(), messages: vec![m.clone()] },
                BackupSet { path: "a.crypt".into(), messages: vec![m] },
            ],
            ..Default::default()
        };
        let found = deleted_messages(&bundle, &[]);
        assert_eq!(found.len(), 1);
        let (d, _) = &found[0];
        assert_eq!(d.recovered_from.as_deref(), Some("a.crypt"));
        assert_eq!(d.recovered_content, Some(Content::Text { text: "gone".into() }));
        assert_eq!(d.direction, Some(Direction::Incoming));
        assert_eq!(d.exchanged_at, Some(EpochMillis(5000)));
        assert_eq!(d.evidence_kinds, [DeletionEvidence::Backup]);
    }
}
