//! Who took part in each message: direct partner, broadcast destinations or
//! group members at send time.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::groups::GroupTimeline;
use crate::model::records::status;
use crate::model::{EpochMillis, MessageRecord, ParseWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerKind {
    Direct,
    BroadcastSent,
    BroadcastReceived,
    Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePartners {
    pub key_id: String,
    pub kind: PartnerKind,
    pub from_me: bool,
    /// Originator; `None` when the device owner sent it and their number is unknown.
    pub author: Option<String>,
    pub partners: BTreeSet<String>,
    pub sent_at: EpochMillis,
    pub record_ids: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastSummary {
    pub key_id: String,
    pub destinations: Vec<String>,
    pub recipient_count: Option<i64>,
    /// `_id` of the record whose `key_remote_jid` is `broadcast`.
    pub self_record: Option<i64>,
    pub record_ids: Vec<i64>,
    pub needs_push: Vec<i64>,
    pub sent_at: EpochMillis,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartnerResolution {
    /// Keyed by raw `key_id`; control messages are not included.
    pub messages: BTreeMap<String, MessagePartners>,
    pub broadcasts: Vec<BroadcastSummary>,
    pub warnings: Vec<ParseWarning>,
}

pub type TimelineIndex<'a> = BTreeMap<&'a str, &'a GroupTimeline>;

pub fn index_timelines(timelines: &[GroupTimeline]) -> TimelineIndex<'_> {
    timelines.iter().map(|t| (t.group_id.raw.as_str(), t)).collect()
}

/// Partners of the rows sharing one key (several only for a sent broadcast).
pub fn partners_of(
    rows: &[&MessageRecord],
    owner: Option<&str>,
    timelines: &TimelineIndex<'_>,
    warnings: &mut Vec<ParseWarning>,
) -> Option<(MessagePartners, Option<BroadcastSummary>)> {
    let first = *rows.first()?;
    let record_ids: Vec<i64> = rows.iter().map(|r| r.id).collect();
    let owner_author = || owner.map(str::to_string);

    if rows.iter().any(|r| r.is_broadcast_sender_record()) {
        let mut destinations = BTreeSet::new();
        let mut self_record = None;
        for r in rows {
            if r.key_remote_jid.is_broadcast() {
                self_record = Some(r.id);
            } else {
                destinations.insert(r.key_remote_jid.raw.clone());
            }
            destinations.extend(r.remote_resource.iter().map(|j| j.raw.clone()));
        }
        let recipient_count = rows.iter().find_map(|r| r.recipient_count);
        let per_recipient = rows.iter().filter(|r| !r.key_remote_jid.is_broadcast()).count();
        if let Some(n) = recipient_count {
            if n as usize != destinations.len() || n as usize != per_recipient {
                warnings.push(ParseWarning::new(
                    "correlator",
                    Some(format!("key_id {}", first.key_id_raw)),
                    format!(
                        "BroadcastCountMismatch: recipient_count {n}, {} destinations, {per_recipient} recipient records",
                        destinations.len()
                    ),
                ));
            }
        }
        let sent_at = rows.iter().map(|r| r.timestamp).min().unwrap_or(first.timestamp);
        let summary = BroadcastSummary {
            key_id: first.key_id_raw.clone(),
            destinations: destinations.iter().cloned().collect(),
            recipient_count,
            self_record,
            record_ids: record_ids.clone(),
            needs_push: rows.iter().map(|r| r.needs_push).collect(),
            sent_at,
        };
        let partners = MessagePartners {
            key_id: first.key_id_raw.clone(),
            kind: PartnerKind::BroadcastSent,
            from_me: true,
            author: owner_author(),
            partners: destinations,
            sent_at,
            record_ids,
        };
        return Some((partners, Some(summary)));
    }

    let mut partners = BTreeSet::new();
    let (kind, author) = if let Some(group) = first.key_remote_jid.group_id() {
        let author = match first.remote_resource.first() {
            Some(j) => Some(j.raw.clone()),
            None if first.from_me || first.status_code == status::ON_SERVER => owner_author(),
            None => None,
        };
        match timelines.get(group.raw.as_str()) {
            Some(t) => partners.extend(t.membership_at(first.timestamp)),
            None => warnings.push(ParseWarning::new(
                "correlator",
                Some(format!("key_id {}", first.key_id_raw)),
                format!("no membership timeline for group {}", group.raw),
            )),
        }
        partners.extend(author.clone());
        (PartnerKind::Group, author)
    } else {
        partners.insert(first.key_remote_jid.raw.clone());
        let kind = if first.key_id.as_ref().is_some_and(|k| k.broadcast_received) {
            PartnerKind::BroadcastReceived
        } else {
            PartnerKind::Direct
        };
        let author = if first.from_me {
            owner_author()
        } else {
            Some(first.key_remote_jid.raw.clone())
        };
        (kind, author)
    };
    if let Some(owner) = owner {
        partners.remove(owner);
    }
    Some((
        MessagePartners {
            key_id: first.key_id_raw.clone(),
            kind,
            from_me: first.from_me,
            author,
            partners,
            sent_at: first.timestamp,
            record_ids,
        },
        None,
    ))
}

/// Groups rows by key, ordered as in `records`.
pub fn rows_by_key<'a>(records: impl IntoIterator<Item = &'a MessageRecord>) -> BTreeMap<&'a str, Vec<&'a MessageRecord>> {
    let mut by_key: BTreeMap<&str, Vec<&MessageRecord>> = BTreeMap::new();
    for r in records {
        by_key.entry(r.key_id_raw.as_str()).or_default().push(r);
    }
    by_key
}

pub fn resolve_partners(
    messages: &[MessageRecord],
    owner: Option<&str>,
    timelines: &[GroupTimeline],
) -> PartnerResolution {
    let index = index_timelines(timelines);
    let mut out = PartnerResolution::default();
    for (key, rows) in rows_by_key(messages.iter().filter(|m| !m.is_control())) {
        // Only a broadcast sender legitimately stores one key on several rows.
        let broadcast = rows.iter().any(|r| r.is_broadcast_sender_record());
        if rows.len() > 1 && !broadcast {
            out.warnings.push(ParseWarning::new(
                "correlator",
                Some(format!("key_id {key}")),
                format!("{} records share key_id outside a broadcast", rows.len()),
            ));
        }
        if let Some((partners, summary)) = partners_of(&rows, owner, &index, &mut out.warnings) {
            out.broadcasts.extend(summary);
            out.messages.insert(key.to_string(), partners);
        }
    }
    out
}
