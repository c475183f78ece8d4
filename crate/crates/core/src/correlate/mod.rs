//! Correlation of a parsed bundle into histories, timelines and findings.

pub mod contacts;
pub mod content;
pub mod deleted;
pub mod finding;
pub mod groups;
pub mod history;
pub mod identity;
pub mod media;
pub mod partners;
pub mod state;

use serde::Serialize;

pub use contacts::{block_statuses, contact_addition_times, infer_deleted_contacts, BlockStatus, BlockStatusReport, BlockStep};
pub use content::{extract_content, Content};
pub use deleted::{backup_diff, infer_deleted_messages, recovered_from_backups, DeletedMessage};
pub use finding::{sort_findings, Category, Finding, GroupSummary, Payload};
pub use groups::{group_membership_timeline, GroupEvent, GroupTimeline};
pub use history::{reconstruct_history, Histories, HistoryEntry, Origin};
pub use identity::{identity_check, IdentityCheck, IdentityOutcome};
pub use media::{correlate_media, identify_local_files, MatchLevel, MediaCorrelation};
pub use partners::{resolve_partners, BroadcastSummary, MessagePartners, PartnerResolution};
pub use state::{message_state, MessageState, StateCode};

use crate::model::{CaseBundle, ParseWarning};

#[derive(Debug, Clone, Default)]
pub struct AnalysisOptions<'a> {
    pub sim_number: Option<String>,
    /// A second device; media exchanged with it is correlated both ways.
    pub peer: Option<&'a CaseBundle>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub histories: Histories,
    pub partners: std::collections::BTreeMap<String, MessagePartners>,
    pub group_timelines: Vec<GroupTimeline>,
    pub findings: Vec<Finding>,
    pub warnings: Vec<ParseWarning>,
}

fn group_summary(t: &GroupTimeline) -> Finding {
    let end = t.events.last().map(|e| e.time).unwrap_or(t.created_at());
    Finding {
        category: Category::GroupMembership,
        subject: t.group_id.raw.clone(),
        time: Some(t.created_at()),
        confidence_note: if t.events.iter().any(|e| e.source.is_log()) {
            "some events come from log lines because their control messages were deleted".into()
        } else {
            "replayed from control messages".into()
        },
        evidence: t.events.iter().map(|e| e.source.citation(&t.group_id)).collect(),
        payload: Payload::GroupMembership(GroupSummary {
            group_id: t.group_id.raw.clone(),
            group_name: t.group_name.clone(),
            created_at: t.created_at(),
            events: t.events.len(),
            events_from_logs: t.events.iter().filter(|e| e.source.is_log()).count(),
            members_at_end: t.membership_at(end).into_iter().collect(),
        }),
    }
}

/// Runs every analysis. Output order does not depend on evaluation order.
pub fn analyze(bundle: &CaseBundle, options: &AnalysisOptions<'_>) -> Analysis {
    let mut warnings = Vec::new();
    for m in &bundle.messages {
        for w in state::state_warnings(m) {
            warnings.push(ParseWarning::new(
                "correlator",
                Some(finding::message_citation(None, m.id)),
                w,
            ));
        }
    }
    let (group_timelines, group_warnings) = group_membership_timeline(bundle);
    warnings.extend(group_warnings);
    let owner = bundle.owner_jid();
    let resolution = resolve_partners(&bundle.messages, owner.as_deref(), &group_timelines);
    warnings.extend(resolution.warnings);

    let mut findings = Vec::new();
    for b in resolution.broadcasts {
        findings.push(Finding {
            category: Category::Conversation,
            subject: b.key_id.clone(),
            time: Some(b.sent_at),
            confidence_note: format!(
                "broadcast to {} destinations; recipient_count {}",
                b.destinations.len(),
                b.recipient_count.map_or("absent".to_string(), |n| n.to_string())
            ),
            evidence: b.record_ids.iter().map(|id| finding::message_citation(None, *id)).collect(),
            payload: Payload::Broadcast(b),
        });
    }
    findings.extend(group_timelines.iter().map(group_summary));
    findings.extend(infer_deleted_messages(bundle, &group_timelines));
    findings.extend(infer_deleted_contacts(bundle));
    findings.extend(contacts::contact_addition_findings(bundle));
    findings.extend(contacts::block_status_findings(bundle));
    findings.extend(media::media_findings(
        identify_local_files(&bundle.messages, &bundle.media_inventory),
        None,
        None,
    ));
    if let Some(peer) = options.peer {
        findings.extend(media::media_findings(
            correlate_media(&bundle.messages, &peer.messages, &peer.media_inventory),
            None,
            Some("peer"),
        ));
        findings.extend(media::media_findings(
            correlate_media(&peer.messages, &bundle.messages, &bundle.media_inventory),
            Some("peer"),
            None,
        ));
    }
    findings.push(identity_check(bundle, options.sim_number.as_deref()));
    sort_findings(&mut findings);
    warnings.sort();

    Analysis {
        histories: reconstruct_history(bundle),
        partners: resolution.messages,
        group_timelines,
        findings,
        warnings,
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::model::{parse_jid, parse_message_key, EpochMillis, LogEvent, LogEventKind, MessageRecord, WaJid};

    pub fn ms(rfc3339: &str) -> i64 {
        chrono::DateTime::parse_from_rfc3339(rfc3339).unwrap().timestamp_millis()
    }

    pub fn message(id: i64, jid: &str, key: &str, from_me: bool) -> MessageRecord {
        MessageRecord {
            id,
            key_remote_jid: parse_jid(jid).unwrap_or_else(|_| WaJid::unrecognized(jid)),
            key_id_raw: key.to_string(),
            key_id: parse_message_key(key).ok(),
            from_me,
            status_code: 0,
            timestamp: EpochMillis(id * 1000),
            received_timestamp: EpochMillis::ABSENT,
            receipt_server_timestamp: EpochMillis::ABSENT,
            receipt_device_timestamp: EpochMillis::ABSENT,
            send_timestamp: -1,
            needs_push: 0,
            recipient_count: None,
            remote_resource_raw: None,
            remote_resource: Vec::new(),
            media_wa_type: 0,
            data: None,
            raw_data: None,
            media_hash: None,
            media_url: None,
            media_mime_type: None,
            media_size: None,
            media_name: None,
            media_duration: None,
            latitude: None,
            longitude: None,
            thumb_image: None,
        }
    }

    pub fn control(id: i64, group: &str, at: i64, op: i64, member: Option<&str>) -> MessageRecord {
        let mut m = message(id, group, &format!("1300000000-{}", 900 + id), false);
        m.status_code = 6;
        m.timestamp = EpochMillis(at);
        m.media_size = Some(op);
        if let Some(member) = member {
            m.remote_resource_raw = Some(member.to_string());
            m.remote_resource = vec![parse_jid(member).unwrap()];
        }
        m
    }

    pub fn log_event(line: usize, at: &str, kind: LogEventKind, jid: Option<&str>, key: Option<&str>) -> LogEvent {
        let subject_jid = jid.map(|j| parse_jid(j).unwrap());
        LogEvent {
            occurred_at: EpochMillis(ms(at)),
            kind,
            group_id: subject_jid.as_ref().and_then(WaJid::group_id),
            subject_jid,
            message_key: key.map(|k| parse_message_key(k).unwrap()),
            detail: None,
            raw_line: String::new(),
            source_file: "whatsapp.log".into(),
            line_number: line,
        }
    }
}
