//! Report documents: canonical JSON and a CSV timeline export.
//!
//! Every time field is written twice, as epoch milliseconds and rendered in the
//! requested UTC offset. Object keys are sorted, so the same bundle always
//! gives the same bytes.

use chrono::FixedOffset;
use serde::Serialize;
use serde_json::{json, Value};

use crate::correlate::content::Content;
use crate::correlate::groups::GroupTimeline;
use crate::correlate::{Analysis, Finding, Histories};
use crate::model::time::render_millis;
use crate::model::{CaseBundle, EpochMillis, LogCoverage, ParseWarning};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Keys whose integer values are epoch milliseconds.
pub const TIME_FIELDS: &[&str] = &[
    "added_at",
    "ambiguous_unblocks",
    "created_at",
    "deleted_at",
    "device_ack_at",
    "effective_time",
    "exchanged_at",
    "first",
    "last",
    "last_blocked_at",
    "received_at",
    "sent_at",
    "server_ack_at",
    "time",
    "unblocked_at",
];

const CLOCK_NOTE: &str = "times come from the clock of the device that wrote them; \
                          times from different devices are not compared as ground truth";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleSummary {
    pub contacts: usize,
    pub messages: usize,
    pub chat_list: usize,
    pub log_events: usize,
    pub backups: usize,
    pub backup_messages: usize,
    pub media_files: usize,
    pub avatar_files: usize,
    pub registered_number: Option<String>,
    pub own_avatar_present: bool,
    pub log_coverage: Option<LogCoverage>,
}

impl BundleSummary {
    pub fn of(bundle: &CaseBundle) -> Self {
        BundleSummary {
            contacts: bundle.contacts.len(),
            messages: bundle.messages.len(),
            chat_list: bundle.chat_list.len(),
            log_events: bundle.log_events.len(),
            backups: bundle.backups.len(),
            backup_messages: bundle.backups.iter().map(|b| b.messages.len()).sum(),
            media_files: bundle.media_inventory.len(),
            avatar_files: bundle.avatar_inventory.len(),
            registered_number: bundle.registered_number.clone(),
            own_avatar_present: bundle.own_avatar_present,
            log_coverage: bundle.log_coverage(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub tool_version: String,
    pub clock_note: String,
    pub bundle_summary: BundleSummary,
    pub findings: Vec<Finding>,
    pub conversations: Histories,
    pub group_timelines: Vec<GroupTimeline>,
    pub warnings: Vec<ParseWarning>,
}

impl ReportDocument {
    pub fn new(bundle: &CaseBundle, analysis: Analysis) -> Self {
        let mut warnings = bundle.warnings.clone();
        warnings.extend(analysis.warnings);
        warnings.sort();
        ReportDocument {
            tool_version: TOOL_VERSION.to_string(),
            clock_note: CLOCK_NOTE.to_string(),
            bundle_summary: BundleSummary::of(bundle),
            findings: analysis.findings,
            conversations: analysis.histories,
            group_timelines: analysis.group_timelines,
            warnings,
        }
    }
}

/// Chat and group chronologies without findings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineDocument {
    pub tool_version: String,
    pub conversations: Histories,
    pub group_timelines: Vec<GroupTimeline>,
}

fn stamp(value: i64, offset: FixedOffset) -> Value {
    json!({
        "epoch_ms": value,
        "rendered": render_millis(EpochMillis(value), offset),
    })
}

fn annotate(value: &mut Value, offset: FixedOffset) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if TIME_FIELDS.contains(&key.as_str()) {
                    match v {
                        Value::Number(n) if n.is_i64() => *v = stamp(n.as_i64().unwrap_or(-1), offset),
                        Value::Array(items) => {
                            for item in items.iter_mut() {
                                if let Some(n) = item.as_i64() {
                                    *item = stamp(n, offset);
                                }
                            }
                        }
                        other => annotate(other, offset),
                    }
                } else {
                    annotate(v, offset);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|v| annotate(v, offset)),
        _ => {}
    }
}

/// Canonical JSON: sorted keys, two-space indentation, trailing newline.
pub fn render_json<T: Serialize>(document: &T, offset: FixedOffset) -> String {
    let mut value = serde_json::to_value(document).expect("report types always serialize");
    annotate(&mut value, offset);
    let mut text = serde_json::to_string_pretty(&value).expect("values always serialize");
    text.push('\n');
    text
}

pub fn content_summary(content: &Content) -> String {
    match content {
        Content::Text { text } => text.clone(),
        Content::Media {
            kind,
            server_filename,
            size,
            ..
        } => format!(
            "{} {} ({} bytes)",
            serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            server_filename.as_deref().unwrap_or("?"),
            size.map_or("?".to_string(), |s| s.to_string())
        ),
        Content::ContactCard { display_name, .. } => format!("contact card {}", display_name.as_deref().unwrap_or("?")),
        Content::GeoPoint { lat, lon, .. } => format!("location {lat},{lon}"),
        Content::Control {
            op,
            code,
            member,
            group_name,
        } => {
            let mut parts = vec![match op {
                Some(op) => format!("{op:?}").to_lowercase(),
                None => format!("control {}", code.map_or("?".to_string(), |c| c.to_string())),
            }];
            parts.extend(member.clone());
            parts.extend(group_name.as_ref().map(|n| format!("name={n}")));
            parts.join(" ")
        }
    }
}

const CSV_HEADER: [&str; 11] = [
    "kind",
    "conversation",
    "epoch_ms",
    "time",
    "record_id",
    "key_id",
    "from_me",
    "author",
    "state",
    "content",
    "origin",
];

/// One row per message and per group event, conversation by conversation.
pub fn timeline_csv(histories: &Histories, groups: &[GroupTimeline], offset: FixedOffset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rendered = |t: EpochMillis| render_millis(t, offset).unwrap_or_default();
    w.write_record(CSV_HEADER).expect("in-memory write");
    for (conversation, entries) in histories {
        for e in entries {
            let origin = match &e.origin {
                crate::correlate::Origin::Live => "live".to_string(),
                crate::correlate::Origin::RecoveredFromBackup { backup } => format!("recovered-from-backup {backup}"),
            };
            w.write_record([
                "message",
                conversation,
                &e.effective_time.0.to_string(),
                &rendered(e.effective_time),
                &e.record_id.to_string(),
                &e.key_id,
                &e.from_me.to_string(),
                e.author.as_deref().unwrap_or(""),
                &e.state.code.label(),
                &content_summary(&e.content),
                &origin,
            ])
            .expect("in-memory write");
        }
    }
    for g in groups {
        for e in &g.events {
            w.write_record([
                "group_event",
                &g.group_id.raw,
                &e.time.0.to_string(),
                &rendered(e.time),
                "",
                "",
                "",
                e.member.as_deref().unwrap_or(""),
                &format!("{:?}", e.kind).to_lowercase(),
                g.group_name.as_deref().unwrap_or(""),
                &e.source.citation(&g.group_id),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields")
}
