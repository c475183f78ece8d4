//! Group membership over time, replayed from control messages (status 6) with
//! log events filling in for deleted control rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::content::ControlOp;
use super::deleted::recovered_from_backups;
use super::finding::message_citation;
use crate::model::{CaseBundle, EpochMillis, GroupId, LogEventKind, MessageRecord, ParseWarning};

/// Log and database copies of one event are merged when this close in time.
pub const DEDUP_WINDOW_MS: i64 = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EventSource {
    Database { record_id: i64 },
    Backup { backup: String, record_id: i64 },
    Log { citation: String },
    /// Creation implied by the group id itself; the control row is gone.
    GroupId,
}

impl EventSource {
    pub fn citation(&self, group: &GroupId) -> String {
        match self {
            EventSource::Database { record_id } => message_citation(None, *record_id),
            EventSource::Backup { backup, record_id } => message_citation(Some(backup), *record_id),
            EventSource::Log { citation } => citation.clone(),
            EventSource::GroupId => format!("group id {}", group.raw),
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self, EventSource::Log { .. })
    }

    fn rank(&self) -> u8 {
        match self {
            EventSource::Database { .. } => 0,
            EventSource::Backup { .. } => 1,
            EventSource::Log { .. } => 2,
            EventSource::GroupId => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupEvent {
    pub time: EpochMillis,
    pub kind: ControlOp,
    /// Joining or leaving member; the creator for `Created`.
    pub member: Option<String>,
    pub source: EventSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTimeline {
    pub group_id: GroupId,
    pub group_name: Option<String>,
    pub events: Vec<GroupEvent>,
}

impl GroupTimeline {
    /// Members after replaying every event at or before `t`.
    pub fn membership_at(&self, t: EpochMillis) -> BTreeSet<String> {
        let mut members = BTreeSet::new();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            match (e.kind, &e.member) {
                (ControlOp::Created, _) => {
                    members.insert(self.group_id.creator.raw.clone());
                }
                (ControlOp::Joined, Some(m)) => {
                    members.insert(m.clone());
                }
                (ControlOp::Left, Some(m)) => {
                    members.remove(m);
                }
                _ => {}
            }
        }
        members
    }

    pub fn was_member(&self, jid: &str, t: EpochMillis) -> bool {
        self.membership_at(t).contains(jid)
    }

    pub fn created_at(&self) -> EpochMillis {
        self.events
            .iter()
            .find(|e| e.kind == ControlOp::Created)
            .map(|e| e.time)
            .unwrap_or(EpochMillis(self.group_id.creation_time.saturating_mul(1000)))
    }

    /// Times at which membership may change.
    pub fn change_points(&self) -> Vec<EpochMillis> {
        let mut t: Vec<_> = self.events.iter().map(|e| e.time).collect();
        t.dedup();
        t
    }
}

fn control_event(record: &MessageRecord, source: EventSource) -> Option<(GroupEvent, Option<String>)> {
    let op = ControlOp::from_media_size(record.media_size?)?;
    let member = match op {
        ControlOp::Created => None,
        _ => Some(record.remote_resource.first()?.raw.clone()),
    };
    let name = (op == ControlOp::Created).then(|| record.data.clone()).flatten();
    Some((
        GroupEvent {
            time: record.timestamp,
            kind: op,
            member,
            source,
        },
        name,
    ))
}

#[derive(Default)]
struct Builder {
    group: Option<GroupId>,
    name: Option<String>,
    events: Vec<GroupEvent>,
}

impl Builder {
    fn add(&mut self, event: GroupEvent, name: Option<String>) {
        let duplicate = self.events.iter().any(|e| {
            e.kind == event.kind
                && e.member == event.member
                && (e.time.0 - event.time.0).abs() <= DEDUP_WINDOW_MS
        });
        if duplicate {
            return;
        }
        if self.name.is_none() {
            self.name = name;
        }
        self.events.push(event);
    }
}

/// One timeline per group seen anywhere in the bundle, with consistency warnings.
pub fn group_membership_timeline(bundle: &CaseBundle) -> (Vec<GroupTimeline>, Vec<ParseWarning>) {
    let mut builders: BTreeMap<String, Builder> = BTreeMap::new();
    let mut warnings = Vec::new();

    let note_group = |builders: &mut BTreeMap<String, Builder>, group: GroupId| {
        builders.entry(group.raw.clone()).or_default().group.get_or_insert(group);
    };

    // Database rows first, then backups, then logs: the first copy of an event wins.
    let live = bundle.messages.iter().map(|m| (None, m));
    let recovered = recovered_from_backups(bundle).into_iter().map(|(b, m)| (Some(b), m));
    for (backup, record) in live.chain(recovered) {
        let Some(group) = record.key_remote_jid.group_id() else { continue };
        note_group(&mut builders, group.clone());
        if !record.is_control() {
            continue;
        }
        let source = match backup {
            None => EventSource::Database { record_id: record.id },
            Some(b) => EventSource::Backup {
                backup: b.to_string(),
                record_id: record.id,
            },
        };
        match control_event(record, source) {
            Some((event, name)) => builders.get_mut(&group.raw).unwrap().add(event, name),
            None => warnings.push(ParseWarning::new(
                "correlator",
                Some(message_citation(backup, record.id)),
                format!(
                    "control message with unrecognized operation media_size={:?}",
                    record.media_size
                ),
            )),
        }
    }
    for chat in &bundle.chat_list {
        if let Some(group) = chat.key_remote_jid.group_id() {
            note_group(&mut builders, group);
        }
    }
    for e in &bundle.log_events {
        let op = match e.kind {
            LogEventKind::GroupCreated => ControlOp::Created,
            LogEventKind::GroupMemberAdded => ControlOp::Joined,
            LogEventKind::GroupMemberLeft => ControlOp::Left,
            _ => continue,
        };
        let Some(group) = e.group_id.clone() else { continue };
        if !e.occurred_at.is_present() {
            continue;
        }
        let member = match op {
            ControlOp::Created => None,
            _ => match &e.subject_jid {
                Some(j) => Some(j.raw.clone()),
                None => continue,
            },
        };
        note_group(&mut builders, group.clone());
        builders.get_mut(&group.raw).unwrap().add(
            GroupEvent {
                time: e.occurred_at,
                kind: op,
                member,
                source: EventSource::Log { citation: e.citation() },
            },
            e.detail.clone(),
        );
    }

    let mut timelines = Vec::with_capacity(builders.len());
    for (_, builder) in builders {
        let Some(group_id) = builder.group else { continue };
        let mut events = builder.events;
        if !events.iter().any(|e| e.kind == ControlOp::Created) {
            events.push(GroupEvent {
                time: EpochMillis(group_id.creation_time.saturating_mul(1000)),
                kind: ControlOp::Created,
                member: None,
                source: EventSource::GroupId,
            });
        }
        events.sort_by_key(|e| (e.time, e.kind, e.source.rank()));
        let timeline = GroupTimeline {
            group_id,
            group_name: builder.name,
            events,
        };
        check_timeline(&timeline, &mut warnings);
        timelines.push(timeline);
    }
    (timelines, warnings)
}

fn check_timeline(timeline: &GroupTimeline, warnings: &mut Vec<ParseWarning>) {
    let group = &timeline.group_id;
    let mut members = BTreeSet::new();
    let mut warn = |event: &GroupEvent, message: String| {
        warnings.push(ParseWarning::new(
            "correlator",
            Some(event.source.citation(group)),
            format!("group {}: {message}", group.raw),
        ));
    };
    for (i, e) in timeline.events.iter().enumerate() {
        match (e.kind, &e.member) {
            (ControlOp::Created, _) => {
                if i != 0 {
                    warn(e, "creation is not the first event".into());
                }
                if e.time.0 / 1000 != group.creation_time {
                    warn(
                        e,
                        format!(
                            "creation recorded at {} but the group id says {}",
                            e.time.0, group.creation_time
                        ),
                    );
                }
                members.insert(group.creator.raw.clone());
            }
            (ControlOp::Joined, Some(m)) => {
                if !members.insert(m.clone()) {
                    warn(e, format!("{m} joined while already a member"));
                }
            }
            (ControlOp::Left, Some(m)) if !members.remove(m) => {
                warn(e, format!("OrphanLeave: {m} left without having joined"));
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::test_support::{control, ms};

    const D: &str = "393201234567";
    const E: &str = "393351234567";
    const F: &str = "393331234567";

    fn jid(n: &str) -> String {
        format!("{n}@s.whatsapp.net")
    }

    /// Create Nov 11 2013 16:24:05, add E, add F Nov 12 10:40:48, F leaves
    /// Nov 14 22:11:36, E leaves Nov 15 09:49:54 (all UTC).
    fn scenario() -> (String, CaseBundle) {
        let created = 1384187045;
        let group = format!("{D}-{created}@g.us");
        let mut c = control(1, &group, created * 1000, 1, None);
        c.data = Some("wa test group".into());
        let bundle = CaseBundle {
            messages: vec![
                c,
                control(2, &group, created * 1000 + 2000, 4, Some(&jid(E))),
                control(3, &group, ms("2013-11-12T10:40:48Z"), 4, Some(&jid(F))),
                control(4, &group, ms("2013-11-14T22:11:36Z"), 5, Some(&jid(F))),
                control(5, &group, ms("2013-11-15T09:49:54Z"), 5, Some(&jid(E))),
            ],
            ..Default::default()
        };
        (group, bundle)
    }

    #[test]
    fn five_event_timeline() {
        let (_, bundle) = scenario();
        let (timelines, warnings) = group_membership_timeline(&bundle);
        assert!(warnings.is_empty(), "{warnings:?}");
        let t = &timelines[0];
        assert_eq!(t.group_name.as_deref(), Some("wa test group"));
        let kinds: Vec<_> = t.events.iter().map(|e| e.kind).collect();
        use ControlOp::*;
        assert_eq!(kinds, [Created, Joined, Joined, Left, Left]);
        let at = |s| t.membership_at(EpochMillis(ms(s)));
        assert_eq!(at("2013-11-13T00:00:00Z"), [jid(D), jid(E), jid(F)].into_iter().collect());
        assert_eq!(at("2013-11-15T00:00:00Z"), [jid(D), jid(E)].into_iter().collect());
        assert_eq!(at("2013-11-16T00:00:00Z"), [jid(D)].into_iter().collect());
        assert!(at("2013-11-11T00:00:00Z").is_empty());
    }

    #[test]
    fn logs_backfill_deleted_control_rows() {
        let (group, mut bundle) = scenario();
        bundle.messages.retain(|m| m.id != 4);
        let g = crate::model::parse_group_id(&group).unwrap();
        bundle.log_events.push(crate::model::LogEvent {
            occurred_at: EpochMillis(ms("2013-11-14T22:11:36Z")),
            kind: LogEventKind::GroupMemberLeft,
            subject_jid: Some(crate::model::WaJid::user(F)),
            message_key: None,
            group_id: Some(g),
            detail: None,
            raw_line: String::new(),
            source_file: "whatsapp.log".into(),
            line_number: 9,
        });
        let (timelines, warnings) = group_membership_timeline(&bundle);
        assert!(warnings.is_empty(), "{warnings:?}");
        let t = &timelines[0];
        assert_eq!(t.events.len(), 5);
        assert!(t.events[3].source.is_log());
        assert_eq!(t.events[3].member.as_deref(), Some(jid(F).as_str()));
    }

    #[test]
    fn creation_only_and_implied_creation() {
        let group = format!("{D}-1384187045@g.us");
        let bundle = CaseBundle {
            messages: vec![control(1, &group, 1384187045000, 1, None)],
            ..Default::default()
        };
        let (t, _) = group_membership_timeline(&bundle);
        assert_eq!(t[0].events.len(), 1);
        assert_eq!(t[0].membership_at(EpochMillis(i64::MAX)), [jid(D)].into_iter().collect());

        let bundle = CaseBundle {
            messages: vec![control(7, &group, 1384190000000, 4, Some(&jid(E)))],
            ..Default::default()
        };
        let (t, w) = group_membership_timeline(&bundle);
        assert!(w.is_empty());
        assert_eq!(t[0].events[0].source, EventSource::GroupId);
        assert_eq!(t[0].events.len(), 2);
    }

    #[test]
    fn orphan_leave_is_kept_and_flagged() {
        let group = format!("{D}-1384187045@g.us");
        let bundle = CaseBundle {
            messages: vec![
                control(1, &group, 1384187045000, 1, None),
                control(2, &group, 1384190000000, 5, Some(&jid(F))),
            ],
            ..Default::default()
        };
        let (t, w) = group_membership_timeline(&bundle);
        assert_eq!(t[0].events.len(), 2);
        assert_eq!(w.len(), 1);
        assert!(w[0].message.contains("OrphanLeave"));
    }
}
