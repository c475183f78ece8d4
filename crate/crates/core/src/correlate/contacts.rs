//! Contact-side inferences from the logs: when contacts were added, which were
//! deleted, and who is blocked.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::finding::{Category, Finding, Payload};
use crate::log::classify_block_events;
use crate::model::{CaseBundle, EpochMillis, LogEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactAddition {
    pub jid: String,
    pub added_at: EpochMillis,
    pub still_present: bool,
}

/// Earliest addition evidence (not-in-db, query, avatar download) per jid.
pub fn contact_addition_times(bundle: &CaseBundle) -> Vec<(String, EpochMillis, String)> {
    let mut first: BTreeMap<String, (EpochMillis, String)> = BTreeMap::new();
    for e in &bundle.log_events {
        if !e.kind.is_contact_addition() || !e.occurred_at.is_present() {
            continue;
        }
        let Some(jid) = e.subject_jid.as_ref().filter(|j| j.is_user()) else { continue };
        first
            .entry(jid.raw.clone())
            .and_modify(|(t, c)| {
                if e.occurred_at < *t {
                    *t = e.occurred_at;
                    *c = e.citation();
                }
            })
            .or_insert((e.occurred_at, e.citation()));
    }
    first.into_iter().map(|(j, (t, c))| (j, t, c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletedContactBasis {
    LogAddition,
    OrphanAvatar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletedContact {
    pub jid: String,
    pub added_at: Option<EpochMillis>,
    pub basis: Vec<DeletedContactBasis>,
    pub avatar_files: Vec<String>,
}

/// Contacts with addition evidence but no `wa_contacts` row, plus user avatars no row accounts for.
pub fn deleted_contacts(bundle: &CaseBundle) -> Vec<(DeletedContact, Vec<String>)> {
    let present: BTreeSet<&str> = bundle.contacts.iter().map(|c| c.jid.raw.as_str()).collect();
    let owner = bundle.owner_jid();
    let mut out: BTreeMap<String, (DeletedContact, Vec<String>)> = BTreeMap::new();
    for (jid, at, citation) in contact_addition_times(bundle) {
        if present.contains(jid.as_str()) || owner.as_deref() == Some(jid.as_str()) {
            continue;
        }
        out.insert(
            jid.clone(),
            (
                DeletedContact {
                    jid,
                    added_at: Some(at),
                    basis: vec![DeletedContactBasis::LogAddition],
                    avatar_files: Vec::new(),
                },
                vec![citation],
            ),
        );
    }
    for avatar in &bundle.avatar_inventory {
        if !avatar.jid.ends_with(crate::model::ids::USER_SUFFIX)
            || present.contains(avatar.jid.as_str())
            || owner.as_deref() == Some(avatar.jid.as_str())
        {
            continue;
        }
        let (contact, evidence) = out.entry(avatar.jid.clone()).or_insert_with(|| {
            (
                DeletedContact {
                    jid: avatar.jid.clone(),
                    added_at: None,
                    basis: Vec::new(),
                    avatar_files: Vec::new(),
                },
                Vec::new(),
            )
        });
        if !contact.basis.contains(&DeletedContactBasis::OrphanAvatar) {
            contact.basis.push(DeletedContactBasis::OrphanAvatar);
        }
        contact.avatar_files.push(avatar.path.clone());
        evidence.push(avatar.path.clone());
    }
    out.into_values().collect()
}

pub fn infer_deleted_contacts(bundle: &CaseBundle) -> Vec<Finding> {
    let mut findings: Vec<Finding> = deleted_contacts(bundle)
        .into_iter()
        .map(|(c, evidence)| {
            let note = if c.basis.contains(&DeletedContactBasis::LogAddition) {
                let mut n = "added according to the logs but absent from wa_contacts; deletion time unrecoverable".to_string();
                if !c.avatar_files.is_empty() {
                    n.push_str("; corroborated by an avatar file with no contact row");
                }
                n
            } else {
                "avatar file with no contact row; no addition evidence in the available logs; deletion time unrecoverable".to_string()
            };
            Finding {
                category: Category::DeletedContact,
                subject: c.jid.clone(),
                time: c.added_at,
                payload: Payload::DeletedContact(c),
                confidence_note: note,
                evidence,
            }
        })
        .collect();
    if !bundle.has_logs() {
        findings.push(no_log_coverage(Category::DeletedContact, "deleted contacts"));
    }
    findings
}

pub fn no_log_coverage(category: Category, analysis: &str) -> Finding {
    Finding {
        category,
        subject: String::new(),
        time: None,
        payload: Payload::NoLogCoverage {
            analysis: analysis.to_string(),
        },
        confidence_note: format!("no log file available: no inference possible for {analysis}"),
        evidence: vec![crate::layout::LOGS.to_string()],
    }
}

pub fn contact_addition_findings(bundle: &CaseBundle) -> Vec<Finding> {
    let present: BTreeSet<&str> = bundle.contacts.iter().map(|c| c.jid.raw.as_str()).collect();
    let mut findings: Vec<Finding> = contact_addition_times(bundle)
        .into_iter()
        .map(|(jid, added_at, citation)| Finding {
            category: Category::ContactAdded,
            subject: jid.clone(),
            time: Some(added_at),
            confidence_note: "earliest addition evidence in the available logs; earlier logs may have been rotated away".into(),
            payload: Payload::ContactAdded(ContactAddition {
                still_present: present.contains(jid.as_str()),
                jid,
                added_at,
            }),
            evidence: vec![citation],
        })
        .collect();
    if !bundle.has_logs() {
        findings.push(no_log_coverage(Category::ContactAdded, "contact addition times"));
    }
    findings
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Blocked,
    Unblocked,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStatusReport {
    pub jid: String,
    pub status: BlockStatus,
    pub last_blocked_at: EpochMillis,
    pub unblocked_at: Option<EpochMillis>,
    /// Unblock events that may have applied to this contact but cannot be attributed.
    pub ambiguous_unblocks: Vec<EpochMillis>,
}

/// A block or an anonymous unblock, in log order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockStep {
    Block(String),
    Unblock,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Held {
    Definite,
    Uncertain,
}

/// Status per contact after `steps`: blocked with no later unblock; unblocked
/// when an unblock came while it was the only contact possibly blocked;
/// unknown otherwise.
pub fn block_statuses(steps: &[(BlockStep, EpochMillis)]) -> BTreeMap<String, BlockStatusReport> {
    let mut reports: BTreeMap<String, BlockStatusReport> = BTreeMap::new();
    let mut held: BTreeMap<String, Held> = BTreeMap::new();
    for (step, at) in steps {
        match step {
            BlockStep::Block(jid) => {
                held.insert(jid.clone(), Held::Definite);
                reports.insert(
                    jid.clone(),
                    BlockStatusReport {
                        jid: jid.clone(),
                        status: BlockStatus::Blocked,
                        last_blocked_at: *at,
                        unblocked_at: None,
                        ambiguous_unblocks: Vec::new(),
                    },
                );
            }
            BlockStep::Unblock => {
                if held.len() == 1 {
                    let (jid, _) = held.pop_first().unwrap();
                    let r = reports.get_mut(&jid).unwrap();
                    r.unblocked_at = Some(*at);
                } else {
                    for (jid, h) in held.iter_mut() {
                        *h = Held::Uncertain;
                        reports.get_mut(jid).unwrap().ambiguous_unblocks.push(*at);
                    }
                }
            }
        }
    }
    for r in reports.values_mut() {
        r.status = match held.get(&r.jid) {
            Some(Held::Definite) => BlockStatus::Blocked,
            Some(Held::Uncertain) => BlockStatus::Unknown,
            None => BlockStatus::Unblocked,
        };
    }
    reports
}

type Citations = BTreeMap<String, Vec<String>>;

fn steps_from_log(events: &[LogEvent]) -> (Vec<(BlockStep, EpochMillis)>, Citations) {
    let classified = classify_block_events(events);
    let mut merged: Vec<(EpochMillis, usize, BlockStep, String)> = Vec::new();
    let mut order = 0;
    for b in &classified.blocks {
        merged.push((b.at, order, BlockStep::Block(b.jid.raw.clone()), b.citation.clone()));
        order += 1;
    }
    for u in &classified.unblocks {
        merged.push((u.at, order, BlockStep::Unblock, u.citation.clone()));
        order += 1;
    }
    // Ties keep the original log order.
    let index_of: BTreeMap<String, usize> = events
        .iter()
        .enumerate()
        .map(|(i, e)| (e.citation(), i))
        .collect();
    merged.sort_by_key(|(at, order, _, citation)| (*at, index_of.get(citation).copied().unwrap_or(*order)));

    let mut citations: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut unblock_citations = Vec::new();
    let mut steps = Vec::new();
    for (at, _, step, citation) in merged {
        match &step {
            BlockStep::Block(jid) => citations.entry(jid.clone()).or_default().push(citation),
            BlockStep::Unblock => unblock_citations.push((at, citation)),
        }
        steps.push((step, at));
    }
    for (jid, list) in citations.iter_mut() {
        let first_block = steps
            .iter()
            .find(|(s, _)| matches!(s, BlockStep::Block(j) if j == jid))
            .map(|(_, t)| *t)
            .unwrap_or(EpochMillis(i64::MIN));
        list.extend(
            unblock_citations
                .iter()
                .filter(|(t, _)| *t >= first_block)
                .map(|(_, c)| c.clone()),
        );
    }
    (steps, citations)
}

pub fn block_status_findings(bundle: &CaseBundle) -> Vec<Finding> {
    if !bundle.has_logs() {
        return vec![no_log_coverage(Category::BlockStatus, "block status")];
    }
    let (steps, citations) = steps_from_log(&bundle.log_events);
    block_statuses(&steps)
        .into_values()
        .map(|r| {
            let note = match r.status {
                BlockStatus::Blocked => "blocked with no later unblock event in the available logs".to_string(),
                BlockStatus::Unblocked => "unblock event logged while this was the only blocked contact".to_string(),
                BlockStatus::Unknown => format!(
                    "{} unblock event(s) logged while several contacts were blocked; unblock events do not name the contact",
                    r.ambiguous_unblocks.len()
                ),
            };
            Finding {
                category: Category::BlockStatus,
                subject: r.jid.clone(),
                time: Some(r.last_blocked_at),
                evidence: citations.get(&r.jid).cloned().unwrap_or_default(),
                confidence_note: format!("{note}; valid only for the period the logs cover"),
                payload: Payload::BlockStatus(r),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::test_support::{log_event, ms};
    use crate::model::{AvatarFile, ContactRecord, LogEventKind, WaJid};

    const X: &str = "393201234567@s.whatsapp.net";
    const Y: &str = "393351234567@s.whatsapp.net";

    fn run(script: &[Option<&str>]) -> BTreeMap<String, BlockStatus> {
        let steps: Vec<_> = script
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let step = match s {
                    Some(j) => BlockStep::Block(j.to_string()),
                    None => BlockStep::Unblock,
                };
                (step, EpochMillis(i as i64))
            })
            .collect();
        block_statuses(&steps).into_iter().map(|(k, v)| (k, v.status)).collect()
    }

    #[test]
    fn rules() {
        assert_eq!(run(&[Some(X)])[X], BlockStatus::Blocked);
        assert_eq!(run(&[Some(X), None])[X], BlockStatus::Unblocked);
        let both = run(&[Some(X), Some(Y), None]);
        assert_eq!(both[X], BlockStatus::Unknown);
        assert_eq!(both[Y], BlockStatus::Unknown);
        let reblock = run(&[Some(X), Some(Y), None, Some(X)]);
        assert_eq!(reblock[X], BlockStatus::Blocked);
        assert_eq!(reblock[Y], BlockStatus::Unknown);
        assert!(run(&[None]).is_empty());
    }

    /// Reads the rule per contact, looking only at its last block and the
    /// first unblock after it.
    fn oracle(script: &[Option<&str>]) -> BTreeMap<String, BlockStatus> {
        fn resolved_before(script: &[Option<&str>], jid: &str, pos: usize) -> bool {
            // `jid` is known to be unblocked at `pos` (exclusive).
            let Some(last) = script[..pos].iter().rposition(|s| *s == Some(jid)) else {
                return true;
            };
            let Some(u) = (last + 1..pos).find(|&i| script[i].is_none()) else {
                return false;
            };
            sole_blocked(script, jid, u)
        }
        fn sole_blocked(script: &[Option<&str>], jid: &str, u: usize) -> bool {
            let others: BTreeSet<&str> = script[..u].iter().flatten().copied().filter(|j| *j != jid).collect();
            others.iter().all(|o| resolved_before(script, o, u))
        }
        let jids: BTreeSet<&str> = script.iter().flatten().copied().collect();
        jids.into_iter()
            .map(|j| {
                let last = script.iter().rposition(|s| *s == Some(j)).unwrap();
                let status = match (last + 1..script.len()).find(|&i| script[i].is_none()) {
                    None => BlockStatus::Blocked,
                    Some(u) if sole_blocked(script, j, u) => BlockStatus::Unblocked,
                    Some(_) => BlockStatus::Unknown,
                };
                (j.to_string(), status)
            })
            .collect()
    }

    #[test]
    fn matches_oracle_on_short_scripts() {
        let alphabet = [Some(X), Some(Y), Some("393331234567@s.whatsapp.net"), None];
        let mut scripts: Vec<Vec<Option<&str>>> = vec![vec![]];
        for _ in 0..5 {
            let next: Vec<_> = scripts
                .iter()
                .flat_map(|s| alphabet.iter().map(move |a| [s.clone(), vec![*a]].concat()))
                .collect();
            for s in &next {
                assert_eq!(run(s), oracle(s), "{s:?}");
            }
            scripts = next;
        }
    }

    #[test]
    fn addition_time_from_log() {
        // Discovery 14:14:24, then query and avatar lines.
        let j = "393311234567@s.whatsapp.net";
        let bundle = CaseBundle {
            log_events: vec![
                log_event(1, "2013-09-25T14:14:24Z", LogEventKind::ContactNotInDb, Some(j), None),
                log_event(2, "2013-09-25T14:14:25Z", LogEventKind::ContactQuery, Some(j), None),
                log_event(3, "2013-09-25T14:14:27Z", LogEventKind::AvatarDownloaded, Some(j), None),
                log_event(4, "2013-09-25T14:15:00Z", LogEventKind::ContactQuery, Some(X), None),
            ],
            ..Default::default()
        };
        let times = contact_addition_times(&bundle);
        assert_eq!(times.len(), 2);
        let (_, at, citation) = times.iter().find(|t| t.0 == j).unwrap();
        assert_eq!(*at, EpochMillis(ms("2013-09-25T14:14:24Z")));
        assert_eq!(citation, "whatsapp.log:1");

        let deleted = deleted_contacts(&bundle);
        assert_eq!(deleted.len(), 2);
        let mut kept = bundle.clone();
        kept.contacts.push(contact(X));
        kept.avatar_inventory.push(AvatarFile {
            jid: j.into(),
            path: "files/Avatars/393311234567@s.whatsapp.net.j".into(),
        });
        kept.avatar_inventory.push(AvatarFile {
            jid: Y.into(),
            path: "ProfilePictures/393351234567@s.whatsapp.net.j".into(),
        });
        let deleted = deleted_contacts(&kept);
        let jids: Vec<_> = deleted.iter().map(|(d, _)| d.jid.as_str()).collect();
        assert_eq!(jids, [j, Y]);
        assert_eq!(deleted[0].0.basis, [DeletedContactBasis::LogAddition, DeletedContactBasis::OrphanAvatar]);
        assert_eq!(deleted[1].0.basis, [DeletedContactBasis::OrphanAvatar]);
        assert!(infer_deleted_contacts(&kept)[0].confidence_note.contains("deletion time unrecoverable"));
    }

    #[test]
    fn no_logs_means_no_inference() {
        let f = infer_deleted_contacts(&CaseBundle::default());
        assert_eq!(f.len(), 1);
        assert!(matches!(f[0].payload, Payload::NoLogCoverage { .. }));
    }

    fn contact(jid: &str) -> ContactRecord {
        ContactRecord {
            id: 1,
            jid: crate::model::parse_jid(jid).unwrap_or_else(|_| WaJid::unrecognized(jid)),
            is_whatsapp_user: true,
            unseen_msg_count: 0,
            thumb_ts: crate::model::EpochSeconds(0),
            photo_id_timestamp: EpochMillis(0),
            wa_name: None,
            status_line: None,
            phonebook: Default::default(),
            photo_ts: 0,
        }
    }
}
