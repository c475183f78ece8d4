#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use waforensics::correlate::{analyze, Analysis, AnalysisOptions, Category, Payload};
use waforensics::forge::{generate_bundle, GroundTruth, ScenarioScript, TruthEntry, TruthGroupEvent};
use waforensics::ingest::{load_bundle, IngestOptions};
use waforensics::model::CaseBundle;

/// Forges `script` under `dir`, ingests it back and analyzes it.
pub fn forge_and_analyze(script: &ScenarioScript, dir: &Path) -> (GroundTruth, CaseBundle, Analysis) {
    let forged = generate_bundle(script, dir).expect("script is valid");
    let bundle = load_bundle(dir, &IngestOptions::default()).expect("forged layout loads");
    let analysis = analyze(&bundle, &AnalysisOptions::default());
    (forged.truth, bundle, analysis)
}

fn first_difference<T: std::fmt::Debug + PartialEq>(what: &str, got: &[T], want: &[T]) -> Option<String> {
    if got == want {
        return None;
    }
    if got.len() != want.len() {
        return Some(format!("{what}: {} items, expected {}", got.len(), want.len()));
    }
    let i = got.iter().zip(want).position(|(a, b)| a != b).unwrap();
    Some(format!("{what}[{i}]: got {:?}\n expected {:?}", got[i], want[i]))
}

/// Every field-level disagreement between the forge's truth and what parsing
/// and correlation produced. Empty when they agree.
pub fn oracle_mismatches(truth: &GroundTruth, bundle: &CaseBundle, analysis: &Analysis) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |what: &str, ok: bool, detail: String| {
        if !ok {
            out.push(format!("{what}: {detail}"));
        }
    };

    let want = &truth.bundle;
    for (name, diff) in [
        ("contacts", first_difference("contacts", &bundle.contacts, &want.contacts)),
        ("messages", first_difference("messages", &bundle.messages, &want.messages)),
        ("chat_list", first_difference("chat_list", &bundle.chat_list, &want.chat_list)),
        ("log_events", first_difference("log_events", &bundle.log_events, &want.log_events)),
        ("media", first_difference("media", &bundle.media_inventory, &want.media_inventory)),
        ("avatars", first_difference("avatars", &bundle.avatar_inventory, &want.avatar_inventory)),
        ("backups", first_difference("backups", &bundle.backups, &want.backups)),
        ("warnings", first_difference("warnings", &bundle.warnings, &want.warnings)),
    ] {
        if let Some(d) = diff {
            check(name, false, d);
        }
    }
    check(
        "registered_number",
        bundle.registered_number == want.registered_number,
        format!("{:?}", bundle.registered_number),
    );
    check(
        "own_avatar_present",
        bundle.own_avatar_present == want.own_avatar_present,
        format!("{}", bundle.own_avatar_present),
    );
    check(
        "analysis warnings",
        analysis.warnings.is_empty(),
        format!("{:?}", analysis.warnings.first()),
    );

    let histories: BTreeMap<String, Vec<TruthEntry>> = analysis
        .histories
        .iter()
        .map(|(conversation, entries)| {
            let entries = entries
                .iter()
                .map(|e| TruthEntry {
                    record_id: e.record_id,
                    key_id: e.key_id.clone(),
                    from_me: e.from_me,
                    effective_time: e.effective_time,
                    author: e.author.clone(),
                    state: e.state.code,
                    content: e.content.clone(),
                    origin: e.origin.clone(),
                })
                .collect();
            (conversation.clone(), entries)
        })
        .collect();
    let conversations: Vec<&String> = histories.keys().collect();
    let want_conversations: Vec<&String> = truth.histories.keys().collect();
    check(
        "history conversations",
        conversations == want_conversations,
        format!("{conversations:?} vs {want_conversations:?}"),
    );
    for (conversation, entries) in &truth.histories {
        if let Some(got) = histories.get(conversation) {
            if let Some(d) = first_difference(conversation, got, entries) {
                check("history", false, d);
            }
        }
    }

    let partners: BTreeMap<String, BTreeSet<String>> = analysis
        .partners
        .iter()
        .map(|(k, p)| (k.clone(), p.partners.clone()))
        .collect();
    if partners != truth.partners {
        let key = partners
            .keys()
            .chain(truth.partners.keys())
            .find(|k| partners.get(*k) != truth.partners.get(*k))
            .cloned()
            .unwrap_or_default();
        check(
            "partners",
            false,
            format!("{key}: got {:?}, expected {:?}", partners.get(&key), truth.partners.get(&key)),
        );
    }

    let groups: Vec<(String, Option<String>, Vec<TruthGroupEvent>)> = analysis
        .group_timelines
        .iter()
        .map(|t| {
            let events = t
                .events
                .iter()
                .map(|e| TruthGroupEvent {
                    time: e.time,
                    op: e.kind,
                    member: e.member.clone(),
                })
                .collect();
            (t.group_id.raw.clone(), t.group_name.clone(), events)
        })
        .collect();
    let want_groups: Vec<(String, Option<String>, Vec<TruthGroupEvent>)> = truth
        .groups
        .iter()
        .map(|g| (g.group_id.clone(), Some(g.name.clone()), g.events.clone()))
        .collect();
    if let Some(d) = first_difference("groups", &groups, &want_groups) {
        check("group timelines", false, d);
    }

    let mut deleted = BTreeMap::new();
    let mut deleted_contacts = BTreeSet::new();
    for f in &analysis.findings {
        match (&f.category, &f.payload) {
            (Category::DeletedMessage, Payload::DeletedMessage(m)) => {
                deleted.insert(
                    m.key_id.clone(),
                    (m.direction, m.partners.clone(), m.exchanged_at, m.deleted_at),
                );
            }
            (Category::DeletedContact, Payload::DeletedContact(c)) => {
                deleted_contacts.insert(c.jid.clone());
            }
            _ => {}
        }
    }
    let want_deleted: BTreeMap<String, _> = truth
        .deleted_messages
        .iter()
        .map(|(k, d)| {
            (
                k.clone(),
                (Some(d.direction), d.partners.clone(), Some(d.exchanged_at), Some(d.deleted_at)),
            )
        })
        .collect();
    if deleted != want_deleted {
        let key = deleted
            .keys()
            .chain(want_deleted.keys())
            .find(|k| deleted.get(*k) != want_deleted.get(*k))
            .cloned()
            .unwrap_or_default();
        check(
            "deleted messages",
            false,
            format!("{key}: got {:?}, expected {:?}", deleted.get(&key), want_deleted.get(&key)),
        );
    }
    check(
        "deleted contacts",
        deleted_contacts == truth.deleted_contacts,
        format!("{deleted_contacts:?} vs {:?}", truth.deleted_contacts),
    );
    out
}
