//! Acceptance gate. Each criterion prints one PASS or FAIL line; the test fails
//! if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

use waforensics::cli;
use waforensics::correlate::contacts::BlockStatus;
use waforensics::correlate::media::{correlate_media, MatchLevel};
use waforensics::correlate::{analyze, AnalysisOptions, Category, Payload, StateCode};
use waforensics::crypt::{decrypt_backup, decrypt_bytes, encrypt_fixture, BackupKey, CryptError};
use waforensics::db::load_chat_store;
use waforensics::forge::{generate_bundle, ground_truth, random_script, Action, Delivery, ScenarioScript};
use waforensics::ingest::{load_bundle, IngestOptions};
use waforensics::layout;
use waforensics::model::ids::{parse_group_id, parse_jid, parse_message_key, GroupId, MessageKey, WaJid};
use waforensics::model::EpochMillis;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn report_json(dir: &Path, tz: &str) -> Result<Value, String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cli::run(
        ["waforensics", "report", "--in", dir.to_str().unwrap(), "--tz", tz],
        &mut out,
        &mut err,
    );
    ensure(code == cli::EXIT_OK, || {
        format!("report on {} exited {code}: {}", dir.display(), String::from_utf8_lossy(&err))
    })?;
    serde_json::from_slice(&out).map_err(|e| e.to_string())
}

fn rendered(v: &Value) -> &str {
    v["rendered"].as_str().unwrap_or("")
}

// 1. Code book

fn code_book() -> Outcome {
    let mut checked = 0;
    for from_me in [false, true] {
        for status in -3..=12 {
            let want = match (from_me, status) {
                (_, 6) => StateCode::Control,
                (true, 0) => StateCode::PendingLocal,
                (true, 4) => StateCode::OnServer,
                (true, 5) => StateCode::DeliveredToDevice,
                (false, 0) => StateCode::ReceivedIncoming,
                (_, n) => StateCode::Unknown(n),
            };
            let got = StateCode::from_record(from_me, status);
            ensure(got == want, || format!("({from_me}, {status}) -> {got:?}, expected {want:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (from_me, status) pairs"))
}

// 2. Scenario replays

fn conversation_order() -> Result<(), String> {
    let doc = report_json(&fixtures().join("fig6"), "+01:00")?;
    let chat = doc["conversations"]["393481234567@s.whatsapp.net"]
        .as_array()
        .ok_or("no conversation with 393481234567")?;
    let got: Vec<(String, bool, String)> = chat
        .iter()
        .map(|e| {
            (
                e["content"]["text"].as_str().unwrap_or("").to_string(),
                e["from_me"].as_bool().unwrap_or(false),
                rendered(&e["effective_time"]).to_string(),
            )
        })
        .collect();
    let want = [
        ("Message 1", false, "2012-02-13T06:59:09.000+01:00"),
        ("Reply 1", true, "2012-02-13T07:00:23.000+01:00"),
        ("Message 2", false, "2012-02-13T07:02:41.000+01:00"),
        ("Reply 2", true, "2012-02-13T07:03:10.000+01:00"),
    ]
    .map(|(t, f, r)| (t.to_string(), f, r.to_string()));
    ensure(got == want, || format!("history {got:?}"))
}

fn delivery_progression() -> Result<(), String> {
    let doc = report_json(&fixtures().join("fig7"), "+02:00")?;
    let entry = &doc["conversations"]["393481234567@s.whatsapp.net"][0];
    let state = &entry["state"];
    let got = (
        state["code"]["state"].as_str().unwrap_or(""),
        rendered(&state["sent_at"]),
        rendered(&state["server_ack_at"]),
        rendered(&state["device_ack_at"]),
    );
    let want = (
        "delivered_to_device",
        "2013-10-16T14:15:37.884+02:00",
        "2013-10-16T14:17:05.551+02:00",
        "2013-10-16T14:21:59.135+02:00",
    );
    ensure(got == want, || format!("state {got:?}"))
}

fn broadcast_list() -> Result<(), String> {
    let dir = fixtures().join("fig8");
    let bundle = load_bundle(&dir, &IngestOptions::default()).map_err(|e| e.to_string())?;
    ensure(bundle.messages.iter().all(|m| m.needs_push == 2), || {
        "a broadcast record without needs_push 2".into()
    })?;
    let doc = report_json(&dir, "+02:00")?;
    let broadcasts: Vec<&Value> = doc["findings"]
        .as_array()
        .ok_or("no findings")?
        .iter()
        .map(|f| &f["payload"])
        .filter(|p| p["kind"] == "broadcast")
        .collect();
    ensure(broadcasts.len() == 1, || format!("{} broadcast findings", broadcasts.len()))?;
    let b = broadcasts[0];
    let destinations: BTreeSet<&str> = b["destinations"]
        .as_array()
        .ok_or("no destinations")?
        .iter()
        .filter_map(Value::as_str)
        .collect();
    let want: BTreeSet<&str> = [
        "393201234567@s.whatsapp.net",
        "393331234567@s.whatsapp.net",
        "393351234567@s.whatsapp.net",
    ]
    .into();
    ensure(destinations == want, || format!("destinations {destinations:?}"))?;
    ensure(b["needs_push"] == serde_json::json!([2, 2, 2, 2]), || format!("needs_push {}", b["needs_push"]))?;
    ensure(rendered(&b["sent_at"]) == "2013-10-20T10:30:12.250+02:00", || {
        format!("sent_at {}", b["sent_at"])
    })
}

fn group_lifecycle() -> Result<(), String> {
    let dir = fixtures().join("fig9");
    let doc = report_json(&dir, "+01:00")?;
    let timelines = doc["group_timelines"].as_array().ok_or("no group timelines")?;
    ensure(timelines.len() == 1, || format!("{} groups", timelines.len()))?;
    let g = &timelines[0];
    ensure(g["group_name"] == "wa test group", || format!("name {}", g["group_name"]))?;
    let (d, e, f) = (
        "393201234567@s.whatsapp.net",
        "393351234567@s.whatsapp.net",
        "393331234567@s.whatsapp.net",
    );
    let got: Vec<(String, String, String)> = g["events"]
        .as_array()
        .ok_or("no events")?
        .iter()
        .map(|ev| {
            (
                ev["kind"].as_str().unwrap_or("").to_string(),
                ev["member"].as_str().unwrap_or("").to_string(),
                rendered(&ev["time"]).to_string(),
            )
        })
        .collect();
    let want = [
        ("created", "", "2013-11-11T16:24:05.000+01:00"),
        ("joined", e, "2013-11-11T16:24:06.000+01:00"),
        ("joined", f, "2013-11-12T10:40:48.000+01:00"),
        ("left", f, "2013-11-14T22:11:36.000+01:00"),
        ("left", e, "2013-11-15T09:49:54.000+01:00"),
    ]
    .map(|(k, m, t)| (k.to_string(), m.to_string(), t.to_string()));
    ensure(got == want, || format!("events {got:?}"))?;

    let bundle = load_bundle(&dir, &IngestOptions::default()).map_err(|e| e.to_string())?;
    let analysis = analyze(&bundle, &AnalysisOptions::default());
    let nov13 = EpochMillis(
        chrono::DateTime::parse_from_rfc3339("2013-11-13T12:00:00+01:00")
            .unwrap()
            .timestamp_millis(),
    );
    let members = analysis.group_timelines[0].membership_at(nov13);
    let want: BTreeSet<String> = [d, e, f].map(String::from).into();
    ensure(members == want, || format!("members on Nov 13 {members:?}"))
}

fn scenario_replay() -> Outcome {
    conversation_order()?;
    delivery_progression()?;
    broadcast_list()?;
    group_lifecycle()?;
    Ok("conversation, delivery states, broadcast, group lifecycle".into())
}

// 3. Oracle equivalence

fn oracle_equivalence() -> Outcome {
    let mut actions = 0;
    for seed in 0..100 {
        let script = random_script(1000 + seed, 200);
        actions += script.actions.len();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (truth, bundle, analysis) = common::forge_and_analyze(&script, dir.path());
        let mismatches = common::oracle_mismatches(&truth, &bundle, &analysis);
        ensure(mismatches.is_empty(), || {
            format!("seed {}: {}", 1000 + seed, mismatches.join("; "))
        })?;
    }
    Ok(format!("100 scripts, {actions} actions"))
}

// 4. Block status

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Block(usize),
    Unblock,
}

/// Status of contact `c` after `ops`, straight from the definition: blocked when
/// no unblock follows its last block; unblocked when some later unblock found
/// it as the only contact possibly blocked; unknown otherwise.
fn definitional_status(ops: &[Op], c: usize) -> Option<BlockStatus> {
    let last_block = ops.iter().rposition(|o| *o == Op::Block(c))?;
    let later_unblocks: Vec<usize> = (last_block + 1..ops.len()).filter(|i| ops[*i] == Op::Unblock).collect();
    if later_unblocks.is_empty() {
        return Some(BlockStatus::Blocked);
    }
    if later_unblocks.iter().any(|&i| possibly_blocked(ops, i) == BTreeSet::from([c])) {
        Some(BlockStatus::Unblocked)
    } else {
        Some(BlockStatus::Unknown)
    }
}

/// Contacts that might still be blocked just before `ops[at]`.
fn possibly_blocked(ops: &[Op], at: usize) -> BTreeSet<usize> {
    (0..3)
        .filter(|&d| {
            let Some(last) = ops[..at].iter().rposition(|o| *o == Op::Block(d)) else { return false };
            !(last + 1..at).any(|i| ops[i] == Op::Unblock && possibly_blocked(ops, i) == BTreeSet::from([d]))
        })
        .collect()
}

fn block_script(ops: &[Op], contacts: &[String]) -> ScenarioScript {
    let start = chrono::DateTime::parse_from_rfc3339("2013-09-25T10:00:00Z").unwrap().to_utc();
    let mut s = ScenarioScript::new("393401234567", start, &contacts.iter().map(String::as_str).collect::<Vec<_>>());
    for op in ops {
        s.push(match op {
            Op::Block(c) => Action::BlockContact {
                contact: contacts[*c].clone(),
            },
            Op::Unblock => Action::UnblockAll,
        });
    }
    s
}

fn reported_statuses(bundle: &waforensics::model::CaseBundle) -> BTreeMap<String, BlockStatus> {
    analyze(bundle, &AnalysisOptions::default())
        .findings
        .into_iter()
        .filter_map(|f| match f.payload {
            Payload::BlockStatus(r) => Some((r.jid, r.status)),
            _ => None,
        })
        .collect()
}

/// Every script up to length 6 is simulated in memory; those up to length 3
/// also go through disk, log text and parsing.
fn block_exhaustion() -> Outcome {
    let contacts: Vec<String> = ["393201111111", "393202222222", "393203333333"].map(String::from).into();
    let alphabet = [Op::Block(0), Op::Block(1), Op::Block(2), Op::Unblock];
    let (mut scripts, mut on_disk, mut unknowns) = (0, 0, 0);
    for len in 1..=6u32 {
        for n in 0..4usize.pow(len) {
            let ops: Vec<Op> = (0..len).map(|i| alphabet[(n / 4usize.pow(i)) % 4]).collect();
            let script = block_script(&ops, &contacts);
            let truth = ground_truth(&script).map_err(|e| e.to_string())?;
            let mut runs = vec![reported_statuses(&truth.bundle)];
            if len <= 3 {
                let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
                generate_bundle(&script, dir.path()).map_err(|e| e.to_string())?;
                let bundle = load_bundle(dir.path(), &IngestOptions::default()).map_err(|e| e.to_string())?;
                runs.push(reported_statuses(&bundle));
                on_disk += 1;
            }
            for reported in &runs {
                for (c, number) in contacts.iter().enumerate() {
                    let jid = format!("{number}@s.whatsapp.net");
                    let want = definitional_status(&ops, c);
                    let got = reported.get(&jid).copied();
                    ensure(got == want, || format!("{ops:?}: {jid} reported {got:?}, expected {want:?}"))?;
                    let truly_blocked = truth.blocked.get(&jid).copied();
                    let sound = match got {
                        Some(BlockStatus::Blocked) => truly_blocked == Some(true),
                        Some(BlockStatus::Unblocked) => truly_blocked == Some(false),
                        _ => true,
                    };
                    ensure(sound, || format!("{ops:?}: {jid} reported {got:?} but truly {truly_blocked:?}"))?;
                }
            }
            unknowns += runs[0].values().filter(|s| **s == BlockStatus::Unknown).count();
            scripts += 1;
        }
    }
    ensure(unknowns > 0, || "no script produced an unknown status".into())?;
    Ok(format!("{scripts} scripts ({on_disk} through disk), {unknowns} unknown outcomes"))
}

// 5. Crypto

fn crypto() -> Outcome {
    let key = BackupKey::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let mut plain = vec![0u8; 16 * rng.random_range(0..64)];
        rng.fill_bytes(&mut plain);
        let cipher = encrypt_fixture(&plain, &key).map_err(|e| e.to_string())?;
        let back = waforensics::crypt::decrypt_blocks(&cipher, &key).map_err(|e| e.to_string())?;
        ensure(back == plain, || format!("round trip {i} differs"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = chrono::DateTime::parse_from_rfc3339("2013-10-21T09:00:00Z").unwrap().to_utc();
    let mut script = ScenarioScript::new("393401234567", start, &["393481234567"]);
    script
        .push(Action::AddContact {
            contact: "393481234567".into(),
            name: None,
            whatsapp_user: true,
            avatar: true,
        })
        .push(Action::SendText {
            from: None,
            to: Some("393481234567".into()),
            text: "before backup".into(),
            alias: None,
            via_broadcast: false,
            delivery: Delivery::default(),
        })
        .push(Action::SnapshotBackup);
    generate_bundle(&script, dir.path()).map_err(|e| e.to_string())?;
    let crypt = dir.path().join(layout::BACKUPS).join(layout::CURRENT_BACKUP);
    let plain = dir.path().join("decrypted.db");
    std::fs::write(&plain, decrypt_backup(&crypt, &key).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (messages, chat_list) = load_chat_store(&plain).map_err(|e| e.to_string())?;
    ensure(messages.warnings.is_empty() && chat_list.warnings.is_empty(), || {
        format!("warnings {:?} {:?}", messages.warnings, chat_list.warnings)
    })?;
    ensure(messages.records.len() == 1, || format!("{} messages", messages.records.len()))?;

    let bytes = std::fs::read(&crypt).map_err(|e| e.to_string())?;
    for _ in 0..200 {
        let mut k = [0u8; 24];
        rng.fill_bytes(&mut k);
        let wrong = BackupKey::from_hex(&hex::encode(k)).map_err(|e| e.to_string())?;
        if wrong == key {
            continue;
        }
        let r = decrypt_bytes(&bytes, &wrong);
        ensure(matches!(r, Err(CryptError::MagicMismatch)), || format!("wrong key gave {r:?}"))?;
    }
    Ok("1000 round trips, forged backup loads clean, 200 wrong keys rejected".into())
}

// 6. Media

fn media_script(owner: &str, peer: &str, outgoing: bool) -> ScenarioScript {
    let start = chrono::DateTime::parse_from_rfc3339("2013-10-21T09:00:00Z").unwrap().to_utc();
    let mut s = ScenarioScript::new(owner, start, &[peer]);
    s.push(Action::AddContact {
        contact: peer.into(),
        name: None,
        whatsapp_user: true,
        avatar: false,
    });
    s.push(Action::SendMedia {
        from: (!outgoing).then(|| peer.to_string()),
        to: outgoing.then(|| peer.to_string()),
        media: waforensics::correlate::content::MediaKind::Image,
        size: 40267,
        content_seed: 20131021,
        server_filename: Some("Ab3dEf9hIjKlMnOpQrStUv.jpg".into()),
        downloaded: true,
        duration: None,
        alias: None,
        delivery: Delivery::default(),
    });
    s
}

fn media_correlation() -> Outcome {
    let (sender, recipient) = ("393401234567", "393481234567");
    let sdir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rdir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_bundle(&media_script(sender, recipient, true), sdir.path()).map_err(|e| e.to_string())?;
    generate_bundle(&media_script(recipient, sender, false), rdir.path()).map_err(|e| e.to_string())?;
    let sb = load_bundle(sdir.path(), &IngestOptions::default()).map_err(|e| e.to_string())?;
    let rb = load_bundle(rdir.path(), &IngestOptions::default()).map_err(|e| e.to_string())?;

    let levels = |sb: &waforensics::model::CaseBundle, rb: &waforensics::model::CaseBundle| -> Vec<MatchLevel> {
        analyze(
            sb,
            &AnalysisOptions {
                sim_number: None,
                peer: Some(rb),
            },
        )
        .findings
        .into_iter()
        .filter(|f| f.category == Category::MediaCorrelation)
        .filter_map(|f| match f.payload {
            Payload::MediaCorrelation(c) if c.level != MatchLevel::LocalFile => Some(c.level),
            _ => None,
        })
        .collect()
    };
    let got = levels(&sb, &rb);
    ensure(got == [MatchLevel::Full], || format!("intact file: {got:?}"))?;

    let received = rb.media_inventory.iter().find(|f| !f.sent).ok_or("recipient has no received file")?;
    let path = rdir.path().join(&received.path);
    let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let middle = bytes.len() / 2;
    bytes[middle] ^= 0x01;
    std::fs::write(&path, bytes).map_err(|e| e.to_string())?;
    let rb = load_bundle(rdir.path(), &IngestOptions::default()).map_err(|e| e.to_string())?;
    let direct = correlate_media(&sb.messages, &rb.messages, &rb.media_inventory);
    ensure(direct.len() == 1 && direct[0].level == MatchLevel::NameOnlyMatch, || {
        format!("perturbed file: {direct:?}")
    })?;
    let got = levels(&sb, &rb);
    ensure(got == [MatchLevel::NameOnlyMatch], || format!("perturbed file via report: {got:?}"))?;
    Ok("one full match, one-byte change demoted to name-only".into())
}

// 7. Identifier grammars

fn identifiers() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let phone = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(5..=15);
        let mut s = rng.random_range(1..=9u8).to_string();
        for _ in 1..len {
            s.push(char::from(b'0' + rng.random_range(0..10u8)));
        }
        s
    };
    for _ in 0..10_000 {
        let number = phone(&mut rng);
        let jid = WaJid::user(&number);
        let raw = jid.to_raw();
        ensure(raw == format!("{number}@s.whatsapp.net"), || format!("jid text {raw}"))?;
        let back = parse_jid(&raw).map_err(|e| format!("{raw}: {e}"))?;
        ensure(back == jid && back.to_raw() == raw, || format!("jid {raw} -> {back:?}"))?;
    }
    for _ in 0..10_000 {
        let creator = phone(&mut rng);
        let epoch = rng.random_range(1_230_768_000..4_102_444_800i64);
        let id = GroupId::new(&creator, epoch);
        let raw = id.to_raw();
        ensure(raw == format!("{creator}-{epoch}@g.us"), || format!("group id text {raw}"))?;
        let back = parse_group_id(&raw).map_err(|e| format!("{raw}: {e}"))?;
        ensure(back == id && back.to_raw() == raw, || format!("group id {raw} -> {back:?}"))?;
        let as_jid = parse_jid(&raw).map_err(|e| format!("{raw}: {e}"))?;
        ensure(as_jid.group_id() == Some(id.clone()), || format!("group jid {raw}"))?;
    }
    for _ in 0..10_000 {
        let session = rng.random_range(1_230_768_000..4_102_444_800i64);
        let sequence = rng.random_range(0..1_000_000u64);
        let broadcast = rng.random_bool(0.3);
        let key = MessageKey::new(session, sequence, broadcast);
        let raw = key.to_raw();
        let want = format!("{}{session}-{sequence}", if broadcast { "%~" } else { "" });
        ensure(raw == want, || format!("key text {raw}, expected {want}"))?;
        let back = parse_message_key(&raw).map_err(|e| format!("{raw}: {e}"))?;
        ensure(back == key && back.to_raw() == raw, || format!("key {raw} -> {back:?}"))?;
    }
    Ok("10000 each of jid, group_id, key_id".into())
}

// 8. Read-only

fn tree_hashes(root: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut pending = vec![root.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                pending.push(path);
            } else {
                out.insert(path.clone(), hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    out
}

fn read_only() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let evidence = dir.path().join("evidence");
    generate_bundle(&random_script(4, 200), &evidence).map_err(|e| e.to_string())?;
    let peer = dir.path().join("peer");
    generate_bundle(&random_script(5, 60), &peer).map_err(|e| e.to_string())?;
    let before = (tree_hashes(&evidence), tree_hashes(&peer));
    let out = dir.path().join("report.json");
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = cli::run(
        [
            "waforensics",
            "report",
            "--in",
            evidence.to_str().unwrap(),
            "--peer",
            peer.to_str().unwrap(),
            "--sim",
            "393401234567",
            "--verify-readonly",
            "--out",
            out.to_str().unwrap(),
        ],
        &mut stdout,
        &mut stderr,
    );
    ensure(code == cli::EXIT_OK, || format!("report exited {code}: {}", String::from_utf8_lossy(&stderr)))?;
    let after = (tree_hashes(&evidence), tree_hashes(&peer));
    ensure(before == after, || "evidence changed".into())?;
    Ok(format!("{} files hashed before and after", before.0.len() + before.1.len()))
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("1 state code book", code_book, Some(Duration::from_secs(1))),
        ("2 scenario replays", scenario_replay, Some(Duration::from_secs(5))),
        ("3 oracle equivalence", oracle_equivalence, Some(Duration::from_secs(60))),
        ("4 block status exhaustion", block_exhaustion, None),
        ("5 backup crypto", crypto, None),
        ("6 media correlation", media_correlation, None),
        ("7 identifier grammars", identifiers, None),
        ("8 read-only evidence", read_only, None),
    ];
    let mut failed = Vec::new();
    for (name, run, limit) in criteria {
        let t0 = Instant::now();
        let outcome = run();
        let elapsed = t0.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS [{name}] {detail} ({elapsed:.2?})"),
            Err(reason) => {
                println!("FAIL [{name}] {reason} ({elapsed:.2?})");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
