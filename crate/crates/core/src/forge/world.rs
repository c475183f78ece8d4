//! Replays a script into the state of one device.

use std::collections::{BTreeMap, BTreeSet};

use base64::Engine;
use chrono::{DateTime, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::script::{Action, Delivery, DeliveryState, ScenarioScript, SCRIPT_VERSION};
use super::{ForgeError, GroundTruth, TruthDeleted, TruthEntry, TruthGroup, TruthGroupEvent};
use crate::correlate::content::{BlobSummary, Content, ControlOp, MediaKind};
use crate::correlate::deleted::Direction;
use crate::correlate::history::Origin;
use crate::correlate::state::StateCode;
use crate::layout;
use crate::model::records::{control_op, encode_media_hash, media_type, status, NEEDS_PUSH_BROADCAST};
use crate::model::{
    AvatarFile, BackupSet, CaseBundle, ChatListRecord, ContactRecord, EpochMillis, EpochSeconds, GroupId,
    LogEvent, LogEventKind, MediaFile, MessageKey, MessageRecord, WaJid,
};

const LEVEL: &str = "LL_I";
const MAX_MEDIA_SIZE: usize = 64 << 20;
const STATUS_LINE: &str = "Hey there! I am using WhatsApp.";

pub(crate) struct LogLine {
    at: i64,
    body: String,
    kind: LogEventKind,
    subject: Option<WaJid>,
    key: Option<MessageKey>,
    group: Option<GroupId>,
    detail: Option<String>,
}

impl LogLine {
    fn other(at: i64, body: String) -> Self {
        LogLine {
            at,
            body,
            kind: LogEventKind::Other,
            subject: None,
            key: None,
            group: None,
            detail: None,
        }
    }
}

pub(crate) struct LogFile {
    pub name: String,
    pub text: String,
    pub events: Vec<LogEvent>,
}

pub(crate) struct Snapshot {
    pub name: String,
    pub messages: Vec<MessageRecord>,
    pub chat_list: Vec<ChatListRecord>,
    /// `sqlite_sequence` value for `messages`.
    pub sequence: i64,
}

struct Row {
    record: MessageRecord,
    entry: TruthEntry,
}

struct GroupState {
    id: GroupId,
    name: String,
    members: BTreeSet<String>,
    open: bool,
    events: Vec<TruthGroupEvent>,
}

struct Exchange {
    direction: Direction,
    partners: BTreeSet<String>,
    exchanged_at: i64,
    control: bool,
}

enum Payload {
    Text(String),
    Media {
        kind: MediaKind,
        size: usize,
        seed: u64,
        server_filename: Option<String>,
        downloaded: bool,
        duration: Option<i64>,
    },
    Vcard(String),
    Geo(f64, f64),
}

type Invalid = String;

pub(crate) struct World {
    owner: String,
    owner_jid: String,
    owner_avatar: bool,
    actors: BTreeSet<String>,
    sessions: BTreeMap<String, (i64, u64)>,
    last_message_id: i64,
    rows: Vec<Row>,
    last_contact_id: i64,
    pub contacts: Vec<ContactRecord>,
    blocked: BTreeMap<String, bool>,
    groups: BTreeMap<String, GroupState>,
    aliases: BTreeMap<String, String>,
    exchanges: BTreeMap<String, Exchange>,
    chat_ids: BTreeMap<String, i64>,
    lines: Vec<LogLine>,
    rotations: Vec<i64>,
    pub snapshots: Vec<Snapshot>,
    /// Media, avatars and the `me` files by relative path.
    pub files: BTreeMap<String, Vec<u8>>,
    media_counters: BTreeMap<(&'static str, String), u32>,
    added_at: BTreeMap<String, i64>,
    deleted: BTreeMap<String, TruthDeleted>,
    /// Every row ever inserted, deleted or not.
    entries_ever: BTreeMap<i64, TruthEntry>,
}

fn is_number(s: &str) -> bool {
    (5..=20).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_digit()) && !s.starts_with('0')
}

fn user_jid(number: &str) -> String {
    WaJid::user(number).raw
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn jpeg_placeholder(label: &[u8]) -> Vec<u8> {
    let mut out = vec![0xff, 0xd8, 0xff, 0xe0];
    out.extend_from_slice(&digest(&[b"placeholder", label]));
    out
}

/// File bytes for a media seed: equal seeds and sizes give equal files.
pub(crate) fn media_bytes(seed: u64, size: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    bytes
}

struct MediaShape {
    prefix: &'static str,
    extension: &'static str,
    mime: &'static str,
    folder: &'static str,
    code: i64,
}

fn shape(kind: MediaKind) -> MediaShape {
    match kind {
        MediaKind::Image => MediaShape {
            prefix: "IMG",
            extension: "jpg",
            mime: "image/jpeg",
            folder: "WhatsApp Images",
            code: media_type::IMAGE,
        },
        MediaKind::Audio => MediaShape {
            prefix: "AUD",
            extension: "aac",
            mime: "audio/aac",
            folder: "WhatsApp Audio",
            code: media_type::AUDIO,
        },
        MediaKind::Video => MediaShape {
            prefix: "VID",
            extension: "mp4",
            mime: "video/mp4",
            folder: "WhatsApp Video",
            code: media_type::VIDEO,
        },
    }
}

fn base_record(id: i64, jid: WaJid, key: &MessageKey, from_me: bool, at: i64) -> MessageRecord {
    MessageRecord {
        id,
        key_remote_jid: jid,
        key_id_raw: key.raw.clone(),
        key_id: Some(key.clone()),
        from_me,
        status_code: status::RECEIVED_OR_PENDING,
        timestamp: EpochMillis(at),
        received_timestamp: EpochMillis::ABSENT,
        receipt_server_timestamp: EpochMillis::ABSENT,
        receipt_device_timestamp: EpochMillis::ABSENT,
        send_timestamp: -1,
        needs_push: 0,
        recipient_count: None,
        remote_resource_raw: None,
        remote_resource: Vec::new(),
        media_wa_type: media_type::TEXT,
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

fn date(at: i64) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(at).expect("script times are in range")
}

fn check_delivery(d: &Delivery) -> Result<(), Invalid> {
    if d.server_ack_after_ms < 0 || d.device_ack_after_ms < 0 || d.receive_after_ms < 0 {
        return Err("delivery delays must not be negative".into());
    }
    if d.device_ack_after_ms < d.server_ack_after_ms {
        return Err("device ack cannot precede the server ack".into());
    }
    Ok(())
}

pub(crate) fn simulate(script: &ScenarioScript) -> Result<World, ForgeError> {
    let header = |m: String| ForgeError::InvalidHeader(m);
    if script.version != SCRIPT_VERSION {
        return Err(header(format!("unsupported version {}", script.version)));
    }
    if !is_number(&script.owner) {
        return Err(header(format!("owner {:?} is not a phone number", script.owner)));
    }
    if script.step_seconds <= 0 {
        return Err(header("step_seconds must be positive".into()));
    }
    let start = script.start.timestamp_millis();
    if start < 0 {
        return Err(header("start precedes the epoch".into()));
    }
    let mut world = World::new(script);
    for (i, actor) in script.actors.iter().enumerate() {
        if !is_number(actor) {
            return Err(header(format!("actor {actor:?} is not a phone number")));
        }
        if *actor == script.owner || !world.actors.insert(actor.clone()) {
            return Err(header(format!("actor {actor} is listed twice or is the owner")));
        }
        let session = script.start.timestamp() - 1000 * (i as i64 + 1);
        world.sessions.insert(actor.clone(), (session, 0));
    }

    let mut now = start;
    for (index, timed) in script.actions.iter().enumerate() {
        let invalid = |reason: String| ForgeError::InvalidScript {
            index,
            action: timed.action.name(),
            reason,
        };
        let at = match timed.at {
            Some(t) => t.timestamp_millis(),
            None => now + script.step_seconds * 1000,
        };
        if at <= now && !(index == 0 && at == start && timed.at.is_some()) {
            return Err(invalid(format!("time {at} does not follow {now}")));
        }
        now = at;
        world.apply(&timed.action, at).map_err(invalid)?;
    }
    Ok(world)
}

impl World {
    fn new(script: &ScenarioScript) -> World {
        let mut sessions = BTreeMap::new();
        sessions.insert(script.owner.clone(), (script.start.timestamp(), 0));
        let mut world = World {
            owner: script.owner.clone(),
            owner_jid: user_jid(&script.owner),
            owner_avatar: script.owner_avatar,
            actors: BTreeSet::new(),
            sessions,
            last_message_id: 0,
            rows: Vec::new(),
            last_contact_id: 0,
            contacts: Vec::new(),
            blocked: BTreeMap::new(),
            groups: BTreeMap::new(),
            aliases: BTreeMap::new(),
            exchanges: BTreeMap::new(),
            chat_ids: BTreeMap::new(),
            lines: Vec::new(),
            rotations: Vec::new(),
            snapshots: Vec::new(),
            files: BTreeMap::new(),
            media_counters: BTreeMap::new(),
            added_at: BTreeMap::new(),
            deleted: BTreeMap::new(),
            entries_ever: BTreeMap::new(),
        };
        world.files.insert(layout::ME.to_string(), script.owner.as_bytes().to_vec());
        if script.owner_avatar {
            world
                .files
                .insert(layout::ME_AVATAR.to_string(), jpeg_placeholder(script.owner.as_bytes()));
        }
        world
    }

    fn apply(&mut self, action: &Action, at: i64) -> Result<(), Invalid> {
        match action {
            Action::AddContact {
                contact,
                name,
                whatsapp_user,
                avatar,
            } => self.add_contact(at, contact, name.as_deref(), *whatsapp_user, *avatar),
            Action::DeleteContact { contact } => {
                let jid = user_jid(contact);
                let before = self.contacts.len();
                self.contacts.retain(|c| c.jid.raw != jid);
                if self.contacts.len() == before {
                    return Err(format!("{contact} is not a contact"));
                }
                self.lines.push(LogLine::other(at, format!("contactpicker/delete {jid}")));
                Ok(())
            }
            Action::BlockContact { contact } => {
                self.known_actor(contact)?;
                let jid = user_jid(contact);
                self.blocked.insert(jid.clone(), true);
                self.lines.push(LogLine {
                    kind: LogEventKind::ContactBlocked,
                    subject: Some(WaJid::user(contact)),
                    ..LogLine::other(at, format!("blocklist/add {jid}"))
                });
                Ok(())
            }
            Action::UnblockAll => {
                for still in self.blocked.values_mut() {
                    *still = false;
                }
                self.lines.push(LogLine {
                    kind: LogEventKind::ContactUnblocked,
                    ..LogLine::other(at, "blocklist/remove".into())
                });
                Ok(())
            }
            Action::SendText {
                from,
                to,
                text,
                alias,
                via_broadcast,
                delivery,
            } => self.send(at, from, to, alias, *via_broadcast, delivery, Payload::Text(text.clone())),
            Action::SendMedia {
                from,
                to,
                media,
                size,
                content_seed,
                server_filename,
                downloaded,
                duration,
                alias,
                delivery,
            } => {
                if *size == 0 || *size > MAX_MEDIA_SIZE {
                    return Err(format!("media size {size} outside 1..={MAX_MEDIA_SIZE}"));
                }
                if let Some(name) = server_filename {
                    if name.is_empty() || name.contains(['/', '?', '#', ':', ' ']) {
                        return Err(format!("server file name {name:?} cannot end a URL"));
                    }
                }
                let payload = Payload::Media {
                    kind: *media,
                    size: *size,
                    seed: *content_seed,
                    server_filename: server_filename.clone(),
                    downloaded: *downloaded,
                    duration: *duration,
                };
                self.send(at, from, to, alias, false, delivery, payload)
            }
            Action::SendVcard {
                from,
                to,
                name,
                alias,
                delivery,
            } => self.send(at, from, to, alias, false, delivery, Payload::Vcard(name.clone())),
            Action::SendGeo {
                from,
                to,
                lat,
                lon,
                alias,
                delivery,
            } => {
                if !(-90.0..=90.0).contains(lat) || !(-180.0..=180.0).contains(lon) {
                    return Err(format!("coordinates ({lat}, {lon}) out of range"));
                }
                self.send(at, from, to, alias, false, delivery, Payload::Geo(*lat, *lon))
            }
            Action::Broadcast {
                recipients,
                text,
                alias,
                delivery,
            } => self.broadcast(at, recipients, text, alias, delivery),
            Action::CreateGroup { group, name } => self.create_group(at, group, name),
            Action::AddToGroup { group, member } => self.add_to_group(at, group, member),
            Action::LeaveGroup { group, member } => self.leave_group(at, group, member),
            Action::DeleteMessage { message } => self.delete_message(at, message),
            Action::SnapshotBackup => {
                let day = date(at).format("%Y-%m-%d").to_string();
                let n = self
                    .snapshots
                    .iter()
                    .filter(|s| s.name.starts_with(&format!("msgstore-{day}.")))
                    .count();
                let snapshot = Snapshot {
                    name: format!("msgstore-{day}.{}.db.crypt", n + 1),
                    messages: self.live_messages(),
                    chat_list: self.chat_list(),
                    sequence: self.last_message_id,
                };
                self.snapshots.push(snapshot);
                Ok(())
            }
            Action::RotateLog => {
                self.rotations.push(at);
                Ok(())
            }
        }
    }

    fn known_actor(&self, number: &str) -> Result<(), Invalid> {
        if self.actors.contains(number) {
            Ok(())
        } else {
            Err(format!("{number} is not an actor"))
        }
    }

    fn next_key(&mut self, number: &str, broadcast_received: bool) -> MessageKey {
        let entry = self.sessions.get_mut(number).expect("sessions exist for every party");
        entry.1 += 1;
        MessageKey::new(entry.0, entry.1, broadcast_received)
    }

    fn next_id(&mut self) -> i64 {
        self.last_message_id += 1;
        self.last_message_id
    }

    fn alias(&mut self, alias: &Option<String>, key: &MessageKey) -> Result<(), Invalid> {
        if let Some(alias) = alias {
            if self.aliases.contains_key(alias) || self.exchanges.contains_key(alias) {
                return Err(format!("alias {alias:?} is already in use"));
            }
            self.aliases.insert(alias.clone(), key.raw.clone());
        }
        Ok(())
    }

    fn push_row(&mut self, record: MessageRecord, state: StateCode, content: Content) {
        let conversation = record.key_remote_jid.raw.clone();
        let next_chat = self.chat_ids.len() as i64 + 1;
        self.chat_ids.entry(conversation).or_insert(next_chat);
        let entry = TruthEntry {
            record_id: record.id,
            key_id: record.key_id_raw.clone(),
            from_me: record.from_me,
            effective_time: if record.from_me || state == StateCode::Control {
                record.timestamp
            } else {
                record.received_timestamp
            },
            author: record
                .key_remote_jid
                .is_group()
                .then(|| record.remote_resource.first().map(|j| j.raw.clone()))
                .flatten(),
            state,
            content,
            origin: Origin::Live,
        };
        self.entries_ever.insert(record.id, entry.clone());
        self.rows.push(Row { record, entry });
    }

    fn add_contact(
        &mut self,
        at: i64,
        contact: &str,
        name: Option<&str>,
        whatsapp_user: bool,
        avatar: bool,
    ) -> Result<(), Invalid> {
        self.known_actor(contact)?;
        let jid = WaJid::user(contact);
        if self.contacts.iter().any(|c| c.jid == jid) {
            return Err(format!("{contact} is already a contact"));
        }
        self.last_contact_id += 1;
        let id = self.last_contact_id;
        let with_avatar = whatsapp_user && avatar;
        let mut phonebook = BTreeMap::new();
        phonebook.insert("number".to_string(), format!("+{contact}"));
        phonebook.insert("display_name".to_string(), name.unwrap_or(contact).to_string());
        phonebook.insert("raw_contact_id".to_string(), (id + 100).to_string());
        self.contacts.push(ContactRecord {
            id,
            jid: jid.clone(),
            is_whatsapp_user: whatsapp_user,
            unseen_msg_count: 0,
            thumb_ts: if with_avatar {
                EpochSeconds(at / 1000 - 86_400)
            } else {
                EpochSeconds::ABSENT
            },
            photo_id_timestamp: if with_avatar {
                EpochMillis(at + 900)
            } else {
                EpochMillis::ABSENT
            },
            wa_name: whatsapp_user.then(|| name.unwrap_or(contact).to_string()),
            status_line: whatsapp_user.then(|| STATUS_LINE.to_string()),
            phonebook,
            photo_ts: 0,
        });
        if !whatsapp_user {
            return Ok(());
        }
        self.added_at.entry(jid.raw.clone()).or_insert(at);
        let line = |at: i64, kind: LogEventKind, body: String| LogLine {
            kind,
            subject: Some(jid.clone()),
            ..LogLine::other(at, body)
        };
        self.lines.push(line(
            at,
            LogEventKind::ContactNotInDb,
            format!("contactpicker/not-in-db {}", jid.raw),
        ));
        self.lines.push(line(
            at + 200,
            LogEventKind::ContactQuery,
            format!("contactsync/query/add {}", jid.raw),
        ));
        if with_avatar {
            self.lines.push(line(
                at + 900,
                LogEventKind::AvatarDownloaded,
                format!("profilephoto/download/done {}", jid.raw),
            ));
            let file = format!("{}{}", jid.raw, layout::AVATAR_EXTENSION);
            let bytes = jpeg_placeholder(jid.raw.as_bytes());
            self.files.insert(layout::join(layout::AVATARS, &file), bytes.clone());
            self.files.insert(layout::join(layout::PROFILE_PICTURES, &file), bytes);
        }
        Ok(())
    }

    fn media_name(&mut self, shape: &MediaShape, at: i64) -> String {
        let day = date(at).format("%Y%m%d").to_string();
        let counter = self.media_counters.entry((shape.prefix, day.clone())).or_insert(0);
        let name = format!("{}-{}-WA{:04}.{}", shape.prefix, day, counter, shape.extension);
        *counter += 1;
        name
    }

    /// Fills the content columns; returns the content as a history shows it.
    fn fill_content(&mut self, record: &mut MessageRecord, payload: &Payload, at: i64) -> Content {
        match payload {
            Payload::Text(text) => {
                record.data = Some(text.clone());
                Content::Text { text: text.clone() }
            }
            Payload::Vcard(name) => {
                let vcard = format!("BEGIN:VCARD\nVERSION:3.0\nN:;{name};;;\nFN:{name}\nEND:VCARD");
                record.media_wa_type = media_type::CONTACT_CARD;
                record.data = Some(vcard.clone());
                record.media_name = Some(name.clone());
                Content::ContactCard {
                    vcard,
                    display_name: Some(name.clone()),
                }
            }
            Payload::Geo(lat, lon) => {
                let thumb = jpeg_placeholder(format!("{lat},{lon}").as_bytes());
                record.media_wa_type = media_type::GEO;
                record.latitude = Some(*lat);
                record.longitude = Some(*lon);
                record.raw_data = Some(thumb.clone());
                Content::GeoPoint {
                    lat: *lat,
                    lon: *lon,
                    map_thumbnail: Some(BlobSummary::of(&thumb)),
                }
            }
            Payload::Media {
                kind,
                size,
                seed,
                server_filename,
                downloaded,
                duration,
            } => {
                let shape = shape(*kind);
                let bytes = media_bytes(*seed, *size);
                let hash = digest(&[&bytes]);
                let b64 = base64::engine::general_purpose::URL_SAFE_NO_PAD;
                let server_name = server_filename.clone().unwrap_or_else(|| {
                    format!("{}.{}", b64.encode(&digest(&[b"name", &bytes])[..15]), shape.extension)
                });
                let url = format!(
                    "https://mms{}.whatsapp.net/d/{}/{}",
                    300 + seed % 600,
                    b64.encode(&hash[..9]),
                    server_name
                );
                let thumbnail = (*kind != MediaKind::Audio).then(|| jpeg_placeholder(&hash));
                let duration_s = match kind {
                    MediaKind::Image => 0,
                    _ => duration.unwrap_or((*size as i64 / 16_000).max(1)),
                };
                let local_name = self.media_name(&shape, at);
                if record.from_me {
                    self.files.insert(layout::join(layout::SENT_MEDIA, &local_name), bytes);
                    record.media_name = Some(local_name);
                } else {
                    if *downloaded {
                        let dir = layout::join(layout::MEDIA, shape.folder);
                        self.files.insert(layout::join(&dir, &local_name), bytes);
                    }
                    record.media_name = Some(String::new());
                }
                record.media_wa_type = shape.code;
                record.media_url = Some(url);
                record.media_mime_type = Some(shape.mime.to_string());
                record.media_size = Some(*size as i64);
                record.media_hash = Some(encode_media_hash(&hash));
                record.media_duration = Some(duration_s);
                record.raw_data = thumbnail.clone();
                Content::Media {
                    kind: *kind,
                    mime: Some(shape.mime.to_string()),
                    name: record.media_name.clone().filter(|n| !n.is_empty()),
                    size: Some(*size as i64),
                    duration: (*kind != MediaKind::Image).then_some(duration_s),
                    hash: record.media_hash.clone(),
                    server_filename: Some(server_name),
                    thumbnail: thumbnail.as_deref().map(BlobSummary::of),
                }
            }
        }
    }

    /// Ack columns, status and log lines of an outgoing row.
    fn outgoing_state(record: &mut MessageRecord, state: DeliveryState, d: &Delivery, at: i64) -> StateCode {
        record.received_timestamp = EpochMillis(at);
        match state {
            DeliveryState::Pending => StateCode::PendingLocal,
            DeliveryState::OnServer => {
                record.status_code = status::ON_SERVER;
                record.receipt_server_timestamp = EpochMillis(at + d.server_ack_after_ms);
                StateCode::OnServer
            }
            DeliveryState::Delivered => {
                record.status_code = status::DELIVERED;
                record.receipt_server_timestamp = EpochMillis(at + d.server_ack_after_ms);
                record.receipt_device_timestamp = EpochMillis(at + d.device_ack_after_ms);
                StateCode::DeliveredToDevice
            }
        }
    }

    fn traffic_line(&mut self, at: i64, kind: LogEventKind, body: String, subject: Option<WaJid>, key: &MessageKey) {
        let group = subject.as_ref().and_then(WaJid::group_id);
        self.lines.push(LogLine {
            kind,
            subject,
            key: Some(key.clone()),
            group,
            ..LogLine::other(at, body)
        });
    }

    fn ack_lines(&mut self, at: i64, state: DeliveryState, d: &Delivery, key: &MessageKey, peers: &[WaJid]) {
        if state == DeliveryState::Pending {
            return;
        }
        self.traffic_line(
            at + d.server_ack_after_ms,
            LogEventKind::ServerAck,
            format!("message/ack/server {key}"),
            None,
            key,
        );
        if state == DeliveryState::Delivered {
            for peer in peers {
                self.traffic_line(
                    at + d.device_ack_after_ms,
                    LogEventKind::DeviceAck,
                    format!("message/ack/device {key} {}", peer.raw),
                    Some(peer.clone()),
                    key,
                );
            }
        }
    }

    fn open_group(&self, label: &str) -> Result<&GroupState, Invalid> {
        let group = self.groups.get(label).ok_or_else(|| format!("unknown group {label:?}"))?;
        if !group.open {
            return Err(format!("group {label:?} is no longer visible on this device"));
        }
        Ok(group)
    }

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        at: i64,
        from: &Option<String>,
        to: &Option<String>,
        alias: &Option<String>,
        via_broadcast: bool,
        delivery: &Delivery,
        payload: Payload,
    ) -> Result<(), Invalid> {
        check_delivery(delivery)?;
        let sender = from.clone().filter(|f| *f != self.owner);
        let target = to.clone().filter(|t| *t != self.owner);
        if let Some(s) = &sender {
            self.known_actor(s)?;
            if self.blocked.get(&user_jid(s)) == Some(&true) {
                return Err(format!("{s} is blocked"));
            }
        }
        let group_label = target.as_ref().filter(|t| self.groups.contains_key(*t)).cloned();
        let id = self.next_id();

        let (key, record, state, content, exchange) = match (&sender, group_label) {
            (None, None) => {
                let peer = target.ok_or("an outgoing message needs a recipient")?;
                self.known_actor(&peer)?;
                if via_broadcast {
                    return Err("via_broadcast describes incoming messages".into());
                }
                let key = self.next_key(&self.owner.clone(), false);
                let peer_jid = WaJid::user(&peer);
                let mut record = base_record(id, peer_jid.clone(), &key, true, at);
                let state = Self::outgoing_state(&mut record, delivery.state, delivery, at);
                let content = self.fill_content(&mut record, &payload, at);
                self.traffic_line(
                    at,
                    LogEventKind::MessageSent,
                    format!("message/send {} {key}", peer_jid.raw),
                    Some(peer_jid.clone()),
                    &key,
                );
                self.ack_lines(at, delivery.state, delivery, &key, std::slice::from_ref(&peer_jid));
                let exchange = Exchange {
                    direction: Direction::Outgoing,
                    partners: [peer_jid.raw].into(),
                    exchanged_at: at,
                    control: false,
                };
                (key, record, state, content, exchange)
            }
            (None, Some(label)) => {
                let group = self.open_group(&label)?;
                if !group.members.contains(&self.owner_jid) {
                    return Err(format!("the owner is not in group {label:?}"));
                }
                if via_broadcast {
                    return Err("via_broadcast describes incoming messages".into());
                }
                let gjid = group.id.jid();
                let mut partners = group.members.clone();
                partners.remove(&self.owner_jid);
                let key = self.next_key(&self.owner.clone(), false);
                let mut record = base_record(id, gjid.clone(), &key, true, at);
                let state = match delivery.state {
                    DeliveryState::Pending => DeliveryState::Pending,
                    _ => DeliveryState::OnServer,
                };
                let code = Self::outgoing_state(&mut record, state, delivery, at);
                let content = self.fill_content(&mut record, &payload, at);
                self.traffic_line(
                    at,
                    LogEventKind::MessageSent,
                    format!("message/send {} {key}", gjid.raw),
                    Some(gjid.clone()),
                    &key,
                );
                self.ack_lines(at, state, delivery, &key, &[]);
                let exchange = Exchange {
                    direction: Direction::Outgoing,
                    partners,
                    exchanged_at: at,
                    control: false,
                };
                (key, record, code, content, exchange)
            }
            (Some(author), None) => {
                if target.is_some() {
                    return Err("an actor can only send to the owner or to a group".into());
                }
                let key = self.next_key(author, via_broadcast);
                let author_jid = WaJid::user(author);
                let mut record = base_record(id, author_jid.clone(), &key, false, at);
                let received = at + delivery.receive_after_ms;
                record.received_timestamp = EpochMillis(received);
                let content = self.fill_content(&mut record, &payload, at);
                self.traffic_line(
                    received,
                    LogEventKind::MessageReceived,
                    format!("message/recv {} {key}", author_jid.raw),
                    Some(author_jid.clone()),
                    &key,
                );
                let exchange = Exchange {
                    direction: Direction::Incoming,
                    partners: [author_jid.raw].into(),
                    exchanged_at: received,
                    control: false,
                };
                (key, record, StateCode::ReceivedIncoming, content, exchange)
            }
            (Some(author), Some(label)) => {
                if via_broadcast {
                    return Err("group messages are not broadcasts".into());
                }
                let group = self.open_group(&label)?;
                let author_jid = WaJid::user(author);
                if !group.members.contains(&author_jid.raw) {
                    return Err(format!("{author} is not in group {label:?}"));
                }
                let gjid = group.id.jid();
                let mut partners = group.members.clone();
                partners.remove(&self.owner_jid);
                let key = self.next_key(author, false);
                let mut record = base_record(id, gjid.clone(), &key, false, at);
                let received = at + delivery.receive_after_ms;
                record.received_timestamp = EpochMillis(received);
                record.remote_resource_raw = Some(author_jid.raw.clone());
                record.remote_resource = vec![author_jid.clone()];
                let content = self.fill_content(&mut record, &payload, at);
                self.traffic_line(
                    received,
                    LogEventKind::MessageReceived,
                    format!("message/recv {} {key} {}", gjid.raw, author_jid.raw),
                    Some(gjid.clone()),
                    &key,
                );
                let exchange = Exchange {
                    direction: Direction::Incoming,
                    partners,
                    exchanged_at: received,
                    control: false,
                };
                (key, record, StateCode::ReceivedIncoming, content, exchange)
            }
        };
        self.alias(alias, &key)?;
        self.exchanges.insert(key.raw.clone(), exchange);
        self.push_row(record, state, content);
        Ok(())
    }

    fn broadcast(
        &mut self,
        at: i64,
        recipients: &[String],
        text: &str,
        alias: &Option<String>,
        delivery: &Delivery,
    ) -> Result<(), Invalid> {
        check_delivery(delivery)?;
        if recipients.is_empty() {
            return Err("a broadcast needs recipients".into());
        }
        let mut seen = BTreeSet::new();
        for r in recipients {
            self.known_actor(r)?;
            if !seen.insert(r) {
                return Err(format!("{r} listed twice"));
            }
        }
        let key = self.next_key(&self.owner.clone(), false);
        self.alias(alias, &key)?;
        let jids: Vec<WaJid> = recipients.iter().map(|r| WaJid::user(r)).collect();
        let joined = jids.iter().map(|j| j.raw.as_str()).collect::<Vec<_>>().join(",");
        let conversations = jids.iter().cloned().chain([WaJid::broadcast()]);
        for conversation in conversations.collect::<Vec<_>>() {
            let id = self.next_id();
            let mut record = base_record(id, conversation, &key, true, at);
            record.needs_push = NEEDS_PUSH_BROADCAST;
            record.recipient_count = Some(jids.len() as i64);
            record.remote_resource_raw = Some(joined.clone());
            record.remote_resource = jids.clone();
            let state = Self::outgoing_state(&mut record, delivery.state, delivery, at);
            let content = self.fill_content(&mut record, &Payload::Text(text.to_string()), at);
            self.push_row(record, state, content);
        }
        for j in &jids {
            self.traffic_line(
                at,
                LogEventKind::MessageSent,
                format!("message/send {} {key}", j.raw),
                Some(j.clone()),
                &key,
            );
        }
        self.ack_lines(at, delivery.state, delivery, &key, &jids);
        self.exchanges.insert(
            key.raw.clone(),
            Exchange {
                direction: Direction::Outgoing,
                partners: jids.into_iter().map(|j| j.raw).collect(),
                exchanged_at: at,
                control: false,
            },
        );
        Ok(())
    }

    fn control_row(&mut self, at: i64, group: &GroupId, op: i64, member: Option<&WaJid>, data: Option<&str>, from_me: bool) {
        let id = self.next_id();
        let key = self.next_key(&self.owner.clone(), false);
        let mut record = base_record(id, group.jid(), &key, from_me, at);
        record.status_code = status::CONTROL;
        record.media_size = Some(op);
        record.data = data.map(str::to_string);
        if let Some(m) = member {
            record.remote_resource_raw = Some(m.raw.clone());
            record.remote_resource = vec![m.clone()];
        }
        let content = Content::Control {
            op: ControlOp::from_media_size(op),
            code: Some(op),
            member: member.map(|m| m.raw.clone()),
            group_name: data.map(str::to_string),
        };
        self.exchanges.insert(
            key.raw.clone(),
            Exchange {
                direction: if from_me { Direction::Outgoing } else { Direction::Incoming },
                partners: BTreeSet::new(),
                exchanged_at: at,
                control: true,
            },
        );
        self.push_row(record, StateCode::Control, content);
    }

    fn create_group(&mut self, at: i64, label: &str, name: &str) -> Result<(), Invalid> {
        if self.groups.contains_key(label) || self.actors.contains(label) || label == self.owner {
            return Err(format!("group label {label:?} is already in use"));
        }
        if name.contains(['\n', '\r']) {
            return Err("group names are single lines".into());
        }
        let id = GroupId::new(&self.owner, at.div_euclid(1000));
        if self.groups.values().any(|g| g.id == id) {
            return Err(format!("a group created in the same second already has id {}", id.raw));
        }
        self.control_row(at, &id, control_op::CREATED, None, Some(name), true);
        self.lines.push(LogLine {
            kind: LogEventKind::GroupCreated,
            group: Some(id.clone()),
            detail: Some(name.to_string()),
            ..LogLine::other(at, format!("group/create {} name={name}", id.raw))
        });
        self.groups.insert(
            label.to_string(),
            GroupState {
                id,
                name: name.to_string(),
                members: [self.owner_jid.clone()].into(),
                open: true,
                events: vec![TruthGroupEvent {
                    time: EpochMillis(at),
                    op: ControlOp::Created,
                    member: None,
                }],
            },
        );
        Ok(())
    }

    fn member_line(&mut self, at: i64, kind: LogEventKind, verb: &str, group: &GroupId, member: &WaJid) {
        self.lines.push(LogLine {
            kind,
            subject: Some(member.clone()),
            group: Some(group.clone()),
            ..LogLine::other(at, format!("group/{verb} {} {}", group.raw, member.raw))
        });
    }

    fn add_to_group(&mut self, at: i64, label: &str, member: &str) -> Result<(), Invalid> {
        self.known_actor(member)?;
        let group = self.open_group(label)?;
        let jid = WaJid::user(member);
        if group.members.contains(&jid.raw) {
            return Err(format!("{member} is already in group {label:?}"));
        }
        let id = group.id.clone();
        self.control_row(at, &id, control_op::JOINED, Some(&jid), None, true);
        self.member_line(at, LogEventKind::GroupAddRequested, "add-request", &id, &jid);
        self.member_line(at, LogEventKind::GroupMemberAdded, "member-added", &id, &jid);
        let group = self.groups.get_mut(label).expect("checked above");
        group.members.insert(jid.raw.clone());
        group.events.push(TruthGroupEvent {
            time: EpochMillis(at),
            op: ControlOp::Joined,
            member: Some(jid.raw),
        });
        Ok(())
    }

    fn leave_group(&mut self, at: i64, label: &str, member: &str) -> Result<(), Invalid> {
        let group = self.open_group(label)?;
        let jid = WaJid::user(member);
        if !group.members.contains(&jid.raw) {
            return Err(format!("{member} is not in group {label:?}"));
        }
        let id = group.id.clone();
        let own = jid.raw == self.owner_jid;
        self.control_row(at, &id, control_op::LEFT, Some(&jid), None, own);
        self.member_line(at, LogEventKind::GroupMemberLeft, "member-left", &id, &jid);
        let group = self.groups.get_mut(label).expect("checked above");
        group.members.remove(&jid.raw);
        group.open = !own;
        group.events.push(TruthGroupEvent {
            time: EpochMillis(at),
            op: ControlOp::Left,
            member: Some(jid.raw),
        });
        Ok(())
    }

    fn delete_message(&mut self, at: i64, message: &str) -> Result<(), Invalid> {
        let key = self.aliases.get(message).cloned().unwrap_or_else(|| message.to_string());
        let exchange = self
            .exchanges
            .get(&key)
            .ok_or_else(|| format!("no message {message:?}"))?;
        if exchange.control {
            return Err("group control messages cannot be deleted one by one".into());
        }
        if self.deleted.contains_key(&key) {
            return Err(format!("message {message:?} was already deleted"));
        }
        self.deleted.insert(
            key.clone(),
            TruthDeleted {
                direction: exchange.direction,
                partners: exchange.partners.clone(),
                exchanged_at: EpochMillis(exchange.exchanged_at),
                deleted_at: EpochMillis(at),
            },
        );
        let parsed = self
            .rows
            .iter()
            .find(|r| r.record.key_id_raw == key)
            .and_then(|r| r.record.key_id.clone())
            .expect("every exchange has a row until deleted");
        self.rows.retain(|r| r.record.key_id_raw != key);
        self.traffic_line(at, LogEventKind::MessageDeleted, format!("msgstore/delete {key}"), None, &parsed);
        Ok(())
    }

    pub(crate) fn live_messages(&self) -> Vec<MessageRecord> {
        self.rows.iter().map(|r| r.record.clone()).collect()
    }

    pub(crate) fn chat_list(&self) -> Vec<ChatListRecord> {
        let mut out: Vec<ChatListRecord> = self
            .chat_ids
            .iter()
            .filter_map(|(conversation, id)| {
                let last = self
                    .rows
                    .iter()
                    .filter(|r| r.record.key_remote_jid.raw == *conversation)
                    .map(|r| r.record.id)
                    .max()?;
                let jid = self
                    .rows
                    .iter()
                    .find(|r| r.record.id == last)
                    .map(|r| r.record.key_remote_jid.clone())?;
                Some(ChatListRecord {
                    id: *id,
                    key_remote_jid: jid,
                    message_table_id: last,
                })
            })
            .collect();
        out.sort_by_key(|c| c.id);
        out
    }

    pub(crate) fn message_sequence(&self) -> i64 {
        self.last_message_id
    }

    pub(crate) fn contact_sequence(&self) -> i64 {
        self.last_contact_id
    }

    /// The current `msgstore.db.crypt`: a copy of the newest snapshot.
    pub(crate) fn backups(&self) -> Vec<(&str, &Snapshot)> {
        let mut out: Vec<(&str, &Snapshot)> = self.snapshots.iter().map(|s| (s.name.as_str(), s)).collect();
        if let Some(last) = self.snapshots.last() {
            out.push((layout::CURRENT_BACKUP, last));
        }
        out
    }

    pub(crate) fn log_files(&self) -> Vec<LogFile> {
        let mut lines: Vec<&LogLine> = self.lines.iter().collect();
        lines.sort_by_key(|l| l.at);
        let mut segments: Vec<(String, Vec<&LogLine>)> = Vec::new();
        let mut rest = lines.as_slice();
        for &r in &self.rotations {
            let split = rest.partition_point(|l| l.at < r);
            let day = date(r).format("%Y-%m-%d").to_string();
            let n = segments.iter().filter(|(name, _)| name.starts_with(&format!("whatsapp-{day}"))).count();
            let name = if n == 0 {
                format!("whatsapp-{day}.log")
            } else {
                format!("whatsapp-{day}-{}.log", n + 1)
            };
            segments.push((name, rest[..split].to_vec()));
            rest = &rest[split..];
        }
        segments.push((layout::CURRENT_LOG.to_string(), rest.to_vec()));

        segments
            .into_iter()
            .map(|(name, lines)| {
                let source_file = layout::join(layout::LOGS, &name);
                let mut text = String::new();
                let mut events = Vec::new();
                for (i, l) in lines.iter().enumerate() {
                    let stamp = date(l.at).format("%Y-%m-%d %H:%M:%S%.3f");
                    let raw_line = format!("{stamp} {LEVEL} {}", l.body);
                    text.push_str(&raw_line);
                    text.push('\n');
                    events.push(LogEvent {
                        occurred_at: EpochMillis(l.at),
                        kind: l.kind,
                        subject_jid: l.subject.clone(),
                        message_key: l.key.clone(),
                        group_id: l.group.clone(),
                        detail: l.detail.clone(),
                        raw_line,
                        source_file: source_file.clone(),
                        line_number: i + 1,
                    });
                }
                LogFile { name, text, events }
            })
            .collect()
    }

    pub(crate) fn truth(&self) -> GroundTruth {
        let mut log_events: Vec<LogEvent> = self.log_files().into_iter().flat_map(|f| f.events).collect();
        log_events.sort_by(|a, b| {
            (a.occurred_at, &a.source_file, a.line_number).cmp(&(b.occurred_at, &b.source_file, b.line_number))
        });

        let mut backups: Vec<BackupSet> = self
            .backups()
            .into_iter()
            .map(|(name, s)| BackupSet {
                path: layout::join(layout::BACKUPS, name),
                messages: s.messages.clone(),
            })
            .collect();
        backups.sort_by(|a, b| a.path.cmp(&b.path));

        let media_inventory: Vec<MediaFile> = self
            .files
            .iter()
            .filter(|(path, _)| path.starts_with(&format!("{}/", layout::MEDIA)))
            .map(|(path, bytes)| MediaFile {
                path: path.clone(),
                size: bytes.len() as u64,
                sha256: hex::encode(digest(&[bytes])),
                sent: layout::is_sent_media(path),
            })
            .collect();
        let avatar_inventory: Vec<AvatarFile> = self
            .files
            .keys()
            .filter_map(|path| {
                let name = path
                    .strip_prefix(&format!("{}/", layout::AVATARS))
                    .or_else(|| path.strip_prefix(&format!("{}/", layout::PROFILE_PICTURES)))?;
                Some(AvatarFile {
                    jid: name.strip_suffix(layout::AVATAR_EXTENSION)?.to_string(),
                    path: path.clone(),
                })
            })
            .collect();

        let bundle = CaseBundle {
            contacts: self.contacts.clone(),
            messages: self.live_messages(),
            chat_list: self.chat_list(),
            log_events,
            registered_number: Some(self.owner.clone()),
            own_avatar_present: self.owner_avatar,
            media_inventory,
            avatar_inventory,
            backups,
            warnings: Vec::new(),
        };

        let mut histories: BTreeMap<String, Vec<TruthEntry>> = BTreeMap::new();
        let live: BTreeSet<_> = self.rows.iter().map(|r| r.record.row_identity()).collect();
        for row in &self.rows {
            histories
                .entry(row.record.key_remote_jid.raw.clone())
                .or_default()
                .push(row.entry.clone());
        }
        // Rows only a backup holds, attributed to the first backup by path.
        let mut recovered = BTreeSet::new();
        for backup in &bundle.backups {
            for record in &backup.messages {
                let identity = record.row_identity();
                if live.contains(&identity) || !recovered.insert(identity) {
                    continue;
                }
                let mut entry = self.entry_of(record);
                entry.origin = Origin::RecoveredFromBackup {
                    backup: backup.path.clone(),
                };
                histories
                    .entry(record.key_remote_jid.raw.clone())
                    .or_default()
                    .push(entry);
            }
        }
        for entries in histories.values_mut() {
            entries.sort_by_key(|e| (e.effective_time, e.record_id));
        }

        let partners = self
            .exchanges
            .iter()
            .filter(|(key, e)| !e.control && !self.deleted.contains_key(*key))
            .map(|(key, e)| (key.clone(), e.partners.clone()))
            .collect();

        let mut groups: Vec<TruthGroup> = self
            .groups
            .values()
            .map(|g| TruthGroup {
                group_id: g.id.raw.clone(),
                name: g.name.clone(),
                events: g.events.clone(),
            })
            .collect();
        groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));

        let present: BTreeSet<&str> = self.contacts.iter().map(|c| c.jid.raw.as_str()).collect();
        GroundTruth {
            deleted_contacts: self
                .added_at
                .keys()
                .filter(|j| !present.contains(j.as_str()) && **j != self.owner_jid)
                .cloned()
                .collect(),
            contact_additions: self.added_at.iter().map(|(j, t)| (j.clone(), EpochMillis(*t))).collect(),
            blocked: self.blocked.clone(),
            aliases: self.aliases.clone(),
            deleted_messages: self.deleted.clone(),
            bundle,
            histories,
            partners,
            groups,
        }
    }

    /// The truth entry recorded when `record` was created.
    fn entry_of(&self, record: &MessageRecord) -> TruthEntry {
        self.entries_ever
            .get(&record.id)
            .cloned()
            .expect("every snapshot row was created by the script")
    }
}
