//! Pairing media records across devices, and records with the files they produced.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::finding::{message_citation, Category, Finding, Payload};
use crate::model::records::media_type;
use crate::model::{MediaFile, MessageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLevel {
    /// Server file name and SHA-256 both agree.
    Full,
    HashOnlyMatch,
    NameOnlyMatch,
    /// A record and a file on the same device, by SHA-256.
    LocalFile,
}

impl MatchLevel {
    pub fn note(self) -> &'static str {
        match self {
            MatchLevel::Full => "server file name and SHA-256 agree",
            MatchLevel::HashOnlyMatch => "SHA-256 agrees but the server file names differ or are missing; lower confidence",
            MatchLevel::NameOnlyMatch => "server file name agrees but the SHA-256 does not; lower confidence",
            MatchLevel::LocalFile => "local file identified by SHA-256 of its contents against media_hash",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaCorrelation {
    pub level: MatchLevel,
    pub server_filename: Option<String>,
    pub sender_record: Option<i64>,
    pub sender_key: Option<String>,
    pub sender_hash: Option<String>,
    pub recipient_record: Option<i64>,
    pub recipient_key: Option<String>,
    /// Hex SHA-256 used on the recipient side: the local file's when one was found.
    pub recipient_hash: Option<String>,
    pub local_file: Option<String>,
}

fn is_media(r: &MessageRecord) -> bool {
    !r.is_control()
        && matches!(
            r.media_wa_type,
            media_type::IMAGE | media_type::AUDIO | media_type::VIDEO
        )
}

fn record_hash_hex(r: &MessageRecord) -> Option<String> {
    r.media_digest().map(hex::encode)
}

/// For each record, the file it most plausibly produced: same SHA-256 as its
/// `media_hash`, otherwise the only unclaimed file of the same size.
fn bind_files<'a>(records: &[&MessageRecord], files: &'a [&'a MediaFile]) -> Vec<Option<&'a MediaFile>> {
    let mut claimed = BTreeSet::new();
    let mut bound: Vec<Option<&MediaFile>> = records
        .iter()
        .map(|r| {
            let hash = record_hash_hex(r)?;
            let f = files.iter().find(|f| f.sha256 == hash && !claimed.contains(&f.path))?;
            claimed.insert(f.path.clone());
            Some(*f)
        })
        .collect();
    for (slot, r) in bound.iter_mut().zip(records) {
        if slot.is_some() {
            continue;
        }
        let Some(size) = r.media_size.filter(|s| *s >= 0) else { continue };
        let mut same_size = files
            .iter()
            .filter(|f| f.size == size as u64 && !claimed.contains(&f.path));
        if let (Some(f), None) = (same_size.next(), same_size.next()) {
            claimed.insert(f.path.clone());
            *slot = Some(*f);
        }
    }
    bound
}

/// Pairs the sender's outgoing media records with the recipient's incoming ones.
///
/// `media_inventory` is the recipient's: received files there stand in for the
/// recipient's `media_hash`, so a file altered after download no longer matches.
pub fn correlate_media(
    sender_records: &[MessageRecord],
    recipient_records: &[MessageRecord],
    media_inventory: &[MediaFile],
) -> Vec<MediaCorrelation> {
    let senders: Vec<&MessageRecord> = sender_records.iter().filter(|r| r.from_me && is_media(r)).collect();
    let recipients: Vec<&MessageRecord> = recipient_records
        .iter()
        .filter(|r| !r.from_me && is_media(r))
        .collect();
    let received: Vec<&MediaFile> = media_inventory.iter().filter(|f| !f.sent).collect();
    let bound = bind_files(&recipients, &received);

    let mut out = Vec::new();
    for (r, file) in recipients.iter().zip(bound) {
        let r_name = r.server_filename();
        let r_hash = file.map(|f| f.sha256.clone()).or_else(|| record_hash_hex(r));
        let mut best: Option<MatchLevel> = None;
        let mut matches = Vec::new();
        for s in &senders {
            let s_name = s.server_filename();
            let s_hash = record_hash_hex(s);
            let name_eq = s_name.is_some() && s_name == r_name;
            let hash_eq = s_hash.is_some() && s_hash == r_hash;
            let level = match (name_eq, hash_eq) {
                (true, true) => MatchLevel::Full,
                (false, true) => MatchLevel::HashOnlyMatch,
                (true, false) => MatchLevel::NameOnlyMatch,
                (false, false) => continue,
            };
            match best {
                Some(b) if b < level => continue,
                Some(b) if b > level => matches.clear(),
                _ => {}
            }
            best = Some(level);
            matches.push((level, *s, s_name, s_hash));
        }
        for (level, s, s_name, s_hash) in matches {
            out.push(MediaCorrelation {
                level,
                server_filename: s_name.or_else(|| r_name.clone()),
                sender_record: Some(s.id),
                sender_key: Some(s.key_id_raw.clone()),
                sender_hash: s_hash,
                recipient_record: Some(r.id),
                recipient_key: Some(r.key_id_raw.clone()),
                recipient_hash: r_hash.clone(),
                local_file: file.map(|f| f.path.clone()),
            });
        }
    }
    out
}

/// Files on one device identified by the SHA-256 its media records store.
pub fn identify_local_files(records: &[MessageRecord], media_inventory: &[MediaFile]) -> Vec<MediaCorrelation> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| is_media(r)) {
        let Some(hash) = record_hash_hex(r) else { continue };
        for f in media_inventory.iter().filter(|f| f.sha256 == hash && f.sent == r.from_me) {
            let (sender_record, sender_key, recipient_record, recipient_key) = if r.from_me {
                (Some(r.id), Some(r.key_id_raw.clone()), None, None)
            } else {
                (None, None, Some(r.id), Some(r.key_id_raw.clone()))
            };
            out.push(MediaCorrelation {
                level: MatchLevel::LocalFile,
                server_filename: r.server_filename(),
                sender_record,
                sender_key,
                sender_hash: r.from_me.then(|| hash.clone()),
                recipient_record,
                recipient_key,
                recipient_hash: (!r.from_me).then(|| hash.clone()),
                local_file: Some(f.path.clone()),
            });
        }
    }
    out
}

/// `sender_side` / `recipient_side` prefix citations of records that belong to
/// another device; `None` means this device.
pub fn media_findings(
    correlations: Vec<MediaCorrelation>,
    sender_side: Option<&str>,
    recipient_side: Option<&str>,
) -> Vec<Finding> {
    correlations
        .into_iter()
        .map(|c| {
            let mut evidence = Vec::new();
            if let Some(id) = c.sender_record {
                evidence.push(message_citation(sender_side, id));
            }
            if let Some(id) = c.recipient_record {
                evidence.push(message_citation(recipient_side, id));
            }
            evidence.extend(c.local_file.clone());
            let subject = c
                .server_filename
                .clone()
                .or_else(|| c.local_file.clone())
                .unwrap_or_default();
            Finding {
                category: Category::MediaCorrelation,
                subject,
                time: None,
                confidence_note: c.level.note().to_string(),
                payload: Payload::MediaCorrelation(c),
                evidence,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::test_support::message;
    use crate::model::records::encode_media_hash;
    use sha2::{Digest, Sha256};

    const URL: &str = "https://mms.whatsapp.net/d/x/AbC123-4.jpg";

    fn media(id: i64, from_me: bool, bytes: &[u8], url: Option<&str>) -> MessageRecord {
        let mut m = message(id, "393481234567@s.whatsapp.net", &format!("1382349000-{id}"), from_me);
        m.media_wa_type = 1;
        m.media_size = Some(bytes.len() as i64);
        m.media_url = url.map(str::to_string);
        m.media_hash = Some(encode_media_hash(&Sha256::digest(bytes).into()));
        m
    }

    fn file(path: &str, bytes: &[u8], sent: bool) -> MediaFile {
        MediaFile {
            path: path.into(),
            size: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
            sent,
        }
    }

    #[test]
    fn shared_file_is_one_full_match() {
        let bytes = b"jpeg bytes".to_vec();
        let sender = [media(1, true, &bytes, Some(URL))];
        let recipient = [media(7, false, &bytes, Some(URL))];
        let inv = [file("Media/WhatsApp Images/IMG-1.jpg", &bytes, false)];
        let c = correlate_media(&sender, &recipient, &inv);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].level, MatchLevel::Full);
        assert_eq!(c[0].local_file.as_deref(), Some("Media/WhatsApp Images/IMG-1.jpg"));
        assert_eq!(c[0].server_filename.as_deref(), Some("AbC123-4.jpg"));

        let mut altered = bytes.clone();
        altered[0] ^= 1;
        let inv = [file("Media/WhatsApp Images/IMG-1.jpg", &altered, false)];
        let c = correlate_media(&sender, &recipient, &inv);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].level, MatchLevel::NameOnlyMatch);
    }

    #[test]
    fn hash_only_and_no_overlap() {
        let bytes = b"clip".to_vec();
        let sender = [media(1, true, &bytes, Some(URL))];
        let recipient = [media(2, false, &bytes, None)];
        assert_eq!(correlate_media(&sender, &recipient, &[])[0].level, MatchLevel::HashOnlyMatch);
        let other = [media(3, false, b"else", Some("https://h/y/Other.jpg"))];
        assert!(correlate_media(&sender, &other, &[]).is_empty());
    }

    #[test]
    fn local_file_by_hash() {
        let bytes = b"received photo".to_vec();
        let mut r = media(4, false, &bytes, Some(URL));
        r.media_name = Some(String::new());
        let inv = [
            file("Media/WhatsApp Images/a.jpg", b"unrelated", false),
            file("Media/WhatsApp Images/b.jpg", &bytes, false),
        ];
        let c = identify_local_files(&[r], &inv);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].local_file.as_deref(), Some("Media/WhatsApp Images/b.jpg"));
    }
}
