//! Typed message content, dispatched on `media_wa_type`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::records::{control_op, media_type};
use crate::model::MessageRecord;

/// Size and digest of an embedded blob (thumbnails are not copied into reports).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobSummary {
    pub len: usize,
    pub sha256: String,
}

impl BlobSummary {
    pub fn of(bytes: &[u8]) -> Self {
        BlobSummary {
            len: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Audio,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlOp {
    Created,
    Joined,
    Left,
}

impl ControlOp {
    pub fn from_media_size(size: i64) -> Option<ControlOp> {
        match size {
            control_op::CREATED => Some(ControlOp::Created),
            control_op::JOINED => Some(ControlOp::Joined),
            control_op::LEFT => Some(ControlOp::Left),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Content {
    Text {
        text: String,
    },
    Media {
        kind: MediaKind,
        mime: Option<String>,
        name: Option<String>,
        size: Option<i64>,
        /// Seconds; only reported for audio and video.
        duration: Option<i64>,
        hash: Option<String>,
        server_filename: Option<String>,
        thumbnail: Option<BlobSummary>,
    },
    ContactCard {
        vcard: String,
        display_name: Option<String>,
    },
    GeoPoint {
        lat: f64,
        lon: f64,
        map_thumbnail: Option<BlobSummary>,
    },
    Control {
        op: Option<ControlOp>,
        code: Option<i64>,
        member: Option<String>,
        group_name: Option<String>,
    },
}

/// Decoded content plus a note when the record contradicts its own type.
pub fn extract_content(record: &MessageRecord) -> (Content, Option<String>) {
    if record.is_control() {
        let op = record.media_size.and_then(ControlOp::from_media_size);
        return (
            Content::Control {
                op,
                code: record.media_size,
                member: record.remote_resource.first().map(|j| j.raw.clone()),
                group_name: (op == Some(ControlOp::Created))
                    .then(|| record.data.clone())
                    .flatten(),
            },
            None,
        );
    }
    let text = || record.data.clone().unwrap_or_default();
    let thumbnail = record.raw_data.as_deref().map(BlobSummary::of);
    match record.media_wa_type {
        media_type::TEXT => (Content::Text { text: text() }, None),
        t @ (media_type::IMAGE | media_type::AUDIO | media_type::VIDEO) => {
            let kind = match t {
                media_type::IMAGE => MediaKind::Image,
                media_type::AUDIO => MediaKind::Audio,
                _ => MediaKind::Video,
            };
            let note = (record.media_url.is_none() && record.media_hash.is_none())
                .then(|| "media message without media_url or media_hash".to_string());
            let content = Content::Media {
                kind,
                mime: record.media_mime_type.clone(),
                name: record.media_name.clone().filter(|n| !n.is_empty()),
                size: record.media_size,
                duration: if kind == MediaKind::Image {
                    None
                } else {
                    record.media_duration
                },
                hash: record.media_hash.clone(),
                server_filename: record.server_filename(),
                thumbnail,
            };
            (content, note)
        }
        media_type::CONTACT_CARD => (
            Content::ContactCard {
                vcard: text(),
                display_name: record.media_name.clone(),
            },
            None,
        ),
        media_type::GEO => match (record.latitude, record.longitude) {
            (Some(lat), Some(lon)) if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) => (
                Content::GeoPoint {
                    lat,
                    lon,
                    map_thumbnail: thumbnail,
                },
                None,
            ),
            _ => (
                Content::Text { text: text() },
                Some("geolocation message without valid coordinates; content downgraded to text".into()),
            ),
        },
        other => (
            Content::Text { text: text() },
            Some(format!("unknown media_wa_type {other}; content treated as text")),
        ),
    }
}
