//! Domain types shared by every stage, plus the identifier and timestamp decoders.

pub mod bundle;
pub mod ids;
pub mod records;
pub mod time;

pub use bundle::{AvatarFile, BackupSet, CaseBundle, LogCoverage, MediaFile, ParseWarning};
pub use ids::{
    parse_group_id, parse_jid, parse_message_key, GroupId, IdError, JidKind, MessageKey, WaJid,
};
pub use records::{
    ChatListRecord, ContactRecord, LogEvent, LogEventKind, MessageRecord, RowIdentity,
};
pub use time::{decode_epoch, DecodedEpoch, EpochMillis, EpochSeconds, EpochUnit};
