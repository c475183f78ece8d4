//! Where each artifact lives, relative to the root of an extracted device image.

pub const DATABASES: &str = "data/data/com.whatsapp/databases";
pub const CONTACTS_DB: &str = "data/data/com.whatsapp/databases/wa.db";
pub const CHAT_DB: &str = "data/data/com.whatsapp/databases/msgstore.db";
pub const BACKUPS: &str = "mnt/sdcard/WhatsApp/Databases";
pub const CURRENT_BACKUP: &str = "msgstore.db.crypt";
pub const AVATARS: &str = "data/data/com.whatsapp/files/Avatars";
pub const PROFILE_PICTURES: &str = "mnt/sdcard/WhatsApp/ProfilePictures";
pub const AVATAR_EXTENSION: &str = ".j";
pub const LOGS: &str = "data/data/com.whatsapp/files/Logs";
pub const CURRENT_LOG: &str = "whatsapp.log";
pub const MEDIA: &str = "mnt/sdcard/WhatsApp/Media";
pub const SENT_MEDIA: &str = "mnt/sdcard/WhatsApp/Media/Sent";
pub const ME: &str = "data/data/com.whatsapp/files/me";
pub const ME_AVATAR: &str = "data/data/com.whatsapp/files/me.jpg";

pub fn join(dir: &str, name: &str) -> String {
    format!("{dir}/{name}")
}

/// True for paths under `Media/Sent`.
pub fn is_sent_media(path: &str) -> bool {
    path.strip_prefix(SENT_MEDIA)
        .is_some_and(|rest| rest.starts_with('/'))
}

/// `whatsapp.log` and rotated `whatsapp-<date>.log` files.
pub fn is_log_name(name: &str) -> bool {
    name.starts_with("whatsapp") && name.ends_with(".log")
}

/// `msgstore.db.crypt` and dated `msgstore-<date>.<n>.db.crypt` backups.
pub fn is_backup_name(name: &str) -> bool {
    name.starts_with("msgstore") && name.ends_with(".crypt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert!(is_sent_media("mnt/sdcard/WhatsApp/Media/Sent/IMG-20130312-WA0000.jpg"));
        assert!(!is_sent_media("mnt/sdcard/WhatsApp/Media/WhatsApp Images/IMG-20130312-WA0000.jpg"));
        assert!(!is_sent_media("mnt/sdcard/WhatsApp/Media/Sentinel/x"));
        assert!(is_log_name("whatsapp-2013-03-12.log"));
        assert!(!is_log_name("other.log"));
        assert!(is_backup_name("msgstore-2013-03-12.1.db.crypt"));
        assert!(is_backup_name(CURRENT_BACKUP));
    }
}
