//! `msgstore.db.crypt` backups: headerless AES-192 in ECB mode with one key
//! shared by every install.

use std::path::{Path, PathBuf};

use aes::cipher::{Array, BlockCipherDecrypt, BlockCipherEncrypt, KeyInit};
use aes::Aes192;
use thiserror::Error;

use crate::db::has_sqlite_magic;

pub const BLOCK_SIZE: usize = 16;

/// The key every `.crypt` backup of this generation was written with.
pub const DEFAULT_KEY_HEX: &str = "346a23652a46392b4d73257c67317e352e3372482177652c";

#[derive(Debug, Error)]
pub enum CryptError {
    #[error("length {0} is not a multiple of the {BLOCK_SIZE}-byte block size")]
    BadBlockLength(usize),
    #[error(
        "decrypted data does not start with the SQLite header \
         (wrong key, a keyed .crypt5+ backup, or corruption; \
         this tool assumes headerless AES-192-ECB)"
    )]
    MagicMismatch,
    #[error("key must be 24 bytes of hex: {0}")]
    BadKey(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// A 24-byte AES-192 key.
#[derive(Clone, PartialEq, Eq)]
pub struct BackupKey([u8; 24]);

impl BackupKey {
    pub fn from_hex(text: &str) -> Result<Self, CryptError> {
        let bytes = hex::decode(text.trim()).map_err(|e| CryptError::BadKey(e.to_string()))?;
        let key: [u8; 24] = bytes
            .try_into()
            .map_err(|b: Vec<u8>| CryptError::BadKey(format!("{} bytes", b.len())))?;
        Ok(BackupKey(key))
    }

    pub fn bytes(&self) -> &[u8; 24] {
        &self.0
    }

    fn cipher(&self) -> Aes192 {
        Aes192::new(&Array::from(self.0))
    }
}

impl Default for BackupKey {
    fn default() -> Self {
        BackupKey::from_hex(DEFAULT_KEY_HEX).expect("built-in key is valid hex")
    }
}

impl std::fmt::Debug for BackupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BackupKey({})", hex::encode(self.0))
    }
}

/// A backup file and, once decrypted, its plaintext.
#[derive(Debug, Clone)]
pub struct CryptBackup {
    pub path: PathBuf,
    pub ciphertext_length: usize,
    pub decrypted: Option<Vec<u8>>,
}

impl CryptBackup {
    pub fn read(path: impl AsRef<Path>, key: &BackupKey) -> Result<CryptBackup, CryptError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| CryptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let plaintext = decrypt_bytes(&bytes, key)?;
        Ok(CryptBackup {
            path: path.to_path_buf(),
            ciphertext_length: bytes.len(),
            decrypted: Some(plaintext),
        })
    }
}

fn check_blocks(len: usize) -> Result<(), CryptError> {
    if len.is_multiple_of(BLOCK_SIZE) {
        Ok(())
    } else {
        Err(CryptError::BadBlockLength(len))
    }
}

/// Block decryption with no check of the result.
pub fn decrypt_blocks(ciphertext: &[u8], key: &BackupKey) -> Result<Vec<u8>, CryptError> {
    check_blocks(ciphertext.len())?;
    let cipher = key.cipher();
    let mut out = ciphertext.to_vec();
    for chunk in out.chunks_exact_mut(BLOCK_SIZE) {
        let block: &mut Array<u8, _> = chunk.try_into().expect("exact 16-byte chunk");
        cipher.decrypt_block(block);
    }
    Ok(out)
}

/// Decrypts and validates a backup held in memory.
///
/// Plaintext is only returned once it carries the SQLite header; an empty or
/// single-block-short input cannot, so it fails as `MagicMismatch`.
pub fn decrypt_bytes(ciphertext: &[u8], key: &BackupKey) -> Result<Vec<u8>, CryptError> {
    let plaintext = decrypt_blocks(ciphertext, key)?;
    if has_sqlite_magic(&plaintext) {
        Ok(plaintext)
    } else {
        Err(CryptError::MagicMismatch)
    }
}

pub fn decrypt_backup(path: impl AsRef<Path>, key: &BackupKey) -> Result<Vec<u8>, CryptError> {
    let backup = CryptBackup::read(path, key)?;
    Ok(backup.decrypted.unwrap_or_default())
}

/// Inverse of [`decrypt_bytes`], used to build test fixtures.
pub fn encrypt_fixture(plaintext: &[u8], key: &BackupKey) -> Result<Vec<u8>, CryptError> {
    check_blocks(plaintext.len())?;
    let cipher = key.cipher();
    let mut out = plaintext.to_vec();
    for chunk in out.chunks_exact_mut(BLOCK_SIZE) {
        let block: &mut Array<u8, _> = chunk.try_into().expect("exact 16-byte chunk");
        cipher.encrypt_block(block);
    }
    Ok(out)
}
