//! Synthetic evidence bundles generated from scenario scripts, with the exact
//! result parsing and correlation should produce.

pub mod random;
pub mod script;
mod world;
mod write;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use random::random_script;
pub use script::{Action, Delivery, DeliveryState, ScenarioScript, TimedAction, SCRIPT_VERSION};

use crate::correlate::content::{Content, ControlOp};
use crate::correlate::deleted::Direction;
use crate::correlate::history::Origin;
use crate::correlate::state::StateCode;
use crate::model::{CaseBundle, EpochMillis};

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("invalid script: {0}")]
    InvalidHeader(String),
    #[error("invalid script: action {index} ({action}): {reason}")]
    InvalidScript {
        index: usize,
        action: &'static str,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Sqlite {
        path: PathBuf,
        source: rusqlite::Error,
    },
    #[error(transparent)]
    Crypt(#[from] crate::crypt::CryptError),
}

/// One history row as the script produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthEntry {
    pub record_id: i64,
    pub key_id: String,
    pub from_me: bool,
    pub effective_time: EpochMillis,
    pub author: Option<String>,
    pub state: StateCode,
    pub content: Content,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthGroupEvent {
    pub time: EpochMillis,
    pub op: ControlOp,
    pub member: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthGroup {
    pub group_id: String,
    pub name: String,
    pub events: Vec<TruthGroupEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthDeleted {
    pub direction: Direction,
    pub partners: BTreeSet<String>,
    pub exchanged_at: EpochMillis,
    pub deleted_at: EpochMillis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    /// What ingesting the written files must return.
    pub bundle: CaseBundle,
    pub histories: BTreeMap<String, Vec<TruthEntry>>,
    /// Key to partners, for every live non-control message.
    pub partners: BTreeMap<String, BTreeSet<String>>,
    pub groups: Vec<TruthGroup>,
    pub deleted_messages: BTreeMap<String, TruthDeleted>,
    /// WhatsApp contacts added at some point and absent at the end.
    pub deleted_contacts: BTreeSet<String>,
    /// Earliest addition of each WhatsApp contact.
    pub contact_additions: BTreeMap<String, EpochMillis>,
    /// Whether each contact ever blocked is still blocked at the end.
    pub blocked: BTreeMap<String, bool>,
    /// Script alias to message key.
    pub aliases: BTreeMap<String, String>,
}

/// Files written for one script, as paths relative to the output directory.
#[derive(Debug, Clone)]
pub struct Forged {
    pub truth: GroundTruth,
    pub files: Vec<String>,
}

/// Runs the script without touching the disk.
pub fn ground_truth(script: &ScenarioScript) -> Result<GroundTruth, ForgeError> {
    Ok(world::simulate(script)?.truth())
}

/// Writes the device image for `script` under `out_dir`.
pub fn generate_bundle(script: &ScenarioScript, out_dir: impl AsRef<Path>) -> Result<Forged, ForgeError> {
    let world = world::simulate(script)?;
    let files = write::write_all(&world, out_dir.as_ref())?;
    Ok(Forged {
        truth: world.truth(),
        files,
    })
}
