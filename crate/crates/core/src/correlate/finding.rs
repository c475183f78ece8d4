use serde::{Deserialize, Serialize};

use super::contacts::{BlockStatusReport, ContactAddition, DeletedContact};
use super::deleted::DeletedMessage;
use super::identity::IdentityCheck;
use super::media::MediaCorrelation;
use super::partners::BroadcastSummary;
use crate::model::EpochMillis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Conversation,
    DeletedContact,
    DeletedMessage,
    BlockStatus,
    GroupMembership,
    MediaCorrelation,
    IdentityCheck,
    ContactAdded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub group_name: Option<String>,
    pub created_at: EpochMillis,
    pub events: usize,
    pub events_from_logs: usize,
    pub members_at_end: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Broadcast(BroadcastSummary),
    DeletedContact(DeletedContact),
    DeletedMessage(DeletedMessage),
    BlockStatus(BlockStatusReport),
    GroupMembership(GroupSummary),
    MediaCorrelation(MediaCorrelation),
    IdentityCheck(IdentityCheck),
    ContactAdded(ContactAddition),
    /// No log file was available, so log-based inference could not run.
    NoLogCoverage { analysis: String },
}

/// One analytical conclusion, with the evidence it rests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub category: Category,
    pub subject: String,
    pub time: Option<EpochMillis>,
    pub payload: Payload,
    pub confidence_note: String,
    /// Record ids (`messages/_id=N`), log lines (`file:line`) or file paths.
    pub evidence: Vec<String>,
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        (a.category, &a.subject, a.time).cmp(&(b.category, &b.subject, b.time))
    });
}

pub fn message_citation(backup: Option<&str>, id: i64) -> String {
    match backup {
        Some(path) => format!("{path}#messages/_id={id}"),
        None => format!("messages/_id={id}"),
    }
}
