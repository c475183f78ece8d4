//! Registered number (`me` file) against the SIM's number.

use serde::{Deserialize, Serialize};

use super::finding::{Category, Finding, Payload};
use crate::model::CaseBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityOutcome {
    Match,
    /// The account may belong to someone other than the SIM holder.
    Mismatch,
    SimNotProvided,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub registered_number: Option<String>,
    pub sim_number: Option<String>,
    pub outcome: IdentityOutcome,
    pub own_avatar_present: bool,
}

fn digits(s: &str) -> String {
    s.chars().filter(char::is_ascii_digit).collect()
}

pub fn identity_check(bundle: &CaseBundle, sim_number: Option<&str>) -> Finding {
    let registered = bundle.registered_number.as_deref().map(digits).filter(|d| !d.is_empty());
    let sim = sim_number.map(digits).filter(|d| !d.is_empty());
    let (outcome, note) = match (&registered, &sim) {
        (None, _) => (IdentityOutcome::Unavailable, "registered number unavailable: no `me` file".to_string()),
        (Some(_), None) => (
            IdentityOutcome::SimNotProvided,
            "no SIM number supplied; registered number reported only".to_string(),
        ),
        (Some(r), Some(s)) if r == s => (IdentityOutcome::Match, "registered number equals the SIM number".into()),
        (Some(r), Some(s)) => (
            IdentityOutcome::Mismatch,
            format!("registered number {r} differs from SIM number {s}: possible impersonation"),
        ),
    };
    let mut evidence = Vec::new();
    if registered.is_some() {
        evidence.push(crate::layout::ME.to_string());
    }
    if bundle.own_avatar_present {
        evidence.push(crate::layout::ME_AVATAR.to_string());
    }
    Finding {
        category: Category::IdentityCheck,
        subject: registered.clone().unwrap_or_default(),
        time: None,
        payload: Payload::IdentityCheck(IdentityCheck {
            registered_number: registered,
            sim_number: sim,
            outcome,
            own_avatar_present: bundle.own_avatar_present,
        }),
        confidence_note: note,
        evidence,
    }
}
