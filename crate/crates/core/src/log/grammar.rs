//! Declarative line grammar: a line pattern plus ordered event rules.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::FixedOffset;
use regex::Regex;
use serde::Deserialize;

use super::LogError;
use crate::model::time::parse_offset;
use crate::model::LogEventKind;

pub const GRAMMAR_VERSION: u32 = 1;
pub const DEFAULT_GRAMMAR_TOML: &str = include_str!("default_grammar.toml");

/// Values a rule can pull out of a line body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CaptureRole {
    Jid,
    Key,
    Group,
    Name,
}

impl CaptureRole {
    const ALL: [CaptureRole; 4] = [CaptureRole::Jid, CaptureRole::Key, CaptureRole::Group, CaptureRole::Name];

    fn name(self) -> &'static str {
        match self {
            CaptureRole::Jid => "jid",
            CaptureRole::Key => "key",
            CaptureRole::Group => "group",
            CaptureRole::Name => "name",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GrammarFile {
    version: u32,
    line_pattern: String,
    timestamp_format: String,
    #[serde(default = "utc_text")]
    utc_offset: String,
    #[serde(default)]
    rules: Vec<RuleFile>,
}

fn utc_text() -> String {
    "+00:00".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    kind: String,
    pattern: String,
    #[serde(default)]
    captures: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct EventRule {
    pub kind: LogEventKind,
    pub pattern: Regex,
    /// Role to regex group name.
    pub captures: BTreeMap<CaptureRole, String>,
}

impl EventRule {
    pub fn group_for(&self, role: CaptureRole) -> Option<&str> {
        self.captures.get(&role).map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct LogGrammar {
    pub line_pattern: Regex,
    pub timestamp_format: String,
    pub utc_offset: FixedOffset,
    pub event_rules: Vec<EventRule>,
}

impl LogGrammar {
    pub fn from_toml(text: &str) -> Result<LogGrammar, LogError> {
        let file: GrammarFile =
            toml::from_str(text).map_err(|e| LogError::Grammar(e.to_string()))?;
        if file.version != GRAMMAR_VERSION {
            return Err(LogError::Grammar(format!(
                "unsupported grammar version {} (expected {GRAMMAR_VERSION})",
                file.version
            )));
        }
        let line_pattern = compile(&file.line_pattern)?;
        for group in ["ts", "body"] {
            if !has_group(&line_pattern, group) {
                return Err(LogError::Grammar(format!(
                    "line_pattern lacks the named group `{group}`"
                )));
            }
        }
        let utc_offset = parse_offset(&file.utc_offset)
            .ok_or_else(|| LogError::Grammar(format!("bad utc_offset {:?}", file.utc_offset)))?;

        let mut event_rules = Vec::with_capacity(file.rules.len());
        for (index, rule) in file.rules.into_iter().enumerate() {
            let kind = LogEventKind::from_name(&rule.kind).ok_or_else(|| {
                LogError::Grammar(format!("rule {index}: unknown event kind {:?}", rule.kind))
            })?;
            let pattern = compile(&rule.pattern)?;
            let mut captures = BTreeMap::new();
            for role in CaptureRole::ALL {
                let group = rule
                    .captures
                    .get(role.name())
                    .cloned()
                    .unwrap_or_else(|| role.name().to_string());
                if has_group(&pattern, &group) {
                    captures.insert(role, group);
                } else if rule.captures.contains_key(role.name()) {
                    return Err(LogError::Grammar(format!(
                        "rule {index}: capture `{group}` for `{}` is not in the pattern",
                        role.name()
                    )));
                }
            }
            if let Some(unknown) = rule
                .captures
                .keys()
                .find(|k| !CaptureRole::ALL.iter().any(|r| r.name() == k.as_str()))
            {
                return Err(LogError::Grammar(format!(
                    "rule {index}: unknown capture role {unknown:?}"
                )));
            }
            event_rules.push(EventRule {
                kind,
                pattern,
                captures,
            });
        }
        Ok(LogGrammar {
            line_pattern,
            timestamp_format: file.timestamp_format,
            utc_offset,
            event_rules,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<LogGrammar, LogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LogError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        LogGrammar::from_toml(&text)
    }
}

impl Default for LogGrammar {
    fn default() -> Self {
        LogGrammar::from_toml(DEFAULT_GRAMMAR_TOML).expect("default grammar compiles")
    }
}

fn compile(pattern: &str) -> Result<Regex, LogError> {
    Regex::new(pattern).map_err(|e| LogError::Grammar(e.to_string()))
}

fn has_group(re: &Regex, name: &str) -> bool {
    re.capture_names().flatten().any(|n| n == name)
}
