//! Command-line front end. Exit codes: 0 clean, 1 output written with
//! warnings, 2 structural error, 64 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::FixedOffset;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::correlate::deleted::backup_diff;
use crate::correlate::{analyze, AnalysisOptions};
use crate::crypt::{decrypt_backup, BackupKey};
use crate::forge::{generate_bundle, ScenarioScript};
use crate::ingest::{load_bundle, IngestOptions};
use crate::log::LogGrammar;
use crate::model::time::parse_offset;
use crate::model::{CaseBundle, EpochMillis, ParseWarning};
use crate::report::{render_json, timeline_csv, BundleSummary, ReportDocument, TimelineDocument, TOOL_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_WARNINGS: i32 = 1;
pub const EXIT_STRUCTURAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "waforensics", version, about = "Examine WhatsApp artifacts extracted from an Android device")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
struct Source {
    /// Root of the extracted file system
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Log grammar file replacing the built-in one
    #[arg(long, value_name = "TOML")]
    grammar: Option<PathBuf>,
    /// Backup key as 48 hex digits
    #[arg(long, value_name = "HEX")]
    key: Option<String>,
}

#[derive(Debug, clap::Args)]
struct Output {
    /// UTC offset used for rendered times, such as +01:00
    #[arg(long, default_value = "+00:00", value_parser = offset_arg)]
    tz: FixedOffset,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write here instead of standard output
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the evidence and summarize what was found
    Ingest {
        #[command(flatten)]
        source: Source,
    },
    /// Run every analysis and write the case report
    Report {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        output: Output,
        /// Phone number of the SIM found in the device
        #[arg(long, value_name = "NUMBER")]
        sim: Option<String>,
        /// Extraction of a second device, for media correlation
        #[arg(long, value_name = "DIR")]
        peer: Option<PathBuf>,
        /// Fail unless every evidence file keeps its size and modification time
        #[arg(long)]
        verify_readonly: bool,
    },
    /// Decrypt one msgstore backup into a plain SQLite file
    Decrypt {
        #[arg(long = "in", value_name = "CRYPT")]
        input: PathBuf,
        #[arg(long, value_name = "DB")]
        out: PathBuf,
        #[arg(long, value_name = "HEX")]
        key: Option<String>,
    },
    /// List rows present in a backup but absent from the live database
    Diff {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Per-conversation chronology and group membership events
    Timeline {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        output: Output,
    },
    /// Build a synthetic extraction from a scenario script
    Forge {
        #[arg(long, value_name = "TOML")]
        script: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Also write the expected analysis results as JSON
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
    },
}

fn offset_arg(text: &str) -> Result<FixedOffset, String> {
    parse_offset(text).ok_or_else(|| format!("not a UTC offset: {text}"))
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Structural(String),
}

fn structural(e: impl std::fmt::Display) -> CliError {
    CliError::Structural(e.to_string())
}

fn key_of(hex: Option<&str>) -> Result<BackupKey, CliError> {
    match hex {
        Some(h) => BackupKey::from_hex(h).map_err(|e| CliError::Usage(format!("--key: {e}"))),
        None => Ok(BackupKey::default()),
    }
}

fn ingest(source: &Source) -> Result<CaseBundle, CliError> {
    let grammar = match &source.grammar {
        Some(path) => LogGrammar::from_file(path).map_err(structural)?,
        None => LogGrammar::default(),
    };
    let options = IngestOptions {
        grammar,
        key: key_of(source.key.as_deref())?,
    };
    load_bundle(&source.input, &options).map_err(structural)
}

/// Size and modification time of every file under `root`.
fn fingerprint(root: &Path) -> Result<BTreeMap<PathBuf, (u64, std::time::SystemTime)>, CliError> {
    let mut out = BTreeMap::new();
    let mut pending = vec![root.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in std::fs::read_dir(&dir).map_err(structural)? {
            let entry = entry.map_err(structural)?;
            let meta = entry.metadata().map_err(structural)?;
            if meta.is_dir() {
                pending.push(entry.path());
            } else {
                out.insert(entry.path(), (meta.len(), meta.modified().map_err(structural)?));
            }
        }
    }
    Ok(out)
}

/// Output must not land inside the evidence tree.
fn check_out(out: Option<&Path>, evidence: &[&Path]) -> Result<(), CliError> {
    let Some(out) = out else { return Ok(()) };
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let Ok(parent) = parent.canonicalize() else { return Ok(()) };
    for root in evidence {
        if let Ok(root) = root.canonicalize() {
            if parent.starts_with(&root) {
                return Err(CliError::Usage(format!(
                    "--out {} is inside the evidence directory {}",
                    out.display(),
                    root.display()
                )));
            }
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| structural(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(structural),
    }
}

fn status(warnings: &[ParseWarning]) -> i32 {
    if warnings.is_empty() {
        EXIT_OK
    } else {
        EXIT_WARNINGS
    }
}

#[derive(Serialize)]
struct IngestDocument<'a> {
    tool_version: &'a str,
    bundle_summary: BundleSummary,
    warnings: &'a [ParseWarning],
}

#[derive(Serialize)]
struct RecoveredRow<'a> {
    record_id: i64,
    key_remote_jid: &'a str,
    from_me: bool,
    key_id: &'a str,
    effective_time: EpochMillis,
    data: Option<&'a str>,
}

#[derive(Serialize)]
struct BackupDiff<'a> {
    backup: &'a str,
    recovered: Vec<RecoveredRow<'a>>,
}

#[derive(Serialize)]
struct DiffDocument<'a> {
    tool_version: &'a str,
    backups: Vec<BackupDiff<'a>>,
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let utc = FixedOffset::east_opt(0).expect("zero offset");
    match command {
        Command::Ingest { source } => {
            let bundle = ingest(&source)?;
            let doc = IngestDocument {
                tool_version: TOOL_VERSION,
                bundle_summary: BundleSummary::of(&bundle),
                warnings: &bundle.warnings,
            };
            emit(&render_json(&doc, utc), None, stdout)?;
            Ok(status(&bundle.warnings))
        }
        Command::Report {
            source,
            output,
            sim,
            peer,
            verify_readonly,
        } => {
            let mut evidence = vec![source.input.as_path()];
            evidence.extend(peer.as_deref());
            check_out(output.out.as_deref(), &evidence)?;
            let before = if verify_readonly {
                Some(evidence.iter().map(|r| fingerprint(r)).collect::<Result<Vec<_>, _>>()?)
            } else {
                None
            };
            let bundle = ingest(&source)?;
            let peer_bundle = match &peer {
                Some(dir) => Some(ingest(&Source {
                    input: dir.clone(),
                    grammar: source.grammar.clone(),
                    key: source.key.clone(),
                })?),
                None => None,
            };
            let analysis = analyze(
                &bundle,
                &AnalysisOptions {
                    sim_number: sim,
                    peer: peer_bundle.as_ref(),
                },
            );
            let doc = ReportDocument::new(&bundle, analysis);
            let text = match output.format {
                Format::Json => render_json(&doc, output.tz),
                Format::Csv => timeline_csv(&doc.conversations, &doc.group_timelines, output.tz),
            };
            emit(&text, output.out.as_deref(), stdout)?;
            if let Some(before) = before {
                let after = evidence.iter().map(|r| fingerprint(r)).collect::<Result<Vec<_>, _>>()?;
                if before != after {
                    return Err(CliError::Structural("evidence files changed during the run".into()));
                }
                writeln!(stderr, "read-only check passed").map_err(structural)?;
            }
            Ok(status(&doc.warnings))
        }
        Command::Decrypt { input, out, key } => {
            let key = key_of(key.as_deref())?;
            if out.exists() {
                return Err(CliError::Usage(format!("{} already exists", out.display())));
            }
            let plaintext = decrypt_backup(&input, &key).map_err(structural)?;
            std::fs::write(&out, plaintext).map_err(|e| structural(format!("{}: {e}", out.display())))?;
            Ok(EXIT_OK)
        }
        Command::Diff { source, out } => {
            check_out(out.as_deref(), &[&source.input])?;
            let bundle = ingest(&source)?;
            let doc = DiffDocument {
                tool_version: TOOL_VERSION,
                backups: bundle
                    .backups
                    .iter()
                    .map(|b| BackupDiff {
                        backup: &b.path,
                        recovered: backup_diff(&bundle.messages, &b.messages)
                            .into_iter()
                            .map(|r| RecoveredRow {
                                record_id: r.id,
                                key_remote_jid: &r.key_remote_jid.raw,
                                from_me: r.from_me,
                                key_id: &r.key_id_raw,
                                effective_time: r.effective_time(),
                                data: r.data.as_deref(),
                            })
                            .collect(),
                    })
                    .collect(),
            };
            emit(&render_json(&doc, utc), out.as_deref(), stdout)?;
            Ok(status(&bundle.warnings))
        }
        Command::Timeline { source, output } => {
            check_out(output.out.as_deref(), &[&source.input])?;
            let bundle = ingest(&source)?;
            let analysis = analyze(&bundle, &AnalysisOptions::default());
            let text = match output.format {
                Format::Json => render_json(
                    &TimelineDocument {
                        tool_version: TOOL_VERSION.to_string(),
                        conversations: analysis.histories,
                        group_timelines: analysis.group_timelines,
                    },
                    output.tz,
                ),
                Format::Csv => timeline_csv(&analysis.histories, &analysis.group_timelines, output.tz),
            };
            emit(&text, output.out.as_deref(), stdout)?;
            Ok(status(&bundle.warnings))
        }
        Command::Forge { script, out, truth } => {
            let text = std::fs::read_to_string(&script).map_err(|e| structural(format!("{}: {e}", script.display())))?;
            let script = ScenarioScript::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", script.display())))?;
            let forged = generate_bundle(&script, &out).map_err(structural)?;
            if let Some(path) = truth {
                let json = serde_json::to_string_pretty(&forged.truth).map_err(structural)?;
                std::fs::write(&path, json + "\n").map_err(|e| structural(format!("{}: {e}", path.display())))?;
            }
            for file in &forged.files {
                writeln!(stdout, "{file}").map_err(structural)?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            if code == EXIT_USAGE && e.kind() != ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let help = <Cli as clap::CommandFactory>::command().render_help().to_string();
                let _ = writeln!(stderr, "\n{help}");
            }
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(CliError::Usage(message)) => {
            let _ = writeln!(stderr, "error: {message}");
            EXIT_USAGE
        }
        Err(CliError::Structural(message)) => {
            let _ = writeln!(stderr, "error: {message}");
            EXIT_STRUCTURAL
        }
    }
}
