//! Failure bank: an append-only JSONL log of trajectories, and trust
//! updates derived only from high-confidence failures.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cards::{CardError, CardRegistry};
use crate::router::{Outcome, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub trajectory: TrajectoryRecord,
    pub implicated_card: Option<String>,
    /// Sequence number, assigned by [`record`].
    #[serde(default)]
    pub recorded_at: u64,
}

impl BankEntry {
    pub fn new(trajectory: TrajectoryRecord) -> Self {
        let implicated_card = trajectory.implicated_card.clone();
        BankEntry {
            trajectory,
            implicated_card,
            recorded_at: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustUpdate {
    pub card_id: String,
    pub old_trust: f64,
    pub new_trust: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BankConfig {
    pub high_confidence_threshold: f64,
    pub decrement_factor: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            high_confidence_threshold: 0.8,
            decrement_factor: 0.5,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<(), BankError> {
        if !(0.0..=1.0).contains(&self.high_confidence_threshold) {
            return Err(BankError::Config(format!(
                "high_confidence_threshold {} not in [0, 1]",
                self.high_confidence_threshold
            )));
        }
        if !(self.decrement_factor > 0.0 && self.decrement_factor <= 1.0) {
            return Err(BankError::Config(format!(
                "decrement_factor {} not in (0, 1]",
                self.decrement_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: corrupt bank entry: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("card file: {0}")]
    Cards(#[from] CardError),
    #[error("stale update for \"{card}\": expected trust {expected}, file has {found}")]
    StaleUpdate {
        card: String,
        expected: f64,
        found: f64,
    },
    #[error("update names unknown card \"{0}\"")]
    UnknownCard(String),
    #[error("{0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BankError + '_ {
    move |source| BankError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses complete lines. A trailing fragment with no newline, or a line
/// that is a truncated JSON object, is the residue of an interrupted append
/// and is skipped.
fn parse_entries(text: &str, path: &Path) -> Result<Vec<BankEntry>, BankError> {
    let mut out = Vec::new();
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    for (n, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<BankEntry>(line) {
            Ok(e) => out.push(e),
            Err(e) if e.is_eof() => warn!("{}:{}: skipping torn entry", path.display(), n + 1),
            Err(source) => {
                return Err(BankError::Corrupt {
                    path: path.to_path_buf(),
                    line: n + 1,
                    source,
                })
            }
        }
    }
    Ok(out)
}

/// Appends `line` (newline-terminated) with a single write.
pub(crate) fn append_line<W: Write>(w: &mut W, needs_separator: bool, line: &str) -> io::Result<()> {
    let mut buf = String::with_capacity(line.len() + 2);
    if needs_separator {
        buf.push('\n');
    }
    buf.push_str(line);
    buf.push('\n');
    w.write_all(buf.as_bytes())?;
    w.flush()
}

/// Appends one entry under an exclusive advisory lock and returns its
/// sequence number. Existing bytes are never rewritten.
pub fn record(entry: &BankEntry, bank_path: impl AsRef<Path>) -> Result<u64, BankError> {
    record_with(entry, bank_path.as_ref(), |f, sep, line| append_line(f, sep, line))
}

pub(crate) fn record_with<F>(entry: &BankEntry, path: &Path, append: F) -> Result<u64, BankError>
where
    F: FnOnce(&mut File, bool, &str) -> io::Result<()>,
{
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.lock().map_err(io_err(path))?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io_err(path))?;
    let existing = parse_entries(&text, path)?;
    let seq = existing.last().map_or(0, |e| e.recorded_at + 1);
    let mut entry = entry.clone();
    entry.recorded_at = seq;
    let line = serde_json::to_string(&entry).expect("entry serializes");
    let torn_tail = !text.is_empty() && !text.ends_with('\n');
    append(&mut file, torn_tail, &line).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))?;
    Ok(seq)
}

/// Reads all complete entries under a shared lock. A missing file is an
/// empty bank.
pub fn read_bank(bank_path: impl AsRef<Path>) -> Result<Vec<BankEntry>, BankError> {
    let path = bank_path.as_ref();
    let mut file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    file.lock_shared().map_err(io_err(path))?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(io_err(path))?;
    parse_entries(&text, path)
}

/// True for entries the hypercorrection rule acts on.
pub fn is_high_confidence_failure(entry: &BankEntry, cfg: &BankConfig) -> bool {
    entry.trajectory.outcome == Outcome::Incorrect
        && entry.trajectory.terminal_confidence >= cfg.high_confidence_threshold
        && entry.implicated_card.is_some()
}

/// One update per high-confidence failure with an implicated card; every
/// other entry is ignored. Repeated failures on a card chain, so the
/// n-th update carries trust × (1 − κ)^n. Cards absent from `registry`
/// are skipped with a warning.
pub fn hypercorrection_updates(
    entries: &[BankEntry],
    registry: &CardRegistry,
    cfg: &BankConfig,
) -> Vec<TrustUpdate> {
    let mut current: HashMap<&str, f64> = HashMap::new();
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| is_high_confidence_failure(e, cfg)) {
        let id = e.implicated_card.as_deref().expect("filtered");
        let old = match current.get(id) {
            Some(t) => *t,
            None => match registry.get(id) {
                Some(card) => card.source_trust,
                None => {
                    warn!("bank entry {} implicates unknown card \"{id}\"", e.recorded_at);
                    continue;
                }
            },
        };
        let new = old * (1.0 - cfg.decrement_factor);
        current.insert(id, new);
        out.push(TrustUpdate {
            card_id: id.to_string(),
            old_trust: old,
            new_trust: new,
            reason: format!(
                "high-confidence failure: {}/{} entry {} (confidence {:.3})",
                e.trajectory.item_id, e.trajectory.condition, e.recorded_at, e.trajectory.terminal_confidence
            ),
        });
    }
    out
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Applies `updates` in order to the card file at `registry_path`.
///
/// Every `old_trust` must equal the value currently in the file (after
/// earlier updates in the same batch); otherwise nothing is written. On
/// success the previous file is kept as `<path>.bak` and the new one is
/// moved into place by rename. Only `source_trust` values change; the rest
/// of the document is re-emitted in its original key order.
pub fn apply_updates(registry_path: impl AsRef<Path>, updates: &[TrustUpdate]) -> Result<String, BankError> {
    let path = registry_path.as_ref();
    let lock_path = sibling(path, ".lock");
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(io_err(&lock_path))?;
    lock.lock().map_err(io_err(&lock_path))?;

    let text = fs::read_to_string(path).map_err(io_err(path))?;
    CardRegistry::from_json_str(&text)?;
    let mut doc: Value = serde_json::from_str(&text).map_err(CardError::from)?;
    let cards = doc
        .get_mut("cards")
        .and_then(Value::as_array_mut)
        .ok_or(CardError::NotACardFile)?;
    for u in updates {
        let card = cards
            .iter_mut()
            .find(|c| c.get("id").and_then(Value::as_str) == Some(u.card_id.as_str()))
            .ok_or_else(|| BankError::UnknownCard(u.card_id.clone()))?;
        let found = card.get("source_trust").and_then(Value::as_f64).unwrap_or(f64::NAN);
        if found != u.old_trust {
            return Err(BankError::StaleUpdate {
                card: u.card_id.clone(),
                expected: u.old_trust,
                found,
            });
        }
        card["source_trust"] = Value::from(u.new_trust);
    }
    let mut out = serde_json::to_string_pretty(&doc).expect("value serializes");
    out.push('\n');

    fs::copy(path, sibling(path, ".bak")).map_err(io_err(path))?;
    let tmp = sibling(path, ".tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(out.as_bytes()).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(out)
}
