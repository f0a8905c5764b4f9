use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cards::CardRegistry;
use crate::router::{Attachment, TaskContext};

/// Items per slice in the shipped suite.
pub const SLICE_SIZE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slice {
    A,
    B,
    C,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::A, Slice::B, Slice::C];

    pub fn title(self) -> &'static str {
        match self {
            Slice::A => "Knowledge (A)",
            Slice::B => "Skill Gating (B)",
            Slice::C => "Verification (C)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldAction {
    Direct,
    CallTool,
    /// Loading one of the item's (benign) injected skills is correct.
    LoadSkillAllowed,
    Verify,
    Stop,
    /// Any action except loading a skill is correct.
    GateSkill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkItem {
    pub id: String,
    pub slice: Slice,
    pub prompt: String,
    #[serde(default)]
    pub kind_tags: BTreeSet<String>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    #[serde(default)]
    pub injected_card_ids: Vec<String>,
    pub gold_action: GoldAction,
    #[serde(default)]
    pub gold_answer: Option<String>,
}

impl BenchmarkItem {
    pub fn task(&self) -> TaskContext {
        TaskContext {
            prompt: self.prompt.clone(),
            kind_tags: self.kind_tags.clone(),
            attachments: self.attachments.clone(),
            pre_offload_p_self: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("reading suite {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("suite is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("slice {slice:?} expected {expected}, found {found}")]
    SliceCount {
        slice: Slice,
        expected: usize,
        found: usize,
    },
    #[error("duplicate item id \"{0}\"")]
    DuplicateId(String),
    #[error("item \"{item}\" references unknown card \"{card}\"")]
    DanglingCard { item: String, card: String },
    #[error("item \"{0}\" has an empty prompt")]
    EmptyPrompt(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SuiteFile {
    pub items: Vec<BenchmarkItem>,
}

/// Validates and returns items in file order. `per_slice` of `None` skips
/// the slice-size check (for supplementary suites).
pub fn validate_items(
    items: Vec<BenchmarkItem>,
    registry: &CardRegistry,
    per_slice: Option<usize>,
) -> Result<Vec<BenchmarkItem>, SuiteError> {
    let mut seen = HashSet::new();
    for item in &items {
        if !seen.insert(item.id.as_str()) {
            return Err(SuiteError::DuplicateId(item.id.clone()));
        }
        if item.prompt.is_empty() {
            return Err(SuiteError::EmptyPrompt(item.id.clone()));
        }
        if let Some(card) = item.injected_card_ids.iter().find(|c| registry.get(c).is_none()) {
            return Err(SuiteError::DanglingCard {
                item: item.id.clone(),
                card: card.clone(),
            });
        }
    }
    if let Some(expected) = per_slice {
        for slice in Slice::ALL {
            let found = items.iter().filter(|i| i.slice == slice).count();
            if found != expected {
                return Err(SuiteError::SliceCount {
                    slice,
                    expected,
                    found,
                });
            }
        }
    }
    Ok(items)
}

pub fn load_suite_with(
    path: impl AsRef<Path>,
    registry: &CardRegistry,
    per_slice: Option<usize>,
) -> Result<Vec<BenchmarkItem>, SuiteError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: SuiteFile = serde_json::from_str(&text)?;
    validate_items(file.items, registry, per_slice)
}

/// Loads a suite that must hold exactly 50 items per slice.
pub fn load_suite(
    path: impl AsRef<Path>,
    registry: &CardRegistry,
) -> Result<Vec<BenchmarkItem>, SuiteError> {
    load_suite_with(path, registry, Some(SLICE_SIZE))
}

pub fn suite_to_json_string(items: &[BenchmarkItem]) -> String {
    let mut s = serde_json::to_string_pretty(&SuiteFile {
        items: items.to_vec(),
    })
    .expect("suite serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, slice: Slice) -> BenchmarkItem {
        BenchmarkItem {
            id: id.into(),
            slice,
            prompt: "p".into(),
            kind_tags: BTreeSet::new(),
            attachments: vec![],
            injected_card_ids: vec![],
            gold_action: GoldAction::Direct,
            gold_answer: None,
        }
    }

    fn full_suite() -> Vec<BenchmarkItem> {
        Slice::ALL
            .iter()
            .flat_map(|&s| (0..SLICE_SIZE).map(move |i| item(&format!("{s:?}-{i:03}"), s)))
            .collect()
    }

    #[test]
    fn accepts_exact_shape() {
        let items = validate_items(full_suite(), &CardRegistry::default(), Some(SLICE_SIZE)).unwrap();
        assert_eq!(items.len(), 150);
    }

    #[test]
    fn wrong_slice_count() {
        let mut items = full_suite();
        items.remove(0);
        let err = validate_items(items, &CardRegistry::default(), Some(SLICE_SIZE)).unwrap_err();
        assert_eq!(err.to_string(), "slice A expected 50, found 49");
    }

    #[test]
    fn duplicate_and_dangling() {
        let items = vec![item("x", Slice::A), item("x", Slice::A)];
        assert!(matches!(
            validate_items(items, &CardRegistry::default(), None),
            Err(SuiteError::DuplicateId(_))
        ));
        let mut it = item("y", Slice::B);
        it.injected_card_ids.push("ghost".into());
        assert!(matches!(
            validate_items(vec![it], &CardRegistry::default(), None),
            Err(SuiteError::DanglingCard { .. })
        ));
    }
}
