use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, Query, QueryContext, SignalValue};

/// Condition name matching every condition that has no row of its own.
pub const ANY_CONDITION: &str = "*";
/// Answer key used when no variant-specific answer row exists.
pub const DEFAULT_ANSWER_KEY: &str = "answer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRow {
    pub item: String,
    pub condition: String,
    pub key: String,
    pub value: SignalValue,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading script {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("script is not valid: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {index}: {message}")]
    MalformedRow { index: usize, message: String },
    #[error("script is missing {} key(s): {}", .0.len(), .0.join(", "))]
    MissingKeys(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    rows: Vec<ScriptRow>,
}

/// Fixed signal table keyed by (item, condition, query key).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BehaviorScript {
    rows: BTreeMap<(String, String, String), SignalValue>,
}

impl BehaviorScript {
    pub fn insert(&mut self, item: &str, condition: &str, query: Query, value: SignalValue) {
        self.insert_key(item, condition, &query.key(), value);
    }

    pub fn insert_key(&mut self, item: &str, condition: &str, key: &str, value: SignalValue) {
        self.rows
            .insert((item.to_string(), condition.to_string(), key.to_string()), value);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn get(&self, item: &str, condition: &str, key: &str) -> Option<&SignalValue> {
        let mut k = (item.to_string(), condition.to_string(), key.to_string());
        if let Some(v) = self.rows.get(&k) {
            return Some(v);
        }
        k.1 = ANY_CONDITION.to_string();
        self.rows.get(&k)
    }

    /// Resolves one query, falling back from a variant answer to the default answer.
    pub fn lookup(&self, item: &str, condition: &str, query: &Query) -> Option<&SignalValue> {
        self.get(item, condition, &query.key()).or_else(|| match query {
            Query::Answer(_) => self.get(item, condition, DEFAULT_ANSWER_KEY),
            _ => None,
        })
    }

    /// Checks that every `(item, condition, key)` requirement resolves.
    pub fn check_coverage<'a, I>(&self, required: I) -> Result<(), ScriptError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, String)>,
    {
        let missing: Vec<String> = required
            .into_iter()
            .filter(|(item, cond, key)| self.get(item, cond, key).is_none())
            .map(|(item, cond, key)| format!("{item}/{cond}:{key}"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(ScriptError::MissingKeys(missing))
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScriptError> {
        let file: ScriptFile = serde_json::from_str(text)?;
        let mut script = BehaviorScript::default();
        for (index, row) in file.rows.into_iter().enumerate() {
            if row.item.is_empty() || row.condition.is_empty() {
                return Err(ScriptError::MalformedRow {
                    index,
                    message: "item and condition must be non-empty".into(),
                });
            }
            let query = Query::parse_key(&row.key);
            if query.is_none() && row.key != DEFAULT_ANSWER_KEY {
                return Err(ScriptError::MalformedRow {
                    index,
                    message: format!("unknown key \"{}\"", row.key),
                });
            }
            let numeric = matches!(
                query,
                Some(
                    Query::SelfConfidence
                        | Query::PostOffloadConfidence
                        | Query::SourceConfidence(_)
                        | Query::Probe(_)
                        | Query::Reflection
                )
            );
            match (&row.value, numeric) {
                (SignalValue::Number(n), true) if !(0.0..=1.0).contains(n) => {
                    return Err(ScriptError::MalformedRow {
                        index,
                        message: format!("{} = {n} outside [0, 1]", row.key),
                    })
                }
                (SignalValue::Text(_), true) => {
                    return Err(ScriptError::MalformedRow {
                        index,
                        message: format!("{} must be numeric", row.key),
                    })
                }
                _ => {}
            }
            script.insert_key(&row.item, &row.condition, &row.key, row.value);
        }
        Ok(script)
    }

    pub fn to_json_string(&self) -> String {
        let rows: Vec<ScriptRow> = self
            .rows
            .iter()
            .map(|((item, condition, key), value)| ScriptRow {
                item: item.clone(),
                condition: condition.clone(),
                key: key.clone(),
                value: value.clone(),
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&ScriptFile { rows }).expect("script serializes");
        s.push('\n');
        s
    }
}

/// Reads a behavior script. Coverage is checked separately against a suite.
pub fn load_script(path: impl AsRef<Path>) -> Result<BehaviorScript, ScriptError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScriptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    BehaviorScript::from_json_str(&text)
}

/// Deterministic backend answering from a [`BehaviorScript`].
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: BehaviorScript,
}

impl ScriptedBackend {
    pub fn new(script: BehaviorScript) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &BehaviorScript {
        &self.script
    }
}

impl ModelBackend for ScriptedBackend {
    fn query(&self, ctx: &QueryContext<'_>, query: &Query) -> Result<SignalValue, BackendError> {
        self.script
            .lookup(ctx.item_id, ctx.condition, query)
            .cloned()
            .ok_or_else(|| BackendError::Missing(format!("{}/{}:{}", ctx.item_id, ctx.condition, query)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::{TaskContext, VariantKind};

    #[test]
    fn condition_specific_row_overrides_default() {
        let mut s = BehaviorScript::default();
        s.insert("A-001", "*", Query::SelfConfidence, SignalValue::Number(0.9));
        s.insert("A-001", "Baseline", Query::SelfConfidence, SignalValue::Number(0.1));
        let b = ScriptedBackend::new(s);
        let t = TaskContext::new("q").unwrap();
        let full = QueryContext { item_id: "A-001", condition: "Full", task: &t };
        let base = QueryContext { item_id: "A-001", condition: "Baseline", task: &t };
        assert_eq!(b.self_confidence(&full).unwrap(), 0.9);
        assert_eq!(b.self_confidence(&base).unwrap(), 0.1);
    }

    #[test]
    fn answer_falls_back_to_default() {
        let mut s = BehaviorScript::default();
        s.insert_key("C-1", "*", "answer", SignalValue::Text("0.05".into()));
        s.insert("C-1", "*", Query::Answer(VariantKind::Direct), SignalValue::Text("0.10".into()));
        let b = ScriptedBackend::new(s);
        let t = TaskContext::new("q").unwrap();
        let q = QueryContext { item_id: "C-1", condition: "Full", task: &t };
        assert_eq!(b.answer(&q, VariantKind::Direct).unwrap(), "0.10");
        assert_eq!(b.answer(&q, VariantKind::Verify).unwrap(), "0.05");
    }

    #[test]
    fn coverage_names_missing_item_and_condition() {
        let mut s = BehaviorScript::default();
        s.insert("B-030", "*", Query::SelfConfidence, SignalValue::Number(0.5));
        let err = s
            .check_coverage(vec![
                ("B-030", "Full", "p_self".to_string()),
                ("B-031", "Full", "p_self".to_string()),
            ])
            .unwrap_err();
        assert!(err.to_string().contains("B-031/Full"), "{err}");
        assert!(!err.to_string().contains("B-030/Full"));
        BehaviorScript::default().check_coverage(Vec::new()).unwrap();
    }

    #[test]
    fn malformed_rows_rejected() {
        let bad_key = r#"{"rows":[{"item":"a","condition":"*","key":"nope","value":1}]}"#;
        assert!(matches!(BehaviorScript::from_json_str(bad_key), Err(ScriptError::MalformedRow { index: 0, .. })));
        let out_of_range = r#"{"rows":[{"item":"a","condition":"*","key":"p_self","value":1.5}]}"#;
        assert!(BehaviorScript::from_json_str(out_of_range).is_err());
        let text_prob = r#"{"rows":[{"item":"a","condition":"*","key":"p_self","value":"high"}]}"#;
        assert!(BehaviorScript::from_json_str(text_prob).is_err());
        assert!(BehaviorScript::from_json_str("{\"rows\": 3}").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut s = BehaviorScript::default();
        s.insert("a", "*", Query::SelfConfidence, SignalValue::Number(0.25));
        s.insert("a", "Full", Query::SelfReportTags, SignalValue::Text("trap".into()));
        let back = BehaviorScript::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(back, s);
    }
}
