//! The model boundary.
//!
//! Every signal the controller needs from a model is a [`Query`] answered by
//! a [`ModelBackend`]. Three backends ship: [`ScriptedBackend`] reads a fixed
//! behavior script, [`CachedBackend`] records or replays another backend, and
//! [`RemoteBackend`] asks an HTTP chat-completions endpoint.

mod cached;
mod remote;
mod scripted;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::router::{TaskContext, VariantKind};

pub use cached::{record_cache, replay_cache, CacheMode, CachedBackend};
pub use remote::{
    backoff_schedule, parse_answer, parse_confidence, parse_tags, remote_backend, RemoteBackend,
    RemoteConfig,
};
pub use scripted::{
    load_script, BehaviorScript, ScriptError, ScriptRow, ScriptedBackend, ANY_CONDITION,
    DEFAULT_ANSWER_KEY,
};

/// Identifies who is asking: the benchmark item and the condition under test.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a> {
    pub item_id: &'a str,
    pub condition: &'a str,
    pub task: &'a TaskContext,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Query {
    /// Parametric certainty before any offload.
    SelfConfidence,
    /// Self-reported certainty after an offload returned.
    PostOffloadConfidence,
    SourceConfidence(String),
    /// Delayed self-confidence measured by the cheap probe for one card.
    Probe(String),
    Answer(VariantKind),
    SelfReportTags,
    /// Confidence in the first-pass choice after one re-consideration pass.
    Reflection,
}

impl Query {
    pub fn key(&self) -> String {
        match self {
            Query::SelfConfidence => "p_self".into(),
            Query::PostOffloadConfidence => "p_self_post".into(),
            Query::SourceConfidence(ch) => format!("source:{ch}"),
            Query::Probe(card) => format!("probe:{card}"),
            Query::Answer(v) => format!("answer:{}", v.as_str().to_ascii_lowercase()),
            Query::SelfReportTags => "tags".into(),
            Query::Reflection => "reflect".into(),
        }
    }

    pub fn parse_key(key: &str) -> Option<Query> {
        Some(match key {
            "p_self" => Query::SelfConfidence,
            "p_self_post" => Query::PostOffloadConfidence,
            "tags" => Query::SelfReportTags,
            "reflect" => Query::Reflection,
            _ => {
                let (head, rest) = key.split_once(':')?;
                match head {
                    "source" if !rest.is_empty() => Query::SourceConfidence(rest.into()),
                    "probe" if !rest.is_empty() => Query::Probe(rest.into()),
                    "answer" => Query::Answer(
                        VariantKind::ALL
                            .into_iter()
                            .find(|v| v.as_str().eq_ignore_ascii_case(rest))?,
                    ),
                    _ => return None,
                }
            }
        })
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend has no signal for {0}")]
    Missing(String),
    #[error("signal {key} is malformed: {message}")]
    Malformed { key: String, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("replay miss for {0}")]
    ReplayMiss(String),
    #[error("cache write failed: {0}")]
    CacheWrite(String),
}

fn unit_number(key: &Query, v: SignalValue) -> Result<f64, BackendError> {
    match v {
        SignalValue::Number(n) if (0.0..=1.0).contains(&n) => Ok(n),
        other => Err(BackendError::Malformed {
            key: key.key(),
            message: format!("expected a number in [0, 1], got {other:?}"),
        }),
    }
}

pub trait ModelBackend: Send + Sync {
    fn query(&self, ctx: &QueryContext<'_>, query: &Query) -> Result<SignalValue, BackendError>;

    fn self_confidence(&self, ctx: &QueryContext<'_>) -> Result<f64, BackendError> {
        let q = Query::SelfConfidence;
        unit_number(&q, self.query(ctx, &q)?)
    }

    fn post_offload_confidence(&self, ctx: &QueryContext<'_>) -> Result<f64, BackendError> {
        let q = Query::PostOffloadConfidence;
        unit_number(&q, self.query(ctx, &q)?)
    }

    fn source_confidence(&self, ctx: &QueryContext<'_>, channel: &str) -> Result<f64, BackendError> {
        let q = Query::SourceConfidence(channel.to_string());
        unit_number(&q, self.query(ctx, &q)?)
    }

    fn probe_signal(&self, ctx: &QueryContext<'_>, card_id: &str) -> Result<f64, BackendError> {
        let q = Query::Probe(card_id.to_string());
        unit_number(&q, self.query(ctx, &q)?)
    }

    fn reflection(&self, ctx: &QueryContext<'_>) -> Result<f64, BackendError> {
        let q = Query::Reflection;
        unit_number(&q, self.query(ctx, &q)?)
    }

    fn answer(&self, ctx: &QueryContext<'_>, variant: VariantKind) -> Result<String, BackendError> {
        match self.query(ctx, &Query::Answer(variant))? {
            SignalValue::Text(s) => Ok(s),
            SignalValue::Number(n) => Ok(n.to_string()),
        }
    }

    fn self_report_tags(&self, ctx: &QueryContext<'_>) -> Result<BTreeSet<String>, BackendError> {
        match self.query(ctx, &Query::SelfReportTags)? {
            SignalValue::Text(s) => Ok(split_tags(&s)),
            other => Err(BackendError::Malformed {
                key: Query::SelfReportTags.key(),
                message: format!("expected a comma-separated string, got {other:?}"),
            }),
        }
    }
}

pub(crate) fn split_tags(s: &str) -> BTreeSet<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl<T: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<T> {
    fn query(&self, ctx: &QueryContext<'_>, query: &Query) -> Result<SignalValue, BackendError> {
        (**self).query(ctx, query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_keys_round_trip() {
        for q in [
            Query::SelfConfidence,
            Query::PostOffloadConfidence,
            Query::SourceConfidence("__tool__".into()),
            Query::Probe("date_time".into()),
            Query::Answer(VariantKind::CallTool),
            Query::SelfReportTags,
            Query::Reflection,
        ] {
            assert_eq!(Query::parse_key(&q.key()), Some(q));
        }
        assert_eq!(Query::parse_key("answer:calltool"), Some(Query::Answer(VariantKind::CallTool)));
        assert_eq!(Query::parse_key("source:"), None);
        assert_eq!(Query::parse_key("bogus"), None);
    }

    #[test]
    fn tags_split() {
        let t = split_tags(" trap, arithmetic ,,");
        assert_eq!(t.into_iter().collect::<Vec<_>>(), vec!["arithmetic", "trap"]);
    }
}
