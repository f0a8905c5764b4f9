//! Metacognitive skill cards: schema, registry, trust, and lints.
//!
//! A card is the routing-plane view of a skill. The router only ever sees
//! card metadata; the skill body behind `body_ref` is fetched through a
//! [`BodySource`] and only once a probe escalates to a full load.

pub mod predicate;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use predicate::{eval_predicate, parse_predicate, Atom, ParseError, PredicateExpr};

/// Default minimum effective trust for a skill to be loadable.
pub const DEFAULT_TRUST_GATE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OffloadingType {
    Procedural,
    Epistemic,
    Evaluative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    FirstParty,
    VerifiedPublisher,
    CommunityUnverified,
    Unknown,
}

impl Provenance {
    /// Highest source trust a card of this provenance may declare.
    pub fn trust_ceiling(self) -> f64 {
        match self {
            Provenance::FirstParty => 0.95,
            Provenance::VerifiedPublisher => 0.80,
            Provenance::CommunityUnverified => 0.40,
            Provenance::Unknown => 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillCard {
    pub id: String,
    pub name: String,
    pub description: String,
    /// `None` when the card file carries an empty predicate; such a card never matches.
    pub apply_when: Option<PredicateExpr>,
    pub cheap_probe: PredicateExpr,
    pub offloading_type: OffloadingType,
    pub source_trust: f64,
    pub provenance: Provenance,
    pub stale: bool,
    pub body_ref: String,
    apply_when_text: String,
    cheap_probe_text: String,
}

impl SkillCard {
    /// Builds a card from predicate source text, as the loader does.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        apply_when: &str,
        cheap_probe: &str,
        offloading_type: OffloadingType,
        source_trust: f64,
        provenance: Provenance,
        stale: bool,
    ) -> Result<Self, CardError> {
        let id = id.into();
        let raw = RawCard {
            id: id.clone(),
            name: name.into(),
            description: String::new(),
            apply_when: apply_when.to_string(),
            cheap_probe: cheap_probe.to_string(),
            offloading_type,
            source_trust,
            provenance,
            stale,
            body_ref: format!("inline:{id}"),
        };
        raw.into_card(0)
    }

    pub fn with_body_ref(mut self, body_ref: impl Into<String>) -> Self {
        self.body_ref = body_ref.into();
        self
    }

    pub fn apply_when_text(&self) -> &str {
        &self.apply_when_text
    }

    pub fn cheap_probe_text(&self) -> &str {
        &self.cheap_probe_text
    }

    pub fn applies_to(&self, ctx: &crate::router::TaskContext) -> bool {
        self.apply_when.as_ref().is_some_and(|p| p.eval(ctx))
    }
}

/// Trust after staleness discount: stale cards keep half their declared trust.
pub fn effective_trust(card: &SkillCard) -> f64 {
    if card.stale {
        0.5 * card.source_trust
    } else {
        card.source_trust
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CardError {
    #[error("reading card file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("card file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("card file must be an object with a \"cards\" array")]
    NotACardFile,
    #[error("card #{index}: missing required field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("card #{index}: unknown field `{field}`")]
    UnknownField { index: usize, field: String },
    #[error("card #{index}: {message}")]
    InvalidField { index: usize, message: String },
    #[error("duplicate card id \"{0}\"")]
    DuplicateId(String),
    #[error("card \"{id}\": {field}: {source}")]
    Predicate {
        id: String,
        field: &'static str,
        #[source]
        source: ParseError,
    },
}

const CARD_FIELDS: [&str; 10] = [
    "id",
    "name",
    "description",
    "apply_when",
    "cheap_probe",
    "offloading_type",
    "source_trust",
    "provenance",
    "stale",
    "body_ref",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawCard {
    pub id: String,
    pub name: String,
    pub description: String,
    pub apply_when: String,
    pub cheap_probe: String,
    pub offloading_type: OffloadingType,
    pub source_trust: f64,
    pub provenance: Provenance,
    pub stale: bool,
    pub body_ref: String,
}

impl RawCard {
    fn into_card(self, index: usize) -> Result<SkillCard, CardError> {
        if !(0.0..=1.0).contains(&self.source_trust) {
            return Err(CardError::InvalidField {
                index,
                message: format!("source_trust {} outside [0, 1]", self.source_trust),
            });
        }
        let apply_when = if self.apply_when.trim().is_empty() {
            None
        } else {
            Some(parse_predicate(&self.apply_when).map_err(|source| CardError::Predicate {
                id: self.id.clone(),
                field: "apply_when",
                source,
            })?)
        };
        let cheap_probe =
            parse_predicate(&self.cheap_probe).map_err(|source| CardError::Predicate {
                id: self.id.clone(),
                field: "cheap_probe",
                source,
            })?;
        Ok(SkillCard {
            id: self.id,
            name: self.name,
            description: self.description,
            apply_when,
            cheap_probe,
            offloading_type: self.offloading_type,
            source_trust: self.source_trust,
            provenance: self.provenance,
            stale: self.stale,
            body_ref: self.body_ref,
            apply_when_text: self.apply_when,
            cheap_probe_text: self.cheap_probe,
        })
    }
}

impl From<&SkillCard> for RawCard {
    fn from(c: &SkillCard) -> Self {
        RawCard {
            id: c.id.clone(),
            name: c.name.clone(),
            description: c.description.clone(),
            apply_when: c.apply_when_text.clone(),
            cheap_probe: c.cheap_probe_text.clone(),
            offloading_type: c.offloading_type,
            source_trust: c.source_trust,
            provenance: c.provenance,
            stale: c.stale,
            body_ref: c.body_ref.clone(),
        }
    }
}

/// Where skill bodies come from. Called only for cards that reached `Loaded`.
pub trait BodySource: Send + Sync {
    fn fetch(&self, card: &SkillCard) -> io::Result<String>;
}

/// Resolves `inline:<text>` locators directly and anything else (optionally
/// prefixed `file:`) as a path relative to `base_dir`.
#[derive(Debug, Clone, Default)]
pub struct RefBodySource {
    pub base_dir: PathBuf,
}

impl BodySource for RefBodySource {
    fn fetch(&self, card: &SkillCard) -> io::Result<String> {
        if let Some(text) = card.body_ref.strip_prefix("inline:") {
            return Ok(text.to_string());
        }
        let rel = card.body_ref.strip_prefix("file:").unwrap_or(&card.body_ref);
        fs::read_to_string(self.base_dir.join(rel))
    }
}

/// Wraps another body source and counts every fetch.
pub struct CountingBodySource {
    inner: Arc<dyn BodySource>,
    reads: AtomicUsize,
}

impl CountingBodySource {
    pub fn new(inner: Arc<dyn BodySource>) -> Self {
        Self {
            inner,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }
}

impl BodySource for CountingBodySource {
    fn fetch(&self, card: &SkillCard) -> io::Result<String> {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.inner.fetch(card)
    }
}

/// Ordered, immutable set of cards with id lookup.
#[derive(Clone)]
pub struct CardRegistry {
    cards: Vec<SkillCard>,
    index: HashMap<String, usize>,
    bodies: Arc<dyn BodySource>,
}

impl fmt::Debug for CardRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CardRegistry")
            .field("cards", &self.cards)
            .finish_non_exhaustive()
    }
}

impl Default for CardRegistry {
    fn default() -> Self {
        Self {
            cards: Vec::new(),
            index: HashMap::new(),
            bodies: Arc::new(RefBodySource::default()),
        }
    }
}

impl CardRegistry {
    pub fn from_cards(cards: Vec<SkillCard>) -> Result<Self, CardError> {
        let mut index = HashMap::with_capacity(cards.len());
        for (i, c) in cards.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(CardError::DuplicateId(c.id.clone()));
            }
        }
        Ok(Self {
            cards,
            index,
            bodies: Arc::new(RefBodySource::default()),
        })
    }

    pub fn with_body_source(mut self, bodies: Arc<dyn BodySource>) -> Self {
        self.bodies = bodies;
        self
    }

    pub fn get(&self, id: &str) -> Option<&SkillCard> {
        self.index.get(id).map(|&i| &self.cards[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SkillCard> {
        self.cards.iter()
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn cards(&self) -> &[SkillCard] {
        &self.cards
    }

    /// Fetches a card's body. Callers must only do this after a `Loaded` transition.
    pub(crate) fn fetch_body(&self, card: &SkillCard) -> io::Result<String> {
        self.bodies.fetch(card)
    }

    /// Parses a card document. Nothing is returned unless every card is valid.
    pub fn from_json_str(text: &str) -> Result<Self, CardError> {
        let doc: Value = serde_json::from_str(text)?;
        let entries = doc
            .as_object()
            .filter(|o| o.len() == 1)
            .and_then(|o| o.get("cards"))
            .and_then(Value::as_array)
            .ok_or(CardError::NotACardFile)?;
        let mut cards = Vec::with_capacity(entries.len());
        for (index, entry) in entries.iter().enumerate() {
            let obj = entry.as_object().ok_or(CardError::InvalidField {
                index,
                message: "card must be a JSON object".into(),
            })?;
            if let Some(field) = obj.keys().find(|k| !CARD_FIELDS.contains(&k.as_str())) {
                return Err(CardError::UnknownField {
                    index,
                    field: field.clone(),
                });
            }
            if let Some(field) = CARD_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
                return Err(CardError::MissingField { index, field });
            }
            let raw: RawCard =
                serde_json::from_value(entry.clone()).map_err(|e| CardError::InvalidField {
                    index,
                    message: e.to_string(),
                })?;
            cards.push(raw.into_card(index)?);
        }
        Self::from_cards(cards)
    }

    pub fn to_json_string(&self) -> String {
        let raw: Vec<RawCard> = self.cards.iter().map(RawCard::from).collect();
        let mut s = serde_json::to_string_pretty(&serde_json::json!({ "cards": raw }))
            .expect("cards serialize");
        s.push('\n');
        s
    }
}

/// Loads a card file. Bodies resolve relative to the file's directory.
pub fn load_registry(path: impl AsRef<Path>) -> Result<CardRegistry, CardError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CardError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(CardRegistry::from_json_str(&text)?.with_body_source(Arc::new(RefBodySource { base_dir })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticCode {
    TrustCeiling,
    EmptyApplyWhen,
    RedundantProbe,
    StaleTrusted,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::TrustCeiling => "trust-ceiling",
            DiagnosticCode::EmptyApplyWhen => "empty-apply-when",
            DiagnosticCode::RedundantProbe => "redundant-probe",
            DiagnosticCode::StaleTrusted => "stale-trusted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub card_id: String,
    pub code: DiagnosticCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.card_id, self.code.as_str(), self.message)
    }
}

pub fn lint_cards(registry: &CardRegistry) -> Vec<Diagnostic> {
    lint_cards_with_gate(registry, DEFAULT_TRUST_GATE)
}

pub fn lint_cards_with_gate(registry: &CardRegistry, trust_gate: f64) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for card in registry.iter() {
        let mut push = |code, message: String| {
            out.push(Diagnostic {
                card_id: card.id.clone(),
                code,
                message,
            })
        };
        let ceiling = card.provenance.trust_ceiling();
        if card.source_trust > ceiling {
            push(
                DiagnosticCode::TrustCeiling,
                format!(
                    "trust exceeds provenance ceiling ({} > {} for {:?})",
                    card.source_trust, ceiling, card.provenance
                ),
            );
        }
        match &card.apply_when {
            None => push(
                DiagnosticCode::EmptyApplyWhen,
                "apply_when is empty; card can never match".into(),
            ),
            Some(apply_when) => {
                if card.apply_when_text.trim() == card.cheap_probe_text.trim()
                    || *apply_when == card.cheap_probe
                {
                    push(
                        DiagnosticCode::RedundantProbe,
                        "probe is redundant with apply_when".into(),
                    );
                }
            }
        }
        if card.stale && card.source_trust >= trust_gate {
            push(
                DiagnosticCode::StaleTrusted,
                format!(
                    "stale card declares trust {} at or above gate {}",
                    card.source_trust, trust_gate
                ),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card_json(id: &str, extra: &str) -> String {
        format!(
            r#"{{"id":"{id}","name":"n","description":"d","apply_when":"kind:x","cheap_probe":"mime:html",
            "offloading_type":"Procedural","source_trust":0.9,"provenance":"FirstParty","stale":false,
            "body_ref":"inline:body"{extra}}}"#
        )
    }

    #[test]
    fn loads_single_card() {
        let doc = format!(r#"{{"cards":[{}]}}"#, card_json("a", ""));
        let reg = CardRegistry::from_json_str(&doc).unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.get("a").unwrap().cheap_probe, PredicateExpr::mime("html"));
    }

    #[test]
    fn duplicate_id_rejected() {
        let doc = format!(
            r#"{{"cards":[{},{}]}}"#,
            card_json("date_time", ""),
            card_json("date_time", "")
        );
        let err = CardRegistry::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, CardError::DuplicateId(ref id) if id == "date_time"));
        assert!(err.to_string().contains("date_time"));
    }

    #[test]
    fn missing_and_unknown_fields() {
        let doc = format!(
            r#"{{"cards":[{},{}]}}"#,
            card_json("a", ""),
            card_json("b", "").replace(r#""stale":false,"#, "")
        );
        let err = CardRegistry::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, CardError::MissingField { index: 1, field: "stale" }));

        let doc = format!(r#"{{"cards":[{}]}}"#, card_json("a", r#","color":"red""#));
        let err = CardRegistry::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, CardError::UnknownField { index: 0, .. }));
    }

    #[test]
    fn predicate_error_names_card() {
        let doc = format!(
            r#"{{"cards":[{}]}}"#,
            card_json("bad", "").replace("mime:html", "mime:")
        );
        let err = CardRegistry::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, CardError::Predicate { ref id, field: "cheap_probe", .. } if id == "bad"));
    }

    #[test]
    fn trust_out_of_range_rejected() {
        let doc = format!(
            r#"{{"cards":[{}]}}"#,
            card_json("a", "").replace("0.9", "1.2")
        );
        assert!(matches!(
            CardRegistry::from_json_str(&doc).unwrap_err(),
            CardError::InvalidField { index: 0, .. }
        ));
    }

    #[test]
    fn effective_trust_rule() {
        let mk = |t, stale| {
            SkillCard::new("c", "c", "kind:x", "kind:y", OffloadingType::Procedural, t, Provenance::FirstParty, stale)
                .unwrap()
        };
        assert_eq!(effective_trust(&mk(0.8, false)), 0.8);
        assert_eq!(effective_trust(&mk(0.8, true)), 0.4);
        assert_eq!(effective_trust(&mk(0.0, true)), 0.0);
    }

    #[test]
    fn lint_findings() {
        let unknown = SkillCard::new(
            "u", "u", "kind:x", "kind:y", OffloadingType::Procedural, 0.9, Provenance::Unknown, false,
        )
        .unwrap();
        let good = SkillCard::new(
            "g", "g", "kind:x", "mime:html", OffloadingType::Procedural, 0.9, Provenance::FirstParty, false,
        )
        .unwrap();
        let redundant = SkillCard::new(
            "r", "r", "kind:x", "kind:x", OffloadingType::Procedural, 0.5, Provenance::FirstParty, false,
        )
        .unwrap();
        let stale = SkillCard::new(
            "s", "s", "kind:x", "kind:z", OffloadingType::Procedural, 0.8, Provenance::VerifiedPublisher, true,
        )
        .unwrap();
        let empty = SkillCard::new(
            "e", "e", "  ", "kind:z", OffloadingType::Procedural, 0.5, Provenance::FirstParty, false,
        )
        .unwrap();

        let reg = CardRegistry::from_cards(vec![good.clone()]).unwrap();
        assert!(lint_cards(&reg).is_empty());

        let reg = CardRegistry::from_cards(vec![unknown]).unwrap();
        let d = lint_cards(&reg);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("trust exceeds provenance ceiling"));
        assert!(d[0].to_string().starts_with("u:trust-ceiling:"));

        let reg = CardRegistry::from_cards(vec![redundant, stale, empty]).unwrap();
        let codes: Vec<_> = lint_cards(&reg).iter().map(|d| d.code).collect();
        assert_eq!(
            codes,
            vec![
                DiagnosticCode::RedundantProbe,
                DiagnosticCode::StaleTrusted,
                DiagnosticCode::EmptyApplyWhen
            ]
        );
    }

    #[test]
    fn counting_body_source_counts() {
        let card = SkillCard::new(
            "c", "c", "kind:x", "kind:y", OffloadingType::Procedural, 0.9, Provenance::FirstParty, false,
        )
        .unwrap()
        .with_body_ref("inline:hello");
        let counter = Arc::new(CountingBodySource::new(Arc::new(RefBodySource::default())));
        let reg = CardRegistry::from_cards(vec![card.clone()])
            .unwrap()
            .with_body_source(counter.clone());
        assert_eq!(counter.reads(), 0);
        assert_eq!(reg.fetch_body(&card).unwrap(), "hello");
        assert_eq!(counter.reads(), 1);
    }
}
