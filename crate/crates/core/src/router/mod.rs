//! Action scoring and selection.
//!
//! Two scorers live here: a relevance-only baseline that takes the argmax of
//! relevance × direct utility, and the dual-confidence scorer that weighs
//! parametric certainty against trust-weighted source certainty:
//!
//! ```text
//! direct  actions: alpha * p_self * U_direct - lambda * cost
//! offload actions: (1 - alpha) * V_a * p_source|a * U_offload - lambda * cost
//! ```
//!
//! `V_a` is the card's effective trust for skill loads and 1 for the
//! built-in tool and verifier channels.

pub mod trajectory;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cards::{effective_trust, CardRegistry, SkillCard, DEFAULT_TRUST_GATE};
use crate::confidence::{ConfidenceVector, DecontaminationConfig, TOOL_CHANNEL, VERIFY_CHANNEL};
use crate::probe::ProbeState;

pub use trajectory::{run_trajectory, AnswerClass, Outcome, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub mime_tag: String,
    pub bytes_len: u64,
}

/// The task being routed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskContext {
    pub prompt: String,
    #[serde(default)]
    pub kind_tags: BTreeSet<String>,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    /// Set when an offload begins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_offload_p_self: Option<f64>,
}

impl TaskContext {
    pub fn new(prompt: impl Into<String>) -> Result<Self, RoutingError> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(RoutingError::EmptyPrompt);
        }
        Ok(Self {
            prompt,
            ..Default::default()
        })
    }
}

/// Action kinds in tie-break order: on equal scores the earlier kind wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantKind {
    Stop,
    Direct,
    Verify,
    CallTool,
    LoadSkill,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Stop,
        VariantKind::Direct,
        VariantKind::Verify,
        VariantKind::CallTool,
        VariantKind::LoadSkill,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Stop => "Stop",
            VariantKind::Direct => "Direct",
            VariantKind::Verify => "Verify",
            VariantKind::CallTool => "CallTool",
            VariantKind::LoadSkill => "LoadSkill",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionVariant {
    Direct,
    CallTool,
    LoadSkill(String),
    Verify,
    Stop,
}

impl ActionVariant {
    pub fn kind(&self) -> VariantKind {
        match self {
            ActionVariant::Direct => VariantKind::Direct,
            ActionVariant::CallTool => VariantKind::CallTool,
            ActionVariant::LoadSkill(_) => VariantKind::LoadSkill,
            ActionVariant::Verify => VariantKind::Verify,
            ActionVariant::Stop => VariantKind::Stop,
        }
    }

    pub fn card_id(&self) -> Option<&str> {
        match self {
            ActionVariant::LoadSkill(id) => Some(id),
            _ => None,
        }
    }

    /// Stable label used as the score-map key.
    pub fn label(&self) -> String {
        match self {
            ActionVariant::LoadSkill(id) => format!("LoadSkill({id})"),
            other => other.kind().as_str().to_string(),
        }
    }

    fn tie_key(&self) -> (VariantKind, &str) {
        (self.kind(), self.card_id().unwrap_or(""))
    }
}

impl fmt::Display for ActionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub variant: ActionVariant,
    pub utility_direct: f64,
    pub utility_offload: f64,
    pub cost: f64,
}

impl Action {
    /// Unit utilities, cost from the table.
    pub fn new(variant: ActionVariant, costs: &CostTable) -> Self {
        let cost = costs.cost(variant.kind());
        Self {
            variant,
            utility_direct: 1.0,
            utility_offload: 1.0,
            cost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub direct: f64,
    pub stop: f64,
    pub verify: f64,
    pub call_tool: f64,
    pub load_skill: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            direct: 0.0,
            stop: 0.0,
            verify: 0.3,
            call_tool: 0.3,
            load_skill: 0.5,
        }
    }
}

impl CostTable {
    pub fn cost(&self, kind: VariantKind) -> f64 {
        match kind {
            VariantKind::Direct => self.direct,
            VariantKind::Stop => self.stop,
            VariantKind::Verify => self.verify,
            VariantKind::CallTool => self.call_tool,
            VariantKind::LoadSkill => self.load_skill,
        }
    }
}

/// Switches for the four controller mechanisms; all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mechanisms {
    pub probe: bool,
    pub vigilance: bool,
    pub decontam: bool,
    pub dual_conf: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Self {
            probe: true,
            vigilance: true,
            decontam: true,
            dual_conf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub trust_gate: f64,
    pub self_low: f64,
    pub trap_verify: bool,
    pub cost_table: CostTable,
    pub decontam: DecontaminationConfig,
    pub mechanisms: Mechanisms,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            lambda: 0.1,
            trust_gate: DEFAULT_TRUST_GATE,
            self_low: 0.45,
            trap_verify: true,
            cost_table: CostTable::default(),
            decontam: DecontaminationConfig::default(),
            mechanisms: Mechanisms::default(),
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<(), RoutingError> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(RoutingError::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("trust_gate", self.trust_gate)?;
        unit("trust_override_threshold", self.decontam.trust_override_threshold)?;
        if !(self.lambda >= 0.0) {
            return Err(RoutingError::InvalidConfig(format!("lambda = {} is negative", self.lambda)));
        }
        for kind in VariantKind::ALL {
            let c = self.cost_table.cost(kind);
            if !(c >= 0.0) {
                return Err(RoutingError::InvalidConfig(format!("cost for {kind} = {c} is negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: Action,
    /// Score per candidate label; gated candidates are absent.
    pub scores: BTreeMap<String, f64>,
    pub gated_cards: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe_trace: Vec<ProbeState>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutingError {
    #[error("no candidate actions")]
    NoCandidates,
    #[error("task prompt is empty")]
    EmptyPrompt,
    #[error("no source confidence for channel \"{0}\"")]
    MissingSourceConfidence(String),
    #[error("LoadSkill({0}) scored without its card")]
    MissingCard(String),
    #[error("card \"{0}\" is not in the registry")]
    UnknownCard(String),
    #[error("no relevance for candidate {0}")]
    MissingRelevance(String),
    #[error("invalid routing config: {0}")]
    InvalidConfig(String),
}

fn pick_best(scored: Vec<(Action, f64)>) -> Option<(Action, f64)> {
    scored.into_iter().reduce(|best, cand| {
        match cand.1.partial_cmp(&best.1).unwrap_or(Ordering::Equal) {
            Ordering::Greater => cand,
            Ordering::Less => best,
            Ordering::Equal => {
                if cand.0.variant.tie_key() < best.0.variant.tie_key() {
                    cand
                } else {
                    best
                }
            }
        }
    })
}

/// Relevance-only routing: argmax of relevance × direct utility, nothing else.
/// `relevance` is keyed by candidate label.
pub fn score_baseline(
    candidates: &[Action],
    relevance: &BTreeMap<String, f64>,
) -> Result<Decision, RoutingError> {
    if candidates.is_empty() {
        return Err(RoutingError::NoCandidates);
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for a in candidates {
        let label = a.variant.label();
        let r = *relevance
            .get(&label)
            .ok_or_else(|| RoutingError::MissingRelevance(label.clone()))?;
        scored.push((a.clone(), r * a.utility_direct));
    }
    let scores = scored.iter().map(|(a, s)| (a.variant.label(), *s)).collect();
    let (chosen, _) = pick_best(scored).expect("non-empty");
    Ok(Decision {
        chosen,
        scores,
        gated_cards: Vec::new(),
        probe_trace: Vec::new(),
    })
}

/// Dual-confidence score of one action.
pub fn score_action(
    action: &Action,
    cv: &ConfidenceVector,
    cfg: &RoutingConfig,
    card: Option<&SkillCard>,
) -> Result<f64, RoutingError> {
    let penalty = cfg.lambda * action.cost;
    let offload = |vigilance: f64, channel: &str| -> Result<f64, RoutingError> {
        let p_source = cv
            .source(channel)
            .ok_or_else(|| RoutingError::MissingSourceConfidence(channel.to_string()))?;
        Ok((1.0 - cfg.alpha) * vigilance * p_source * action.utility_offload - penalty)
    };
    match &action.variant {
        ActionVariant::Direct | ActionVariant::Stop => {
            Ok(cfg.alpha * cv.p_self * action.utility_direct - penalty)
        }
        ActionVariant::CallTool => offload(1.0, TOOL_CHANNEL),
        ActionVariant::Verify => offload(1.0, VERIFY_CHANNEL),
        ActionVariant::LoadSkill(id) => {
            let card = card
                .filter(|c| &c.id == id)
                .ok_or_else(|| RoutingError::MissingCard(id.clone()))?;
            let vigilance = if cfg.mechanisms.vigilance {
                effective_trust(card)
            } else {
                1.0
            };
            offload(vigilance, id)
        }
    }
}

/// Gate, score, and pick.
///
/// With vigilance on, every skill whose effective trust is below the gate is
/// removed before scoring. If nothing survives, `Direct` and `Stop` are
/// scored instead.
pub fn select_action(
    candidates: &[Action],
    cv: &ConfidenceVector,
    cfg: &RoutingConfig,
    registry: &CardRegistry,
) -> Result<Decision, RoutingError> {
    if candidates.is_empty() {
        return Err(RoutingError::NoCandidates);
    }
    let mut gated_cards = Vec::new();
    let mut survivors = Vec::with_capacity(candidates.len());
    for a in candidates {
        let card = match a.variant.card_id() {
            Some(id) => Some(
                registry
                    .get(id)
                    .ok_or_else(|| RoutingError::UnknownCard(id.to_string()))?,
            ),
            None => None,
        };
        if let Some(card) = card {
            if cfg.mechanisms.vigilance && effective_trust(card) < cfg.trust_gate {
                gated_cards.push(card.id.clone());
                continue;
            }
        }
        survivors.push((a, card));
    }
    let fallback;
    if survivors.is_empty() {
        fallback = [
            Action::new(ActionVariant::Direct, &cfg.cost_table),
            Action::new(ActionVariant::Stop, &cfg.cost_table),
        ];
        survivors = fallback.iter().map(|a| (a, None)).collect();
    }
    let mut scored = Vec::with_capacity(survivors.len());
    for (a, card) in survivors {
        scored.push((a.clone(), score_action(a, cv, cfg, card)?));
    }
    let scores = scored.iter().map(|(a, s)| (a.variant.label(), *s)).collect();
    let (chosen, _) = pick_best(scored).expect("non-empty");
    gated_cards.sort();
    gated_cards.dedup();
    Ok(Decision {
        chosen,
        scores,
        gated_cards,
        probe_trace: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffloadClass {
    ProceduralOffload,
    EpistemicOffload,
    EvaluativeOffload,
    NotOffload,
}

pub fn triage_offload(action: &Action) -> OffloadClass {
    match action.variant {
        ActionVariant::LoadSkill(_) => OffloadClass::ProceduralOffload,
        ActionVariant::CallTool => OffloadClass::EpistemicOffload,
        ActionVariant::Verify => OffloadClass::EvaluativeOffload,
        ActionVariant::Direct | ActionVariant::Stop => OffloadClass::NotOffload,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cards::{OffloadingType, Provenance};

    fn card(id: &str, trust: f64) -> SkillCard {
        SkillCard::new(id, id, "kind:x", "kind:y", OffloadingType::Procedural, trust, Provenance::Unknown, false)
            .unwrap()
    }

    fn act(v: ActionVariant, cost: f64) -> Action {
        Action {
            variant: v,
            utility_direct: 1.0,
            utility_offload: 1.0,
            cost,
        }
    }

    #[test]
    fn baseline_singleton() {
        let rel = BTreeMap::from([("Direct".to_string(), 1.0)]);
        let d = score_baseline(&[act(ActionVariant::Direct, 0.0)], &rel).unwrap();
        assert_eq!(d.chosen.variant, ActionVariant::Direct);
    }

    #[test]
    fn baseline_prefers_relevant_skill_even_if_malicious() {
        let rel = BTreeMap::from([
            ("Direct".to_string(), 0.5),
            ("LoadSkill(date_time)".to_string(), 0.9),
        ]);
        let cands = [
            act(ActionVariant::Direct, 0.0),
            act(ActionVariant::LoadSkill("date_time".into()), 0.5),
        ];
        let d = score_baseline(&cands, &rel).unwrap();
        assert_eq!(d.chosen.variant, ActionVariant::LoadSkill("date_time".into()));
    }

    #[test]
    fn baseline_tie_uses_fixed_order() {
        let rel = BTreeMap::from([("Direct".to_string(), 0.5), ("CallTool".to_string(), 0.5)]);
        for cands in [
            [act(ActionVariant::CallTool, 0.3), act(ActionVariant::Direct, 0.0)],
            [act(ActionVariant::Direct, 0.0), act(ActionVariant::CallTool, 0.3)],
        ] {
            assert_eq!(score_baseline(&cands, &rel).unwrap().chosen.variant, ActionVariant::Direct);
        }
        assert_eq!(score_baseline(&[], &rel).unwrap_err(), RoutingError::NoCandidates);
        assert!(matches!(
            score_baseline(&[act(ActionVariant::Stop, 0.0)], &rel),
            Err(RoutingError::MissingRelevance(_))
        ));
    }

    #[test]
    fn score_examples() {
        let cfg = RoutingConfig::default();
        let cv = ConfidenceVector::new(0.9).unwrap();
        let s = score_action(&act(ActionVariant::Direct, 0.0), &cv, &cfg, None).unwrap();
        assert!((s - 0.54).abs() < 1e-12);

        let c = card("c", 0.5);
        let cv = ConfidenceVector::new(0.9).unwrap().with_source("c", 0.8).unwrap();
        let s = score_action(&act(ActionVariant::LoadSkill("c".into()), 0.3), &cv, &cfg, Some(&c)).unwrap();
        assert!((s - 0.13).abs() < 1e-12);

        let z = card("c", 0.0);
        let s = score_action(&act(ActionVariant::LoadSkill("c".into()), 0.3), &cv, &cfg, Some(&z)).unwrap();
        assert!((s - (-0.03)).abs() < 1e-12);
    }

    #[test]
    fn score_errors() {
        let cfg = RoutingConfig::default();
        let cv = ConfidenceVector::new(0.9).unwrap();
        assert_eq!(
            score_action(&act(ActionVariant::CallTool, 0.3), &cv, &cfg, None),
            Err(RoutingError::MissingSourceConfidence(TOOL_CHANNEL.into()))
        );
        assert_eq!(
            score_action(&act(ActionVariant::LoadSkill("c".into()), 0.5), &cv, &cfg, None),
            Err(RoutingError::MissingCard("c".into()))
        );
    }

    #[test]
    fn gated_only_candidate_falls_back() {
        let cfg = RoutingConfig::default();
        let reg = CardRegistry::from_cards(vec![card("bad", 0.2)]).unwrap();
        let cv = ConfidenceVector::new(0.9).unwrap().with_source("bad", 0.99).unwrap();
        let d = select_action(&[act(ActionVariant::LoadSkill("bad".into()), 0.5)], &cv, &cfg, &reg).unwrap();
        assert_eq!(d.gated_cards, vec!["bad".to_string()]);
        // Direct and Stop tie at 0.54; Stop precedes Direct in the tie order.
        assert_eq!(d.chosen.variant, ActionVariant::Stop);
        assert!((d.scores["Direct"] - 0.54).abs() < 1e-12);
        assert!((d.scores["Stop"] - 0.54).abs() < 1e-12);
    }

    #[test]
    fn vigilance_off_loads_untrusted_skill() {
        let mut cfg = RoutingConfig::default();
        let reg = CardRegistry::from_cards(vec![card("bad", 0.2)]).unwrap();
        let cv = ConfidenceVector::new(0.2).unwrap().with_source("bad", 0.95).unwrap();
        let cands = [act(ActionVariant::Stop, 0.0), act(ActionVariant::LoadSkill("bad".into()), 0.5)];
        assert_eq!(select_action(&cands, &cv, &cfg, &reg).unwrap().chosen.variant, ActionVariant::Stop);
        cfg.mechanisms.vigilance = false;
        let d = select_action(&cands, &cv, &cfg, &reg).unwrap();
        assert_eq!(d.chosen.variant, ActionVariant::LoadSkill("bad".into()));
        assert!(d.gated_cards.is_empty());
    }

    #[test]
    fn unknown_card_is_an_error() {
        let reg = CardRegistry::default();
        let cv = ConfidenceVector::new(0.5).unwrap();
        assert_eq!(
            select_action(&[act(ActionVariant::LoadSkill("x".into()), 0.5)], &cv, &RoutingConfig::default(), &reg),
            Err(RoutingError::UnknownCard("x".into()))
        );
    }

    #[test]
    fn triage_classes() {
        assert_eq!(triage_offload(&act(ActionVariant::LoadSkill("a".into()), 0.5)), OffloadClass::ProceduralOffload);
        assert_eq!(triage_offload(&act(ActionVariant::CallTool, 0.3)), OffloadClass::EpistemicOffload);
        assert_eq!(triage_offload(&act(ActionVariant::Verify, 0.3)), OffloadClass::EvaluativeOffload);
        assert_eq!(triage_offload(&act(ActionVariant::Stop, 0.0)), OffloadClass::NotOffload);
        assert_eq!(triage_offload(&act(ActionVariant::Direct, 0.0)), OffloadClass::NotOffload);
    }

    #[test]
    fn config_validation() {
        assert!(RoutingConfig::default().validate().is_ok());
        let bad = RoutingConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RoutingConfig { lambda: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
