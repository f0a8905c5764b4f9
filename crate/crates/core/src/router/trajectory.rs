//! Per-task controller: one benchmark item under one condition.
//!
//! Controller conditions build the full candidate set, probe matching skill
//! cards (or gate them first when they cannot pass the trust gate), score
//! with the dual-confidence rule, and after a tool call or skill load
//! decontaminate the post-offload self-confidence before a second
//! `{Stop, Verify}` decision. Baseline conditions route on relevance alone.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

use super::{
    score_baseline, select_action, Action, ActionVariant, Decision, Mechanisms, RoutingConfig,
    RoutingError, TaskContext, VariantKind,
};
use crate::backend::{BackendError, ModelBackend, QueryContext};
use crate::bench::{BenchmarkItem, Condition, GoldAction, Strategy};
use crate::cards::{effective_trust, CardRegistry, SkillCard};
use crate::confidence::{
    conflict_differential, decontaminate, ConfidenceVector, ProbabilityError, TOOL_CHANNEL,
    VERIFY_CHANNEL,
};
use crate::probe::{resolve, run_probe, ProbeError, ProbeState};

/// Self-report tag that marks a known cognitive trap.
pub const TRAP_TAG: &str = "trap";

/// Relevance the naive router assigns: matched skills look most relevant,
/// then answering directly; tools, verification and stopping carry little.
pub const RELEVANCE_MATCHED_SKILL: f64 = 0.9;
pub const RELEVANCE_DIRECT: f64 = 0.5;
pub const RELEVANCE_CALL_TOOL: f64 = 0.2;
pub const RELEVANCE_VERIFY: f64 = 0.2;
pub const RELEVANCE_STOP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnswerClass {
    Answer,
    ToolCall,
    SkillLoaded,
    Verified,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub item_id: String,
    pub condition: Condition,
    pub decisions: Vec<Decision>,
    pub p_self_pre: f64,
    pub p_self_post_decontaminated: f64,
    pub final_answer_class: AnswerClass,
    pub outcome: Outcome,
    pub terminal_confidence: f64,
    /// Skill loaded by the primary decision, if any.
    #[serde(default)]
    pub implicated_card: Option<String>,
    pub total_cost: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl TrajectoryRecord {
    /// Number of `Loaded` probe states across all decisions.
    pub fn loaded_count(&self) -> usize {
        self.decisions
            .iter()
            .flat_map(|d| &d.probe_trace)
            .filter(|s| s.is_loaded())
            .count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("item {item}: card \"{card}\" is not in the registry")]
    UnknownCard { item: String, card: String },
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Probe(ProbeError),
    #[error("reading body of card \"{card}\": {source}")]
    Body {
        card: String,
        #[source]
        source: std::io::Error,
    },
}

enum Abort {
    Signal(String),
    Hard(TrajectoryError),
}

impl From<BackendError> for Abort {
    fn from(e: BackendError) -> Self {
        Abort::Signal(e.to_string())
    }
}

impl From<ProbabilityError> for Abort {
    fn from(e: ProbabilityError) -> Self {
        Abort::Signal(e.to_string())
    }
}

impl From<RoutingError> for Abort {
    fn from(e: RoutingError) -> Self {
        Abort::Hard(e.into())
    }
}

impl From<ProbeError> for Abort {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Signal { .. } => Abort::Signal(e.to_string()),
            e => Abort::Hard(TrajectoryError::Probe(e)),
        }
    }
}

struct Finish {
    /// Variant judged against the gold action.
    primary: ActionVariant,
    /// Channel whose answer is committed.
    answer_from: VariantKind,
    class: AnswerClass,
    p_post: f64,
    terminal: f64,
}

struct Controller<'a> {
    item: &'a BenchmarkItem,
    task: TaskContext,
    registry: &'a CardRegistry,
    backend: &'a dyn ModelBackend,
    cfg: RoutingConfig,
    condition: Condition,
    decisions: Vec<Decision>,
    cost: f64,
    p_self: Option<f64>,
}

fn class_of(kind: VariantKind) -> AnswerClass {
    match kind {
        VariantKind::Direct => AnswerClass::Answer,
        VariantKind::Stop => AnswerClass::Stopped,
        VariantKind::CallTool => AnswerClass::ToolCall,
        VariantKind::LoadSkill => AnswerClass::SkillLoaded,
        VariantKind::Verify => AnswerClass::Verified,
    }
}

/// Verifier source confidence: the scripted value on self-reported traps,
/// otherwise capped by the model's residual self-doubt.
pub fn verify_confidence(scripted: f64, p_self: f64, tags: &BTreeSet<String>, cfg: &RoutingConfig) -> f64 {
    if cfg.trap_verify && tags.contains(TRAP_TAG) {
        scripted
    } else {
        scripted.min(1.0 - p_self)
    }
}

/// Scalar-confidence ablation: every non-verifier source collapses to 1 − p_self.
fn collapse_to_scalar(cv: &mut ConfidenceVector) {
    let scalar = 1.0 - cv.p_self;
    for (id, p) in cv.source_confidences.iter_mut() {
        if id != VERIFY_CHANNEL {
            *p = scalar;
        }
    }
}

fn base_candidates(cfg: &RoutingConfig) -> Vec<Action> {
    [
        ActionVariant::Stop,
        ActionVariant::Direct,
        ActionVariant::Verify,
        ActionVariant::CallTool,
    ]
    .into_iter()
    .map(|v| Action::new(v, &cfg.cost_table))
    .collect()
}

pub fn baseline_relevance(candidates: &[Action]) -> BTreeMap<String, f64> {
    candidates
        .iter()
        .map(|a| {
            let r = match a.variant.kind() {
                VariantKind::LoadSkill => RELEVANCE_MATCHED_SKILL,
                VariantKind::Direct => RELEVANCE_DIRECT,
                VariantKind::CallTool => RELEVANCE_CALL_TOOL,
                VariantKind::Verify => RELEVANCE_VERIFY,
                VariantKind::Stop => RELEVANCE_STOP,
            };
            (a.variant.label(), r)
        })
        .collect()
}

fn normalize_answer(s: &str) -> String {
    s.trim().to_lowercase()
}

impl<'a> Controller<'a> {
    fn query(&self) -> QueryContext<'_> {
        QueryContext {
            item_id: &self.item.id,
            condition: self.condition.as_str(),
            task: &self.task,
        }
    }

    fn visible_cards(&self) -> Result<Vec<&'a SkillCard>, Abort> {
        self.item
            .injected_card_ids
            .iter()
            .map(|id| {
                self.registry.get(id).ok_or_else(|| {
                    Abort::Hard(TrajectoryError::UnknownCard {
                        item: self.item.id.clone(),
                        card: id.clone(),
                    })
                })
            })
            .collect()
    }

    fn load_body(&self, card: &SkillCard) -> Result<(), Abort> {
        self.registry.fetch_body(card).map(drop).map_err(|source| {
            Abort::Hard(TrajectoryError::Body {
                card: card.id.clone(),
                source,
            })
        })
    }

    fn push(&mut self, d: Decision) {
        self.cost += d.chosen.cost;
        self.decisions.push(d);
    }

    fn run_baseline(&mut self, reflect: bool) -> Result<Finish, Abort> {
        let p_self = self.backend.self_confidence(&self.query())?;
        self.p_self = Some(p_self);
        let mut candidates = base_candidates(&self.cfg);
        let mut matched = Vec::new();
        for card in self.visible_cards()? {
            if card.applies_to(&self.task) {
                candidates.push(Action::new(ActionVariant::LoadSkill(card.id.clone()), &self.cfg.cost_table));
                matched.push(card);
            }
        }
        let relevance = baseline_relevance(&candidates);
        let first = score_baseline(&candidates, &relevance)?;
        let mut chosen = first.chosen.variant.clone();
        self.decisions.push(first);
        if reflect {
            let confidence = self.backend.reflection(&self.query())?;
            let mut revised = relevance.clone();
            if confidence < self.cfg.self_low {
                if let Some(r) = revised.get_mut(&chosen.label()) {
                    *r *= confidence;
                }
            }
            let second = score_baseline(&candidates, &revised)?;
            chosen = second.chosen.variant.clone();
            self.decisions.push(second);
        }
        self.cost += self.decisions.last().map_or(0.0, |d| d.chosen.cost);
        if let ActionVariant::LoadSkill(id) = &chosen {
            let card = *matched.iter().find(|c| &c.id == id).expect("chosen among matched");
            let state = ProbeState::begin(card).load_without_probe()?;
            if let Some(last) = self.decisions.last_mut() {
                last.probe_trace.push(state);
            }
            self.load_body(card)?;
        }
        let kind = chosen.kind();
        let p_post = match kind {
            VariantKind::Stop | VariantKind::Direct => p_self,
            _ => self.backend.post_offload_confidence(&self.query())?,
        };
        Ok(Finish {
            primary: chosen,
            answer_from: kind,
            class: class_of(kind),
            p_post,
            terminal: p_post,
        })
    }

    fn run_controller(&mut self, mech: Mechanisms) -> Result<Finish, Abort> {
        let cfg = self.cfg.clone();
        let p_self = self.backend.self_confidence(&self.query())?;
        self.p_self = Some(p_self);
        let tags = self.backend.self_report_tags(&self.query())?;

        let mut candidates = base_candidates(&cfg);
        let mut trace = Vec::new();
        let mut loaded = Vec::new();
        for card in self.visible_cards()? {
            if !card.applies_to(&self.task) {
                continue;
            }
            let action = Action::new(ActionVariant::LoadSkill(card.id.clone()), &cfg.cost_table);
            let state = ProbeState::begin(card);
            if mech.vigilance && effective_trust(card) < cfg.trust_gate {
                // Gated downstream; never probed, never loaded.
                candidates.push(action);
                trace.push(state);
                continue;
            }
            let state = if mech.probe {
                let probed = run_probe(state, card, &self.query(), self.backend, &cfg)?;
                self.cost += probed.probe_cost_charged;
                resolve(probed)?
            } else {
                state.load_without_probe()?
            };
            if state.is_loaded() {
                self.load_body(card)?;
                candidates.push(action);
                loaded.push(card);
            }
            trace.push(state);
        }

        let q = self.query();
        let mut cv = ConfidenceVector::new(p_self)?;
        cv.set_source(TOOL_CHANNEL, self.backend.source_confidence(&q, TOOL_CHANNEL)?)?;
        let verify_scripted = self.backend.source_confidence(&q, VERIFY_CHANNEL)?;
        cv.set_source(VERIFY_CHANNEL, verify_confidence(verify_scripted, p_self, &tags, &cfg))?;
        for card in &loaded {
            cv.set_source(card.id.clone(), self.backend.source_confidence(&q, &card.id)?)?;
        }
        if !mech.dual_conf {
            collapse_to_scalar(&mut cv);
        }
        debug!(
            "{}/{}: p_self={p_self} delta={:.3}",
            self.item.id,
            self.condition,
            conflict_differential(&cv)
        );

        let mut first = select_action(&candidates, &cv, &cfg, self.registry)?;
        first.probe_trace = trace;
        let primary = first.chosen.variant.clone();
        self.push(first);

        let kind = primary.kind();
        if matches!(kind, VariantKind::Stop | VariantKind::Direct) {
            return Ok(Finish {
                primary,
                answer_from: kind,
                class: class_of(kind),
                p_post: p_self,
                terminal: p_self,
            });
        }

        self.task.pre_offload_p_self = Some(p_self);
        let post = self.backend.post_offload_confidence(&self.query())?;
        let trust = match &primary {
            ActionVariant::LoadSkill(id) => effective_trust(self.registry.get(id).expect("gated set")),
            _ => 1.0,
        };
        let verified = kind == VariantKind::Verify;
        let p_dec = if mech.decontam {
            decontaminate(p_self, post, trust, verified, &cfg.decontam)
        } else {
            post
        };
        if verified {
            return Ok(Finish {
                primary,
                answer_from: kind,
                class: AnswerClass::Verified,
                p_post: p_dec,
                terminal: p_dec,
            });
        }

        let follow_up = [
            Action::new(ActionVariant::Stop, &cfg.cost_table),
            Action::new(ActionVariant::Verify, &cfg.cost_table),
        ];
        let mut cv2 = ConfidenceVector::new(p_dec)?;
        cv2.set_source(VERIFY_CHANNEL, verify_confidence(verify_scripted, p_dec, &tags, &cfg))?;
        let second = select_action(&follow_up, &cv2, &cfg, self.registry)?;
        let verify_after = second.chosen.variant == ActionVariant::Verify;
        self.push(second);
        let (answer_from, class) = if verify_after {
            (VariantKind::Verify, AnswerClass::Verified)
        } else {
            (kind, class_of(kind))
        };
        Ok(Finish {
            primary,
            answer_from,
            class,
            p_post: p_dec,
            terminal: p_dec,
        })
    }

    fn judge(&self, finish: &Finish) -> Result<Outcome, Abort> {
        let action_ok = self.item.gold_action.accepts(&finish.primary);
        if !action_ok {
            return Ok(Outcome::Incorrect);
        }
        if let Some(gold) = &self.item.gold_answer {
            let given = self.backend.answer(&self.query(), finish.answer_from)?;
            if normalize_answer(&given) != normalize_answer(gold) {
                return Ok(Outcome::Incorrect);
            }
        }
        Ok(Outcome::Correct)
    }
}

impl GoldAction {
    pub fn accepts(self, chosen: &ActionVariant) -> bool {
        match self {
            GoldAction::Direct | GoldAction::Stop => {
                matches!(chosen, ActionVariant::Direct | ActionVariant::Stop)
            }
            GoldAction::CallTool => *chosen == ActionVariant::CallTool,
            GoldAction::Verify => *chosen == ActionVariant::Verify,
            GoldAction::LoadSkillAllowed => matches!(chosen, ActionVariant::LoadSkill(_)),
            GoldAction::GateSkill => !matches!(chosen, ActionVariant::LoadSkill(_)),
        }
    }
}

/// Routes one item under one condition.
///
/// Missing backend signals do not abort: the trajectory is recorded as
/// incorrect with a diagnostic. Registry and routing failures are errors.
pub fn run_trajectory(
    item: &BenchmarkItem,
    registry: &CardRegistry,
    backend: &dyn ModelBackend,
    cfg: &RoutingConfig,
    condition: Condition,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let mut cfg = cfg.clone();
    let strategy = condition.strategy();
    if let Strategy::Controller(m) = strategy {
        let base = cfg.mechanisms;
        cfg.mechanisms = Mechanisms {
            probe: base.probe && m.probe,
            vigilance: base.vigilance && m.vigilance,
            decontam: base.decontam && m.decontam,
            dual_conf: base.dual_conf && m.dual_conf,
        };
    }
    let mechanisms = cfg.mechanisms;
    let mut ctl = Controller {
        item,
        task: item.task(),
        registry,
        backend,
        cfg,
        condition,
        decisions: Vec::new(),
        cost: 0.0,
        p_self: None,
    };
    let finished = match strategy {
        Strategy::Relevance => ctl.run_baseline(false),
        Strategy::RelevanceWithReflection => ctl.run_baseline(true),
        Strategy::Controller(_) => ctl.run_controller(mechanisms),
    };
    let finished = finished.and_then(|f| ctl.judge(&f).map(|o| (f, o)));
    match finished {
        Ok((f, outcome)) => Ok(TrajectoryRecord {
            item_id: item.id.clone(),
            condition,
            implicated_card: f.primary.card_id().map(str::to_string),
            decisions: ctl.decisions,
            p_self_pre: ctl.p_self.unwrap_or(0.0),
            p_self_post_decontaminated: f.p_post,
            final_answer_class: f.class,
            outcome,
            terminal_confidence: f.terminal,
            total_cost: ctl.cost,
            diagnostics: Vec::new(),
        }),
        Err(Abort::Hard(e)) => Err(e),
        Err(Abort::Signal(msg)) => {
            let mut decisions = ctl.decisions;
            let implicated_card = decisions
                .first()
                .and_then(|d| d.chosen.variant.card_id())
                .map(str::to_string);
            if decisions.is_empty() {
                decisions.push(Decision {
                    chosen: Action::new(ActionVariant::Stop, &ctl.cfg.cost_table),
                    scores: BTreeMap::new(),
                    gated_cards: Vec::new(),
                    probe_trace: Vec::new(),
                });
            }
            let p = ctl.p_self.unwrap_or(0.0);
            Ok(TrajectoryRecord {
                item_id: item.id.clone(),
                condition,
                decisions,
                p_self_pre: p,
                p_self_post_decontaminated: p,
                final_answer_class: AnswerClass::Stopped,
                outcome: Outcome::Incorrect,
                terminal_confidence: p,
                implicated_card,
                total_cost: ctl.cost,
                diagnostics: vec![format!("backend signal missing: {msg}")],
            })
        }
    }
}
