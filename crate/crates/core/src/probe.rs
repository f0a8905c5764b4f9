//! Delayed escalation: a card is probed cheaply before its body is loaded.
//!
//! Legal paths are `Matched -> Probed -> Loaded` and
//! `Matched -> Probed -> Skipped`. When the probe mechanism is switched off
//! the only other edge, `Matched -> Loaded`, is taken through
//! [`ProbeState::load_without_probe`].

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ModelBackend, QueryContext};
use crate::cards::SkillCard;
use crate::router::RoutingConfig;

/// Cost charged for one cheap probe, a tenth of a full skill load.
pub const PROBE_COST: f64 = 0.05;
/// How far above `self_low` a probe still reads as parametric insufficiency.
pub const PROBE_BAND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Matched,
    Probed { passed: bool },
    Loaded,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeState {
    pub card_id: String,
    pub stage: Stage,
    pub probe_cost_charged: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("illegal transition for card \"{card_id}\": {op} from {from:?}")]
    IllegalState {
        card_id: String,
        op: &'static str,
        from: Stage,
    },
    #[error("probe state is for card \"{state}\", not \"{card}\"")]
    CardMismatch { state: String, card: String },
    #[error("probe signal for card \"{card_id}\": {source}")]
    Signal {
        card_id: String,
        #[source]
        source: BackendError,
    },
}

impl ProbeState {
    pub fn begin(card: &SkillCard) -> Self {
        Self {
            card_id: card.id.clone(),
            stage: Stage::Matched,
            probe_cost_charged: 0.0,
        }
    }

    fn illegal(&self, op: &'static str) -> ProbeError {
        ProbeError::IllegalState {
            card_id: self.card_id.clone(),
            op,
            from: self.stage,
        }
    }

    /// Probe ablation: escalate straight to a full load.
    pub fn load_without_probe(self) -> Result<Self, ProbeError> {
        match self.stage {
            Stage::Matched => Ok(Self {
                stage: Stage::Loaded,
                ..self
            }),
            _ => Err(self.illegal("load_without_probe")),
        }
    }

    pub fn is_loaded(&self) -> bool {
        self.stage == Stage::Loaded
    }
}

/// Runs the cheap probe. It passes when the card's own probe predicate holds
/// and the backend reports that parametric knowledge is insufficient.
pub fn run_probe(
    state: ProbeState,
    card: &SkillCard,
    query: &QueryContext<'_>,
    backend: &dyn ModelBackend,
    cfg: &RoutingConfig,
) -> Result<ProbeState, ProbeError> {
    if state.stage != Stage::Matched {
        return Err(state.illegal("run_probe"));
    }
    if state.card_id != card.id {
        return Err(ProbeError::CardMismatch {
            state: state.card_id,
            card: card.id.clone(),
        });
    }
    let passed = if card.cheap_probe.eval(query.task) {
        let probe_p_self =
            backend
                .probe_signal(query, &card.id)
                .map_err(|source| ProbeError::Signal {
                    card_id: card.id.clone(),
                    source,
                })?;
        probe_p_self < cfg.self_low + PROBE_BAND
    } else {
        false
    };
    Ok(ProbeState {
        stage: Stage::Probed { passed },
        probe_cost_charged: state.probe_cost_charged + PROBE_COST,
        ..state
    })
}

pub fn resolve(state: ProbeState) -> Result<ProbeState, ProbeError> {
    match state.stage {
        Stage::Probed { passed: true } => Ok(ProbeState {
            stage: Stage::Loaded,
            ..state
        }),
        Stage::Probed { passed: false } => Ok(ProbeState {
            stage: Stage::Skipped,
            ..state
        }),
        _ => Err(state.illegal("resolve")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BehaviorScript, Query, ScriptedBackend, SignalValue};
    use crate::cards::{OffloadingType, Provenance};
    use crate::router::{Attachment, TaskContext};

    fn html_card() -> SkillCard {
        SkillCard::new(
            "html_reader", "HTML reader", "kind:web", "mime:html",
            OffloadingType::Procedural, 0.9, Provenance::FirstParty, false,
        )
        .unwrap()
    }

    fn task(html: bool) -> TaskContext {
        let mut t = TaskContext::new("summarize this page").unwrap();
        if html {
            t.attachments.push(Attachment { mime_tag: "html".into(), bytes_len: 2048 });
        }
        t
    }

    fn backend(probe: f64) -> ScriptedBackend {
        let mut s = BehaviorScript::default();
        s.insert("i", "*", Query::Probe("html_reader".into()), SignalValue::Number(probe));
        ScriptedBackend::new(s)
    }

    fn probe_with(html: bool, probe: f64) -> Result<ProbeState, ProbeError> {
        let card = html_card();
        let t = task(html);
        let q = QueryContext { item_id: "i", condition: "Full", task: &t };
        run_probe(ProbeState::begin(&card), &card, &q, &backend(probe), &RoutingConfig::default())
    }

    #[test]
    fn begin_is_matched_and_independent() {
        let card = html_card();
        let a = ProbeState::begin(&card);
        let mut b = ProbeState::begin(&card);
        b.probe_cost_charged = 1.0;
        assert_eq!(a.stage, Stage::Matched);
        assert_eq!(a.probe_cost_charged, 0.0);
        assert_eq!(a.card_id, card.id);
    }

    #[test]
    fn probe_passes_on_html_and_insufficiency() {
        let s = probe_with(true, 0.3).unwrap();
        assert_eq!(s.stage, Stage::Probed { passed: true });
        assert_eq!(s.probe_cost_charged, PROBE_COST);
        assert_eq!(resolve(s).unwrap().stage, Stage::Loaded);
    }

    #[test]
    fn probe_fails_without_html() {
        let s = probe_with(false, 0.3).unwrap();
        assert_eq!(s.stage, Stage::Probed { passed: false });
        assert_eq!(resolve(s).unwrap().stage, Stage::Skipped);
    }

    #[test]
    fn probe_truth_table() {
        // passed = predicate AND probe_p_self < 0.45 + 0.1
        for (html, p, want) in [
            (true, 0.3, true),
            (true, 0.95, false),
            (true, 0.55, false),
            (true, 0.549, true),
            (false, 0.3, false),
            (false, 0.95, false),
        ] {
            assert_eq!(probe_with(html, p).unwrap().stage, Stage::Probed { passed: want }, "{html} {p}");
        }
    }

    #[test]
    fn missing_probe_signal_is_error() {
        let card = html_card();
        let t = task(true);
        let q = QueryContext { item_id: "other", condition: "Full", task: &t };
        let err = run_probe(ProbeState::begin(&card), &card, &q, &backend(0.3), &RoutingConfig::default())
            .unwrap_err();
        assert!(matches!(err, ProbeError::Signal { .. }));
    }

    #[test]
    fn illegal_transitions() {
        let card = html_card();
        let matched = ProbeState::begin(&card);
        assert!(matches!(resolve(matched.clone()), Err(ProbeError::IllegalState { .. })));
        let probed = probe_with(true, 0.3).unwrap();
        let t = task(true);
        let q = QueryContext { item_id: "i", condition: "Full", task: &t };
        assert!(run_probe(probed.clone(), &card, &q, &backend(0.3), &RoutingConfig::default()).is_err());
        assert!(probed.clone().load_without_probe().is_err());
        let loaded = resolve(probed).unwrap();
        assert!(resolve(loaded.clone()).is_err());
        assert!(loaded.load_without_probe().is_err());
        assert_eq!(matched.load_without_probe().unwrap().stage, Stage::Loaded);
    }
}
