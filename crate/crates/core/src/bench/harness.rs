use std::collections::BTreeMap;
use std::thread;

use log::{debug, warn};

use super::report::{ItemOutcome, ResultsTable};
use super::{BenchmarkItem, Condition};
use crate::backend::{ModelBackend, Query};
use crate::cards::CardRegistry;
use crate::confidence::{TOOL_CHANNEL, VERIFY_CHANNEL};
use crate::router::{
    run_trajectory, Action, ActionVariant, AnswerClass, Decision, Outcome, RoutingConfig,
    RoutingError, TrajectoryRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("invalid routing config: {0}")]
    Config(#[from] RoutingError),
}

/// Everything a matrix run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRun {
    pub table: ResultsTable,
    /// Trajectories in condition-major, suite order.
    pub records: Vec<TrajectoryRecord>,
}

impl MatrixRun {
    pub fn records_for(&self, condition: Condition) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records.iter().filter(move |r| r.condition == condition)
    }
}

/// Script keys one item needs under one condition.
pub fn required_keys(item: &BenchmarkItem, condition: Condition) -> Vec<String> {
    let mut keys = vec![
        Query::SelfConfidence.key(),
        Query::PostOffloadConfidence.key(),
        Query::SelfReportTags.key(),
        Query::SourceConfidence(TOOL_CHANNEL.into()).key(),
        Query::SourceConfidence(VERIFY_CHANNEL.into()).key(),
    ];
    if item.gold_answer.is_some() {
        keys.push(crate::backend::DEFAULT_ANSWER_KEY.into());
    }
    for card in &item.injected_card_ids {
        keys.push(Query::SourceConfidence(card.clone()).key());
        keys.push(Query::Probe(card.clone()).key());
    }
    if condition == Condition::Reflection {
        keys.push(Query::Reflection.key());
    }
    keys
}

/// `(item, condition, key)` triples for `BehaviorScript::check_coverage`.
pub fn script_manifest(
    items: &[BenchmarkItem],
    conditions: &[Condition],
) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    for item in items {
        for &c in conditions {
            for key in required_keys(item, c) {
                out.push((item.id.clone(), c.as_str().to_string(), key));
            }
        }
    }
    out
}

fn failed_record(item: &BenchmarkItem, condition: Condition, cfg: &RoutingConfig, msg: String) -> TrajectoryRecord {
    TrajectoryRecord {
        item_id: item.id.clone(),
        condition,
        decisions: vec![Decision {
            chosen: Action::new(ActionVariant::Stop, &cfg.cost_table),
            scores: BTreeMap::new(),
            gated_cards: Vec::new(),
            probe_trace: Vec::new(),
        }],
        p_self_pre: 0.0,
        p_self_post_decontaminated: 0.0,
        final_answer_class: AnswerClass::Stopped,
        outcome: Outcome::Incorrect,
        terminal_confidence: 0.0,
        implicated_card: None,
        total_cost: 0.0,
        diagnostics: vec![msg],
    }
}

fn run_condition(
    items: &[BenchmarkItem],
    registry: &CardRegistry,
    backend: &dyn ModelBackend,
    cfg: &RoutingConfig,
    condition: Condition,
) -> Vec<TrajectoryRecord> {
    items
        .iter()
        .map(|item| match run_trajectory(item, registry, backend, cfg, condition) {
            Ok(r) => {
                for d in &r.diagnostics {
                    warn!("{}/{}: {d}", item.id, condition);
                }
                r
            }
            Err(e) => {
                warn!("{}/{}: {e}", item.id, condition);
                failed_record(item, condition, cfg, e.to_string())
            }
        })
        .collect()
}

/// Runs every item under every condition.
///
/// Conditions run on separate threads; results are merged in the order
/// given, so the output does not depend on scheduling.
pub fn run_matrix(
    items: &[BenchmarkItem],
    registry: &CardRegistry,
    backend: &dyn ModelBackend,
    conditions: &[Condition],
    cfg: &RoutingConfig,
) -> Result<MatrixRun, MatrixError> {
    cfg.validate()?;
    let per_condition: Vec<Vec<TrajectoryRecord>> = thread::scope(|s| {
        let handles: Vec<_> = conditions
            .iter()
            .map(|&c| s.spawn(move || run_condition(items, registry, backend, cfg, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("condition worker panicked"))
            .collect()
    });
    let records: Vec<TrajectoryRecord> = per_condition.into_iter().flatten().collect();
    let slices: BTreeMap<&str, _> = items.iter().map(|i| (i.id.as_str(), i.slice)).collect();
    let outcomes = records
        .iter()
        .map(|r| ItemOutcome {
            condition: r.condition,
            item_id: r.item_id.clone(),
            slice: slices[r.item_id.as_str()],
            outcome: r.outcome,
        })
        .collect();
    let table = ResultsTable::from_outcomes(conditions, outcomes);
    debug!("matrix: {} trajectories", records.len());
    Ok(MatrixRun { table, records })
}
