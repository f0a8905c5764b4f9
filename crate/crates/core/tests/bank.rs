//! Trust corrections against card files on disk.

use std::fs;

use serde_json::Value;

use mesa_core::bank::{apply_updates, hypercorrection_updates, read_bank, record, BankConfig, BankEntry};
use mesa_core::bench::{run_matrix, Condition};
use mesa_core::cards::load_registry;
use mesa_core::router::{Outcome, RoutingConfig};

mod common;

fn diff_paths(a: &Value, b: &Value, path: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{path}");
            for (k, v) in x {
                diff_paths(v, &y[k], format!("{path}.{k}"), out);
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (v, w)) in x.iter().zip(y).enumerate() {
                diff_paths(v, w, format!("{path}[{i}]"), out);
            }
        }
        _ if a != b => out.push(path),
        _ => {}
    }
}

#[test]
fn apply_touches_only_trust() {
    let l = common::load_main();
    let run = run_matrix(&l.items, &l.registry, &l.backend, &[Condition::Baseline], &RoutingConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.jsonl");
    let failing = run.records.iter().filter(|r| r.outcome == Outcome::Incorrect);
    for (n, rec) in failing.enumerate() {
        assert_eq!(record(&BankEntry::new(rec.clone()), &bank).unwrap(), n as u64);
    }
    let entries = read_bank(&bank).unwrap();
    let updates = hypercorrection_updates(&entries, &l.registry, &BankConfig::default());
    let card = updates.first().expect("baseline failures are confident").card_id.clone();
    let single: Vec<_> = updates.iter().filter(|u| u.card_id == card).take(1).cloned().collect();

    let cards = dir.path().join("cards.json");
    fs::copy(common::fixture("cards.json"), &cards).unwrap();
    let before: Value = serde_json::from_slice(&fs::read(&cards).unwrap()).unwrap();
    apply_updates(&cards, &single).unwrap();
    let after: Value = serde_json::from_slice(&fs::read(&cards).unwrap()).unwrap();
    let mut changed = Vec::new();
    diff_paths(&before, &after, String::new(), &mut changed);
    assert_eq!(changed.len(), 1, "{changed:?}");
    assert!(changed[0].ends_with(".source_trust"), "{changed:?}");
    let reg = load_registry(&cards).unwrap();
    assert_eq!(reg.get(&card).unwrap().source_trust, single[0].new_trust);
}
