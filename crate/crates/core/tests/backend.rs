//! Script coverage and replay.

use mesa_core::backend::{BehaviorScript, SignalValue};
use mesa_core::bench::{required_keys, script_manifest, Condition};

mod common;

#[test]
fn shipped_script_covers_the_matrix() {
    let l = common::load_main();
    let manifest = script_manifest(&l.items, &Condition::ALL);
    let req = manifest.iter().map(|(i, c, k)| (i.as_str(), c.as_str(), k.clone()));
    l.backend.script().check_coverage(req).unwrap();
}

#[test]
fn missing_key_is_named() {
    let l = common::load_main();
    let item = l.items.iter().find(|i| i.id == "B-031").unwrap();
    let keys = required_keys(item, Condition::Full);
    let mut partial = BehaviorScript::default();
    for k in keys.iter().skip(1) {
        partial.insert_key("B-031", "Full", k, SignalValue::Number(0.5));
    }
    let err = partial
        .check_coverage(keys.iter().map(|k| ("B-031", "Full", k.clone())))
        .unwrap_err()
        .to_string();
    assert!(err.contains("B-031/Full"), "{err}");
    assert!(err.contains(&keys[0]), "{err}");
}

#[test]
fn empty_requirements_are_covered() {
    let empty = BehaviorScript::default();
    assert!(empty.is_empty());
    empty.check_coverage(std::iter::empty()).unwrap();
    assert!(script_manifest(&[], &Condition::ALL).is_empty());
}

#[test]
fn script_json_round_trip() {
    let l = common::load_main();
    let s = l.backend.script();
    let back = BehaviorScript::from_json_str(&s.to_json_string()).unwrap();
    assert_eq!(&back, s);
}
