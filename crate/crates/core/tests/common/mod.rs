#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use mesa_core::backend::{load_script, ScriptedBackend};
use mesa_core::bench::{load_suite, load_suite_with, BenchmarkItem, Condition};
use mesa_core::cards::{load_registry, CardRegistry, CountingBodySource, RefBodySource};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub struct Loaded {
    pub registry: CardRegistry,
    pub items: Vec<BenchmarkItem>,
    pub backend: ScriptedBackend,
}

pub fn load_main() -> Loaded {
    let registry = load_registry(fixture("cards.json")).unwrap();
    let items = load_suite(fixture("suite.json"), &registry).unwrap();
    let backend = ScriptedBackend::new(load_script(fixture("script.json")).unwrap());
    Loaded { registry, items, backend }
}

pub fn load_mini() -> Loaded {
    let registry = load_registry(fixture("mini_cards.json")).unwrap();
    let items = load_suite_with(fixture("mini_suite.json"), &registry, None).unwrap();
    let backend = ScriptedBackend::new(load_script(fixture("mini_script.json")).unwrap());
    Loaded { registry, items, backend }
}

/// Main fixtures with an access-counting body source.
pub fn load_main_counting() -> (Loaded, Arc<CountingBodySource>) {
    let mut l = load_main();
    let counter = Arc::new(CountingBodySource::new(Arc::new(RefBodySource {
        base_dir: fixtures(),
    })));
    l.registry = l.registry.with_body_source(counter.clone());
    (l, counter)
}

pub const VIGILANT: [Condition; 4] = [
    Condition::Full,
    Condition::NoProbe,
    Condition::NoDecontam,
    Condition::NoDualConf,
];

/// Expected accuracy rows on the shipped fixtures: (condition, [A, B, C, overall]).
pub const EXPECTED_TABLE: [(Condition, [f64; 4]); 7] = [
    (Condition::Baseline, [0.500, 0.000, 0.500, 0.333]),
    (Condition::Reflection, [0.500, 0.000, 0.500, 0.333]),
    (Condition::NoProbe, [1.000, 0.800, 1.000, 0.933]),
    (Condition::NoVigilance, [1.000, 0.500, 1.000, 0.833]),
    (Condition::NoDecontam, [1.000, 1.000, 1.000, 1.000]),
    (Condition::NoDualConf, [1.000, 1.000, 1.000, 1.000]),
    (Condition::Full, [1.000, 1.000, 1.000, 1.000]),
];

/// Standard normal CDF by composite Simpson integration of the density
/// from 0 to |x|; error far below 1e-9 at n = 20_000.
pub fn phi_simpson(x: f64) -> f64 {
    let n = 20_000;
    let b = x.abs();
    let h = b / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    let half = s * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}
