//! Precedence and truth-table checks for the predicate language.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mesa_core::cards::parse_predicate;
use mesa_core::router::TaskContext;

const VARS: [&str; 4] = ["a", "b", "c", "d"];

fn ctx(bits: u32) -> TaskContext {
    let mut c = TaskContext::new("p").unwrap();
    c.kind_tags = VARS
        .iter()
        .enumerate()
        .filter(|(i, _)| bits & (1 << i) != 0)
        .map(|(_, v)| v.to_string())
        .collect::<BTreeSet<_>>();
    c
}

/// Flat token stream: literals joined by AND/OR, each literal optionally negated.
struct Flat {
    lits: Vec<(bool, usize)>,
    ops: Vec<bool>, // true = AND
}

impl Flat {
    fn text(&self) -> String {
        let mut s = String::new();
        for (i, (neg, v)) in self.lits.iter().enumerate() {
            if i > 0 {
                s.push_str(if self.ops[i - 1] { " AND " } else { " OR " });
            }
            if *neg {
                s.push_str("NOT ");
            }
            s.push_str("kind:");
            s.push_str(VARS[*v]);
        }
        s
    }

    /// NOT binds tightest, then AND, then OR: a sum of products.
    fn oracle(&self, bits: u32) -> bool {
        let lit = |i: usize| {
            let (neg, v) = self.lits[i];
            (bits & (1 << v) != 0) != neg
        };
        let mut any = false;
        let mut term = lit(0);
        for (i, &and) in self.ops.iter().enumerate() {
            if and {
                term = term && lit(i + 1);
            } else {
                any = any || term;
                term = lit(i + 1);
            }
        }
        any || term
    }
}

#[test]
fn precedence_matches_sum_of_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let n = rng.gen_range(1..=6);
        let flat = Flat {
            lits: (0..n).map(|_| (rng.gen_bool(0.3), rng.gen_range(0..VARS.len()))).collect(),
            ops: (1..n).map(|_| rng.gen_bool(0.5)).collect(),
        };
        let text = flat.text();
        let expr = parse_predicate(&text).unwrap();
        for bits in 0..16 {
            assert_eq!(expr.eval(&ctx(bits)), flat.oracle(bits), "{text} @ {bits:04b}");
        }
    }
}

#[test]
fn truth_tables() {
    let cases: &[(&str, fn(bool, bool, bool) -> bool)] = &[
        ("kind:a OR kind:b AND kind:c", |a, b, c| a || (b && c)),
        ("(kind:a OR kind:b) AND kind:c", |a, b, c| (a || b) && c),
        ("NOT kind:a AND kind:b", |a, b, _| !a && b),
        ("NOT (kind:a AND kind:b)", |a, b, _| !(a && b)),
        ("NOT NOT kind:a", |a, _, _| a),
        ("kind:a AND kind:b OR kind:c", |a, b, c| (a && b) || c),
        ("kind:a AND (kind:b OR NOT kind:c)", |a, b, c| a && (b || !c)),
    ];
    for (text, f) in cases {
        let e = parse_predicate(text).unwrap();
        for bits in 0..8u32 {
            let (a, b, c) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0);
            assert_eq!(e.eval(&ctx(bits)), f(a, b, c), "{text} a={a} b={b} c={c}");
        }
    }
}

#[test]
fn atoms() {
    let mut c = TaskContext::new("What is the Stock PRICE of ACME?").unwrap();
    c.attachments.push(mesa_core::router::Attachment { mime_tag: "html".into(), bytes_len: 10 });
    assert!(parse_predicate("contains:\"stock price\"").unwrap().eval(&c));
    assert!(parse_predicate("matches:\"(?i)acme\\\\?\"").unwrap().eval(&c));
    assert!(parse_predicate("mime:html").unwrap().eval(&c));
    assert!(!parse_predicate("mime:pdf").unwrap().eval(&c));
    assert!(!parse_predicate("kind:procedural").unwrap().eval(&c));
}
