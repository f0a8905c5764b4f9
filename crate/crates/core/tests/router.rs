//! Properties of action selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mesa_core::cards::{CardRegistry, OffloadingType, Provenance, SkillCard};
use mesa_core::confidence::{ConfidenceVector, TOOL_CHANNEL, VERIFY_CHANNEL};
use mesa_core::router::{select_action, Action, ActionVariant, RoutingConfig};

struct Draw {
    registry: CardRegistry,
    cv: ConfidenceVector,
    candidates: Vec<Action>,
    cfg: RoutingConfig,
}

fn draw(rng: &mut ChaCha8Rng, coarse: bool) -> Draw {
    // coarse values make exact score ties common
    let p = |rng: &mut ChaCha8Rng| -> f64 {
        if coarse {
            f64::from(rng.gen_range(0..=4u8)) / 4.0
        } else {
            rng.gen_range(0.0..=1.0)
        }
    };
    let mut cfg = RoutingConfig::default();
    cfg.trust_gate = p(rng);
    let mut cards = Vec::new();
    let mut cv = ConfidenceVector::new(p(rng)).unwrap();
    cv.set_source(TOOL_CHANNEL, p(rng)).unwrap();
    cv.set_source(VERIFY_CHANNEL, p(rng)).unwrap();
    let mut candidates = vec![
        Action::new(ActionVariant::Direct, &cfg.cost_table),
        Action::new(ActionVariant::Stop, &cfg.cost_table),
        Action::new(ActionVariant::CallTool, &cfg.cost_table),
        Action::new(ActionVariant::Verify, &cfg.cost_table),
    ];
    for i in 0..rng.gen_range(0..4) {
        let id = format!("k{i}");
        cards.push(
            SkillCard::new(&id, &id, "kind:x", "kind:x", OffloadingType::Procedural, p(rng), Provenance::FirstParty, false)
                .unwrap(),
        );
        cv.set_source(id.clone(), p(rng)).unwrap();
        candidates.push(Action::new(ActionVariant::LoadSkill(id), &cfg.cost_table));
    }
    Draw {
        registry: CardRegistry::from_cards(cards).unwrap(),
        cv,
        candidates,
        cfg,
    }
}

#[test]
fn choice_ignores_candidate_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..2000 {
        let mut d = draw(&mut rng, true);
        let first = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().chosen;
        d.candidates.shuffle(&mut rng);
        let again = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().chosen;
        assert_eq!(first, again);
    }
}

#[test]
fn chosen_score_is_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..2000 {
        let d = draw(&mut rng, false);
        let dec = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap();
        let best = dec.scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(dec.scores[&dec.chosen.variant.label()], best);
    }
}

#[test]
fn raising_a_loser_cost_keeps_the_winner() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..2000 {
        let mut d = draw(&mut rng, false);
        let chosen = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().chosen;
        for a in d.candidates.iter_mut().filter(|a| a.variant != chosen.variant) {
            a.cost += rng.gen_range(0.0..2.0);
        }
        let after = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().chosen;
        assert_eq!(after.variant, chosen.variant);
    }
}

#[test]
fn raising_the_winner_cost_never_helps_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..2000 {
        let mut d = draw(&mut rng, false);
        let chosen = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().chosen;
        let before = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().scores;
        let idx = d.candidates.iter().position(|a| a.variant == chosen.variant);
        let Some(idx) = idx else { continue }; // fallback pick
        d.candidates[idx].cost += 0.5;
        let after = select_action(&d.candidates, &d.cv, &d.cfg, &d.registry).unwrap().scores;
        let label = chosen.variant.label();
        assert!(after[&label] < before[&label] || d.cfg.lambda == 0.0);
    }
}

#[test]
fn equal_scores_prefer_stop() {
    let cfg = RoutingConfig::default();
    let registry = CardRegistry::from_cards(vec![]).unwrap();
    let cv = ConfidenceVector::new(0.9).unwrap();
    let c = [
        Action::new(ActionVariant::Direct, &cfg.cost_table),
        Action::new(ActionVariant::Stop, &cfg.cost_table),
    ];
    assert_eq!(select_action(&c, &cv, &cfg, &registry).unwrap().chosen.variant, ActionVariant::Stop);
}
