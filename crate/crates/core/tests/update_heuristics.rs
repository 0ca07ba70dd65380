//! Selection properties checked against an independent reference.

use std::collections::BTreeMap;

use asu_core::{candidate_actions, select, Action, CandidateConfig, DialogueState, Ontology, ScoredAction, VenueDb};
use proptest::prelude::*;

fn state_with(db: &VenueDb, picks: &[(usize, usize)]) -> DialogueState {
    let mut state = DialogueState::new();
    for &(venue, turn) in picks {
        state.record_offer(&db.venues()[venue % db.len()], turn);
    }
    state.turn_index = 50;
    state
}

/// Straight-line reading of the selection rules.
fn reference(scored: &[ScoredAction], state: &DialogueState, ontology: &Ontology) -> Vec<Action> {
    let mut out = Vec::new();
    for slot in ontology.informable_slots() {
        let mut best: Option<(&ScoredAction, usize)> = None;
        for sa in scored {
            if let Action::InformGoal { slot: s, value } = &sa.action {
                if s != slot || sa.score <= 0.5 {
                    continue;
                }
                let idx = ontology.value_index(s, value.as_str()).unwrap_or(usize::MAX);
                best = match best {
                    Some((b, bi)) if b.score > sa.score || (b.score == sa.score && bi <= idx) => Some((b, bi)),
                    _ => Some((sa, idx)),
                };
            }
        }
        out.extend(best.map(|(b, _)| b.action.clone()));
    }
    for slot in ontology.requestable_slots() {
        let best = scored
            .iter()
            .filter(|sa| sa.score > 0.5 && sa.action.is_request() && sa.action.slot() == slot)
            .max_by_key(|sa| {
                let id = sa.action.item_id().unwrap();
                (state.item(id).unwrap().last_mention_turn, id)
            });
        out.extend(best.map(|b| b.action.clone()));
    }
    out.sort_by_key(|a| a.canonical_key(ontology));
    out
}

fn scores_for(actions: &[Action], raw: &[u8]) -> Vec<ScoredAction> {
    // Coarse score grid so that ties and exact 0.5 values are common.
    actions
        .iter()
        .zip(raw.iter().cycle())
        .map(|(a, r)| ScoredAction { action: a.clone(), score: f64::from(*r % 11) / 10.0 })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn selection_matches_reference(
        picks in prop::collection::vec((0usize..75, 0usize..20), 0..5),
        raw in prop::collection::vec(any::<u8>(), 1..200),
    ) {
        let ontology = Ontology::cambridge();
        let db = VenueDb::cambridge(&ontology);
        let state = state_with(&db, &picks);
        let scored = scores_for(&candidate_actions(&state, &ontology, CandidateConfig::default()), &raw);
        let picked = select(&scored, &state, &ontology);
        prop_assert_eq!(&picked, &reference(&scored, &state, &ontology));

        let score_of: BTreeMap<String, f64> = scored.iter().map(|s| (s.action.to_string(), s.score)).collect();
        for a in &picked {
            prop_assert!(score_of[&a.to_string()] > 0.5);
        }
        let mut per_slot = BTreeMap::new();
        for a in &picked {
            *per_slot.entry((a.is_inform(), a.slot().to_string())).or_insert(0) += 1;
        }
        prop_assert!(per_slot.values().all(|&n| n == 1));
    }

    #[test]
    fn raising_a_rejected_score_keeps_other_slots(
        picks in prop::collection::vec((0usize..75, 0usize..20), 1..4),
        raw in prop::collection::vec(any::<u8>(), 1..200),
        which in any::<prop::sample::Index>(),
    ) {
        let ontology = Ontology::cambridge();
        let db = VenueDb::cambridge(&ontology);
        let state = state_with(&db, &picks);
        let mut scored = scores_for(&candidate_actions(&state, &ontology, CandidateConfig::default()), &raw);
        let before = select(&scored, &state, &ontology);
        let i = which.index(scored.len());
        prop_assume!(!before.contains(&scored[i].action));
        let raised = scored[i].action.clone();
        scored[i].score = 0.95;
        let after = select(&scored, &state, &ontology);
        for a in &before {
            if a.is_inform() != raised.is_inform() || a.slot() != raised.slot() {
                prop_assert!(after.contains(a), "{} dropped after raising {}", a, raised);
            }
        }
    }
}

#[test]
fn exact_threshold_and_ties() {
    let ontology = Ontology::cambridge();
    let db = VenueDb::cambridge(&ontology);
    let state = state_with(&db, &[(0, 3), (1, 3)]);
    let s = |a: Action, score| ScoredAction { action: a, score };
    // Equal scores on one slot: the earlier ontology value wins.
    let first = ontology.values("food")[0].clone();
    let second = ontology.values("food")[1].clone();
    let picked = select(
        &[s(Action::inform("food", second.as_str()), 0.8), s(Action::inform("food", first.as_str()), 0.8)],
        &state,
        &ontology,
    );
    assert_eq!(picked, [Action::inform("food", first.as_str())]);
    // Equal mention turns: the larger item id wins.
    let picked = select(&[s(Action::request(1, "phone"), 0.9), s(Action::request(2, "phone"), 0.6)], &state, &ontology);
    assert_eq!(picked, [Action::request(2, "phone")]);
    assert!(select(&[s(Action::request(1, "phone"), 0.5)], &state, &ontology).is_empty());
}
