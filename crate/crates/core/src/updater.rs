//! Per-turn action state update: score every candidate, keep the relevant
//! ones and fold them into the state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{render_candidates, Action, CandidateConfig, CandidateInput};
use crate::error::Result;
use crate::ontology::Ontology;
use crate::scorer::{ActionScorer, TurnContext};
use crate::state::{DialogueState, GoalValue};

/// Actions scoring at or below this are never executed.
pub const RELEVANCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAction {
    pub action: Action,
    pub score: f64,
}

/// Outcome of one user turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnUpdate {
    pub executed: Vec<Action>,
    pub rejected: Vec<ScoredAction>,
    pub resulting_state: DialogueState,
    /// Every candidate with its score, in candidate order.
    #[serde(skip)]
    pub scored: Vec<ScoredAction>,
}

/// Score every candidate of the turn, in candidate order.
pub fn detect(
    scorer: &dyn ActionScorer,
    state: &DialogueState,
    ontology: &Ontology,
    utterance: &str,
    config: CandidateConfig,
    ctx: &TurnContext<'_>,
) -> (Vec<CandidateInput>, Vec<ScoredAction>) {
    let candidates = render_candidates(state, ontology, utterance, config);
    let scores = scorer.score_all(&candidates, ctx);
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|(c, score)| ScoredAction { action: c.action.clone(), score: score.clamp(0.0, 1.0) })
        .collect();
    (candidates, scored)
}

/// Choose the actions to execute:
/// drop scores `<= 0.5`; keep the best goal change per informable slot
/// (ties go to the earlier ontology value); keep one request per
/// requestable slot, on the most recently mentioned item (ties go to the
/// larger item id). The result is in canonical candidate order.
pub fn select(scored: &[ScoredAction], state: &DialogueState, ontology: &Ontology) -> Vec<Action> {
    let mut best_goal: BTreeMap<&str, &ScoredAction> = BTreeMap::new();
    let mut best_request: BTreeMap<&str, (usize, usize, &ScoredAction)> = BTreeMap::new();
    for sa in scored.iter().filter(|sa| sa.score > RELEVANCE_THRESHOLD) {
        match &sa.action {
            Action::InformGoal { slot, .. } => {
                let replace = match best_goal.get(slot.as_str()) {
                    None => true,
                    Some(cur) => {
                        sa.score > cur.score
                            || (sa.score == cur.score
                                && sa.action.canonical_key(ontology) < cur.action.canonical_key(ontology))
                    }
                };
                if replace {
                    best_goal.insert(slot, sa);
                }
            }
            Action::Request { item_id, slot } => {
                let mention = state.item(*item_id).map_or(0, |i| i.last_mention_turn);
                let replace = match best_request.get(slot.as_str()) {
                    None => true,
                    Some(&(m, id, _)) => (mention, *item_id) > (m, id),
                };
                if replace {
                    best_request.insert(slot, (mention, *item_id, sa));
                }
            }
        }
    }
    let mut out: Vec<Action> = best_goal
        .into_values()
        .map(|sa| sa.action.clone())
        .chain(best_request.into_values().map(|(_, _, sa)| sa.action.clone()))
        .collect();
    out.sort_by_key(|a| a.canonical_key(ontology));
    out
}

/// Apply `actions` in order at the state's current turn, then advance the
/// turn counter.
pub fn apply_all(state: &mut DialogueState, actions: &[Action], ontology: &Ontology) -> Result<()> {
    let turn = state.turn_index;
    let mut next = state.clone();
    for action in actions {
        next.apply_action(action, ontology, turn)?;
    }
    next.turn_index = turn + 1;
    *state = next;
    Ok(())
}

/// Full ASU step for one user utterance.
pub fn update_turn(
    scorer: &dyn ActionScorer,
    state: &DialogueState,
    ontology: &Ontology,
    utterance: &str,
    config: CandidateConfig,
    ctx: &TurnContext<'_>,
) -> Result<TurnUpdate> {
    let (_, scored) = detect(scorer, state, ontology, utterance, config, ctx);
    let executed = select(&scored, state, ontology);
    let rejected = scored.iter().filter(|sa| !executed.contains(&sa.action)).cloned().collect();
    let mut resulting_state = state.clone();
    apply_all(&mut resulting_state, &executed, ontology)?;
    Ok(TurnUpdate { executed, rejected, resulting_state, scored })
}

/// Goal constraints differing between two states, for reporting.
pub fn goal_delta(before: &DialogueState, after: &DialogueState) -> Vec<(String, GoalValue)> {
    after
        .goal
        .constraints()
        .filter(|(slot, value)| before.goal.get(slot) != Some(*value))
        .map(|(slot, value)| (slot.to_string(), value.clone()))
        .collect()
}
