//! Candidate state-update actions and their text renderings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ontology::Ontology;
use crate::scorer::ScorerInput;
use crate::state::{DialogueState, GoalValue};

/// An instruction that modifies the dialogue state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    /// Set a goal constraint.
    InformGoal { slot: String, value: GoalValue },
    /// Switch on the request bit of `slot` on a history item.
    Request { item_id: usize, slot: String },
}

impl Action {
    pub fn inform(slot: impl Into<String>, value: impl Into<GoalValue>) -> Self {
        Action::InformGoal { slot: slot.into(), value: value.into() }
    }

    pub fn request(item_id: usize, slot: impl Into<String>) -> Self {
        Action::Request { item_id, slot: slot.into() }
    }

    pub fn slot(&self) -> &str {
        match self {
            Action::InformGoal { slot, .. } | Action::Request { slot, .. } => slot,
        }
    }

    pub fn is_inform(&self) -> bool {
        matches!(self, Action::InformGoal { .. })
    }

    pub fn is_request(&self) -> bool {
        matches!(self, Action::Request { .. })
    }

    pub fn item_id(&self) -> Option<usize> {
        match self {
            Action::Request { item_id, .. } => Some(*item_id),
            Action::InformGoal { .. } => None,
        }
    }

    /// Template-generated action sentence.
    pub fn sentence(&self) -> String {
        match self {
            Action::InformGoal { slot, value: GoalValue::Value(v) } => {
                format!("the user wants the {v} {}", slot_phrase(slot))
            }
            Action::InformGoal { slot, value: GoalValue::DontCare } => {
                format!("the user wants any {}", slot_phrase(slot))
            }
            Action::Request { slot, .. } => {
                format!("the user asks for the {} of this restaurant", slot_phrase(slot))
            }
        }
    }

    /// Position in the canonical candidate order.
    pub fn canonical_key(&self, ontology: &Ontology) -> (u8, usize, usize) {
        match self {
            Action::InformGoal { slot, value } => {
                let slot_i = ontology.slot_index(slot).unwrap_or(usize::MAX);
                let value_i = match value {
                    GoalValue::Value(v) => ontology.value_index(slot, v).unwrap_or(usize::MAX - 1),
                    GoalValue::DontCare => usize::MAX,
                };
                (0, slot_i, value_i)
            }
            Action::Request { item_id, slot } => {
                (1, *item_id, ontology.requestable_index(slot).unwrap_or(usize::MAX))
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::InformGoal { slot, value } => write!(f, "inform({slot}={value})"),
            Action::Request { item_id, slot } => write!(f, "request(item_{item_id}, {slot})"),
        }
    }
}

/// Natural-language phrase for a slot name.
pub fn slot_phrase(slot: &str) -> &str {
    match slot {
        "pricerange" => "price range",
        "phone" => "phone number",
        "addr" => "address",
        "postcode" => "post code",
        other => other,
    }
}

/// Options controlling candidate generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateConfig {
    /// Also generate `slot=dontcare` goal actions, one per informable slot.
    pub include_dontcare: bool,
}

/// Number of candidates [`candidate_actions`] yields for a history of `items`.
pub fn candidate_count(ontology: &Ontology, items: usize, config: CandidateConfig) -> usize {
    let dontcare = if config.include_dontcare { ontology.informable_slots().len() } else { 0 };
    ontology.total_informable_values() + dontcare + ontology.requestable_slots().len() * items
}

/// Every candidate action for the state: all goal changes in ontology
/// order, then one request per (history item, requestable slot).
pub fn candidate_actions(state: &DialogueState, ontology: &Ontology, config: CandidateConfig) -> Vec<Action> {
    let mut out = Vec::with_capacity(candidate_count(ontology, state.history.len(), config));
    for slot in ontology.informable_slots() {
        for value in ontology.values(slot) {
            out.push(Action::inform(slot.clone(), GoalValue::Value(value.clone())));
        }
        if config.include_dontcare {
            out.push(Action::inform(slot.clone(), GoalValue::DontCare));
        }
    }
    for item in &state.history {
        for slot in ontology.requestable_slots() {
            out.push(Action::request(item.item_id, slot.clone()));
        }
    }
    out
}

/// A candidate paired with the scorer input built for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInput {
    pub action: Action,
    pub input: ScorerInput,
}

/// Item description for an action in the context of `state`; empty for
/// goal changes.
pub fn action_item_description(action: &Action, state: &DialogueState) -> String {
    match action {
        Action::InformGoal { .. } => String::new(),
        Action::Request { item_id, .. } => state.item(*item_id).map(|i| i.description()).unwrap_or_default(),
    }
}

pub fn scorer_input(action: &Action, state: &DialogueState, utterance: &str) -> ScorerInput {
    ScorerInput::new(
        &state.last_system_acts,
        utterance,
        action_item_description(action, state),
        action.sentence(),
    )
}

/// Build the four-part scorer input for every candidate of the turn.
pub fn render_candidates(
    state: &DialogueState,
    ontology: &Ontology,
    utterance: &str,
    config: CandidateConfig,
) -> Vec<CandidateInput> {
    candidate_actions(state, ontology, config)
        .into_iter()
        .map(|action| {
            let input = scorer_input(&action, state, utterance);
            CandidateInput { action, input }
        })
        .collect()
}
