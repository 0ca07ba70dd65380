//! Dialogue manager: ASU update, rule-based move selection and template
//! generation, wrapped in a per-user [`Session`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::action::{slot_phrase, Action, CandidateConfig};
use crate::error::{AsuError, Result};
use crate::ontology::{Ontology, Venue, VenueDb};
use crate::scorer::{ActionScorer, TurnContext};
use crate::state::{DialogueState, GoalValue};
use crate::updater::{update_turn, TurnUpdate};

/// User input that flags the previous system turn instead of being interpreted.
pub const ERROR_MARKER: &str = "<error>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformedValue {
    pub item_id: usize,
    pub name: String,
    pub slot: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "act", rename_all = "lowercase")]
pub enum SystemMove {
    Welcome,
    Offer { venue: Venue },
    Inform { values: Vec<InformedValue> },
    CantHelp { constraints: Vec<(String, GoalValue)> },
    ReqMore,
    Bye,
}

/// Chooses the next system move from the tracked state.
pub trait Policy: Send + Sync {
    fn select_move(&self, state: &DialogueState, db: &VenueDb) -> SystemMove;
}

/// Deterministic priority rules:
/// 1. answer every pending request;
/// 2. the goal changed since the last offer and something matches: offer the
///    first match not offered yet (else re-offer the first match);
/// 3. constrained goal with no match: can't help;
/// 4. otherwise ask whether there is anything else.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePolicy;

impl Policy for RulePolicy {
    fn select_move(&self, state: &DialogueState, db: &VenueDb) -> SystemMove {
        let pending = state.pending_requests();
        if !pending.is_empty() {
            let values = pending
                .into_iter()
                .filter_map(|(item_id, slot)| {
                    let item = state.item(item_id)?;
                    Some(InformedValue {
                        item_id,
                        name: item.venue.name.clone(),
                        value: item.venue.get(&slot).unwrap_or("not available").to_string(),
                        slot,
                    })
                })
                .collect();
            return SystemMove::Inform { values };
        }
        if state.goal.is_empty() {
            return SystemMove::ReqMore;
        }
        let matches = db.query(&state.goal);
        if matches.is_empty() {
            return SystemMove::CantHelp {
                constraints: state.goal.constraints().map(|(s, v)| (s.to_string(), v.clone())).collect(),
            };
        }
        if state.offer_goal.as_ref() != Some(&state.goal) {
            let venue = matches
                .iter()
                .find(|v| state.item_by_name(&v.name).is_none())
                .unwrap_or(&matches[0]);
            return SystemMove::Offer { venue: (*venue).clone() };
        }
        SystemMove::ReqMore
    }
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Template realization: `(utterance, lexicalized acts)`.
pub fn realize(mv: &SystemMove) -> (String, String) {
    match mv {
        SystemMove::Welcome => (
            "Hello, welcome to the Cambridge restaurant system. You can ask for restaurants by area, price range or food type. How may I help you?".into(),
            "welcomemsg".into(),
        ),
        SystemMove::Offer { venue } => {
            let get = |s| venue.get(s).unwrap_or("");
            (
                format!("{} is a nice {} place in the {}", venue.name, get("food"), get("area")),
                format!(
                    "offer name {} food {} area {} pricerange {}",
                    venue.name,
                    get("food"),
                    get("area"),
                    get("pricerange")
                ),
            )
        }
        SystemMove::Inform { values } => {
            let text = values
                .iter()
                .map(|v| format!("the {} of {} is {}", slot_phrase(&v.slot), v.name, v.value))
                .collect::<Vec<_>>()
                .join(" and ");
            let acts = values
                .iter()
                .map(|v| format!("inform {} {} name {}", v.slot, v.value, v.name))
                .collect::<Vec<_>>()
                .join(" ");
            (capitalize(&text), acts)
        }
        SystemMove::CantHelp { constraints } => {
            let get = |slot: &str| constraints.iter().find(|(s, _)| s == slot).map(|(_, v)| v);
            let mut desc = Vec::new();
            if let Some(GoalValue::Value(p)) = get("pricerange") {
                desc.push(p.clone());
            }
            if let Some(GoalValue::Value(f)) = get("food") {
                desc.push(f.clone());
            }
            desc.push("restaurant".into());
            if let Some(GoalValue::Value(a)) = get("area") {
                desc.push(format!("in the {a}"));
            }
            let acts = std::iter::once("canthelp".to_string())
                .chain(constraints.iter().map(|(s, v)| format!("{s} {v}")))
                .collect::<Vec<_>>()
                .join(" ");
            (format!("I'm sorry but there is no {}", desc.join(" ")), acts)
        }
        SystemMove::ReqMore => ("Can I help you with anything else?".into(), "reqmore".into()),
        SystemMove::Bye => ("Thank you for using the Cambridge restaurant system. Goodbye.".into(), "bye".into()),
    }
}

/// Record the effects of a system move on the state: offers enter the
/// history, informed bits are cleared, and the turn counter advances.
pub fn apply_move(state: &mut DialogueState, mv: &SystemMove, acts: &str) {
    let turn = state.turn_index;
    match mv {
        SystemMove::Offer { venue } => {
            state.record_offer(venue, turn);
            state.offer_goal = Some(state.goal.clone());
        }
        SystemMove::Inform { values } => {
            for v in values {
                // informs are built from pending bits; clearing cannot fail
                let _ = state.clear_request(v.item_id, &v.slot);
            }
        }
        _ => {}
    }
    state.last_system_acts = acts.to_string();
    state.turn_index = turn + 1;
}

/// Shared, immutable parts of a dialogue system.
#[derive(Clone)]
pub struct DialogueSystem {
    pub ontology: Arc<Ontology>,
    pub db: Arc<VenueDb>,
    pub scorer: Arc<dyn ActionScorer>,
    pub policy: Arc<dyn Policy>,
    pub candidates: CandidateConfig,
}

impl DialogueSystem {
    pub fn new(ontology: Arc<Ontology>, db: Arc<VenueDb>, scorer: Arc<dyn ActionScorer>) -> Self {
        DialogueSystem {
            ontology,
            db,
            scorer,
            policy: Arc::new(RulePolicy),
            candidates: CandidateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_move: Option<SystemMove>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub executed: Vec<Action>,
    #[serde(default)]
    pub error_flag: bool,
}

/// Result of one [`Session::step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// `None` when the input was the error marker.
    pub system_move: Option<SystemMove>,
    pub text: String,
    pub acts: String,
    pub update: Option<TurnUpdate>,
}

/// One conversation with the system.
pub struct Session {
    pub id: String,
    system: DialogueSystem,
    state: DialogueState,
    transcript: Vec<TranscriptEntry>,
    closed: bool,
}

impl Session {
    /// Open a session; the transcript starts with the welcome message.
    pub fn open(system: DialogueSystem, id: impl Into<String>) -> Self {
        let mut state = DialogueState::new();
        let welcome = SystemMove::Welcome;
        let (text, acts) = realize(&welcome);
        apply_move(&mut state, &welcome, &acts);
        Session {
            id: id.into(),
            system,
            state,
            transcript: vec![TranscriptEntry {
                speaker: Speaker::System,
                text,
                system_move: Some(welcome),
                executed: Vec::new(),
                error_flag: false,
            }],
            closed: false,
        }
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn system(&self) -> &DialogueSystem {
        &self.system
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Mark the system entry at `index` as an error.
    pub fn flag(&mut self, index: usize) -> Result<()> {
        match self.transcript.get_mut(index) {
            Some(entry) if entry.speaker == Speaker::System => {
                entry.error_flag = true;
                Ok(())
            }
            _ => Err(AsuError::Config(format!("transcript entry {index} is not a system turn"))),
        }
    }

    /// Process one user utterance. `gold` feeds the oracle scorer in
    /// simulation and is ignored by trained scorers.
    pub fn step(&mut self, utterance: &str, gold: Option<&[Action]>) -> Result<StepOutcome> {
        if self.closed {
            return Err(AsuError::SessionClosed);
        }
        if utterance.trim().eq_ignore_ascii_case(ERROR_MARKER) {
            let last_system = self.transcript.iter().rposition(|e| e.speaker == Speaker::System);
            if let Some(i) = last_system {
                self.transcript[i].error_flag = true;
            }
            let text = "Thank you, I have noted that my last response was wrong.".to_string();
            self.push_user(utterance, Vec::new());
            self.transcript.push(TranscriptEntry {
                speaker: Speaker::System,
                text: text.clone(),
                system_move: None,
                executed: Vec::new(),
                error_flag: false,
            });
            return Ok(StepOutcome { system_move: None, text, acts: String::new(), update: None });
        }

        let sys = &self.system;
        let update = update_turn(
            sys.scorer.as_ref(),
            &self.state,
            &sys.ontology,
            utterance,
            sys.candidates,
            &TurnContext { gold },
        )?;
        let mut state = update.resulting_state.clone();
        let mv = sys.policy.select_move(&state, &sys.db);
        let (text, acts) = realize(&mv);
        apply_move(&mut state, &mv, &acts);
        self.state = state;
        self.push_user(utterance, update.executed.clone());
        self.transcript.push(TranscriptEntry {
            speaker: Speaker::System,
            text: text.clone(),
            system_move: Some(mv.clone()),
            executed: Vec::new(),
            error_flag: false,
        });
        Ok(StepOutcome { system_move: Some(mv), text, acts, update: Some(update) })
    }

    fn push_user(&mut self, text: &str, executed: Vec<Action>) {
        self.transcript.push(TranscriptEntry {
            speaker: Speaker::User,
            text: text.to_string(),
            system_move: None,
            executed,
            error_flag: false,
        });
    }

    /// Say goodbye and refuse further input.
    pub fn close(&mut self) -> Option<String> {
        if self.closed {
            return None;
        }
        self.closed = true;
        let (text, acts) = realize(&SystemMove::Bye);
        self.state.last_system_acts = acts;
        Some(text)
    }
}
