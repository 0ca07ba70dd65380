//! Agenda-based simulated user. A [`Scenario`] fixes the initial
//! constraints, a sequence of goal changes (one elicited venue per stage)
//! and follow-up requests about venues elicited earlier; [`Simulator`]
//! plays it out against the system's moves.

mod surface;

pub use surface::{ReferringTemplate, SurfaceBank, REFERENCE_SLOTS};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{AsuError, Result};
use crate::manager::SystemMove;
use crate::ontology::{Ontology, Venue, VenueDb};
use crate::state::{GoalValue, UserGoal};

const SAMPLING_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    /// Inclusive range of goal changes per dialogue.
    pub goal_changes: (usize, usize),
    /// Inclusive range of follow-up requests per dialogue.
    pub followups: (usize, usize),
    /// Follow-ups are spread over at least this many elicited venues
    /// (capped by the number of stages).
    pub min_followup_venues: usize,
    /// Only ask about the venue elicited last.
    pub followups_last_stage_only: bool,
    /// Allow referring expressions; when off every request is generic.
    pub referring: bool,
    /// Probability of a generic request when the referent is the venue the
    /// system mentioned last.
    pub generic_prob: f64,
    /// Probability of informing the initial constraints over two turns.
    pub split_initial_prob: f64,
    pub turn_cap: usize,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            goal_changes: (2, 2),
            followups: (2, 4),
            min_followup_venues: 2,
            followups_last_stage_only: false,
            referring: true,
            generic_prob: 0.5,
            split_initial_prob: 0.25,
            turn_cap: 30,
        }
    }
}

impl SimulatorConfig {
    /// Single-venue users with generic requests only, the shape of
    /// restaurant-search corpora collected without referring expressions.
    pub fn corpus_style() -> Self {
        SimulatorConfig {
            goal_changes: (0, 1),
            followups: (1, 3),
            min_followup_venues: 1,
            followups_last_stage_only: true,
            referring: false,
            ..SimulatorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.goal_changes.0 > self.goal_changes.1 || self.followups.0 > self.followups.1 {
            return Err(AsuError::Config("empty range in simulator config".into()));
        }
        if !(0.0..=1.0).contains(&self.generic_prob) || !(0.0..=1.0).contains(&self.split_initial_prob) {
            return Err(AsuError::Config("simulator probabilities must lie in [0, 1]".into()));
        }
        if self.turn_cap == 0 {
            return Err(AsuError::Config("turn cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Followup {
    /// Requestable slot to ask for.
    pub slot: String,
    /// Index of the goal stage whose venue is the referent.
    pub stage: usize,
    /// How the referent is described: `name` or an informable slot.
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub initial: UserGoal,
    pub goal_changes: Vec<(String, String)>,
    pub followups: Vec<Followup>,
    /// Venues the rule policy is expected to offer, one per stage.
    pub expected_venues: Vec<String>,
    pub turn_cap: usize,
}

impl Scenario {
    /// Cumulative goal of every stage.
    pub fn stage_goals(&self) -> Vec<UserGoal> {
        let mut goal = self.initial.clone();
        let mut out = vec![goal.clone()];
        for (slot, value) in &self.goal_changes {
            goal.set(slot.clone(), GoalValue::Value(value.clone()));
            out.push(goal.clone());
        }
        out
    }
}

/// The venue the rule policy offers for `goal` given earlier offers.
fn expected_offer<'a>(db: &'a VenueDb, goal: &UserGoal, offered: &[String]) -> Option<&'a Venue> {
    let matches = db.query(goal);
    matches.iter().find(|v| !offered.contains(&v.name)).or(matches.first()).copied()
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi)
}

/// Sample a scenario whose every stage is satisfiable, elicits a new venue,
/// and whose referring properties are unambiguous among the elicited venues.
pub fn sample_scenario<R: Rng>(ontology: &Ontology, db: &VenueDb, config: &SimulatorConfig, rng: &mut R) -> Result<Scenario> {
    if db.is_empty() {
        return Err(AsuError::Empty("venue database"));
    }
    config.validate()?;
    for _ in 0..SAMPLING_ATTEMPTS {
        if let Some(s) = try_sample(ontology, db, config, rng) {
            return Ok(s);
        }
    }
    Err(AsuError::ScenarioSampling(SAMPLING_ATTEMPTS))
}

fn try_sample<R: Rng>(ontology: &Ontology, db: &VenueDb, config: &SimulatorConfig, rng: &mut R) -> Option<Scenario> {
    let slots = ontology.informable_slots();
    let seed_venue = db.venues().choose(rng)?;
    let mut initial = UserGoal::default();
    while initial.is_empty() {
        for slot in slots {
            if rng.gen_bool(0.5) {
                initial.set(slot.clone(), GoalValue::Value(seed_venue.get(slot)?.to_string()));
            }
        }
    }

    let mut goal = initial.clone();
    let mut expected = vec![expected_offer(db, &goal, &[])?.name.clone()];
    let mut changes = Vec::new();
    for _ in 0..range(rng, config.goal_changes) {
        let slot = slots.choose(rng)?.clone();
        let mut relaxed = goal.clone();
        relaxed.remove(&slot);
        let current = goal.get(&slot).map(|v| v.as_str().to_string());
        let options: Vec<&Venue> = db
            .query(&relaxed)
            .into_iter()
            .filter(|v| v.get(&slot).map(str::to_string) != current)
            .collect();
        let value = options.choose(rng)?.get(&slot)?.to_string();
        goal.set(slot.clone(), GoalValue::Value(value.clone()));
        let venue = expected_offer(db, &goal, &expected)?;
        if expected.contains(&venue.name) {
            return None;
        }
        expected.push(venue.name.clone());
        changes.push((slot, value));
    }

    let venues: Vec<&Venue> = expected.iter().map(|n| db.by_name(n)).collect::<Option<_>>()?;
    let stages = venues.len();
    let n_followups = range(rng, config.followups);
    let mut stage_order: Vec<usize> = if config.followups_last_stage_only {
        vec![stages - 1; n_followups]
    } else {
        let mut distinct: Vec<usize> = (0..stages).collect();
        distinct.shuffle(rng);
        distinct.truncate(config.min_followup_venues.min(stages));
        while distinct.len() < n_followups {
            distinct.push(rng.gen_range(0..stages));
        }
        distinct.truncate(n_followups);
        distinct.shuffle(rng);
        distinct
    };
    if stage_order.len() < config.min_followup_venues.min(stages) && !config.followups_last_stage_only {
        return None;
    }

    let mut followups = Vec::new();
    let mut asked = BTreeSet::new();
    for stage in stage_order.drain(..) {
        let venue = venues[stage];
        let free: Vec<&String> =
            ontology.requestable_slots().iter().filter(|s| !asked.contains(&(stage, (*s).clone()))).collect();
        let slot = (*free.choose(rng)?).clone();
        asked.insert((stage, slot.clone()));
        let references: Vec<&str> = REFERENCE_SLOTS
            .iter()
            .copied()
            .filter(|r| *r != slot)
            .filter(|r| {
                let value = venue.get(r);
                value.is_some() && venues.iter().filter(|v| v.get(r) == value).count() == 1
            })
            .collect();
        let reference = references.choose(rng)?.to_string();
        followups.push(Followup { slot, stage, reference });
    }

    Some(Scenario { initial, goal_changes: changes, followups, expected_venues: expected, turn_cap: config.turn_cap })
}

/// A dialogue act of the simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum UserIntent {
    Inform {
        slot: String,
        value: String,
    },
    Request {
        slot: String,
        venue: Venue,
        /// Slot used to describe the venue; `None` for a generic request.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTurn {
    pub intents: Vec<UserIntent>,
    pub utterance: String,
    pub gold_actions: Vec<Action>,
    /// The utterance contains a referring expression.
    pub referring: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub success: bool,
    pub hit_turn_cap: bool,
    pub user_turns: usize,
    pub stages_elicited: usize,
    pub followups_answered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Agenda {
    Start,
    Stage,
    Followup,
    Bye,
    Done,
}

/// Plays one scenario.
pub struct Simulator<'a> {
    scenario: Scenario,
    config: SimulatorConfig,
    bank: &'a SurfaceBank,
    goals: Vec<UserGoal>,
    agenda: Agenda,
    stage: usize,
    elicited: Vec<Venue>,
    followup: usize,
    /// Venue names in first-offer order; position + 1 is the item id.
    history: Vec<String>,
    venues: Vec<Venue>,
    last_mentioned: Option<String>,
    pending: Vec<UserIntent>,
    user_turns: usize,
    hit_cap: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: Scenario, config: SimulatorConfig, bank: &'a SurfaceBank) -> Self {
        let goals = scenario.stage_goals();
        Simulator {
            scenario,
            config,
            bank,
            goals,
            agenda: Agenda::Start,
            stage: 0,
            elicited: Vec::new(),
            followup: 0,
            history: Vec::new(),
            venues: Vec::new(),
            last_mentioned: None,
            pending: Vec::new(),
            user_turns: 0,
            hit_cap: false,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn is_finished(&self) -> bool {
        self.agenda == Agenda::Done
    }

    pub fn outcome(&self) -> DialogueOutcome {
        let stages_elicited = self.elicited.len();
        let followups_answered = if self.agenda >= Agenda::Followup { self.followup } else { 0 };
        DialogueOutcome {
            success: stages_elicited == self.goals.len() && followups_answered == self.scenario.followups.len(),
            hit_turn_cap: self.hit_cap,
            user_turns: self.user_turns,
            stages_elicited,
            followups_answered,
        }
    }

    fn observe(&mut self, mv: &SystemMove) {
        match mv {
            SystemMove::Offer { venue } => {
                if !self.history.contains(&venue.name) {
                    self.history.push(venue.name.clone());
                    self.venues.push(venue.clone());
                }
                self.last_mentioned = Some(venue.name.clone());
            }
            SystemMove::Inform { values } => {
                if let Some(last) = values.last() {
                    self.last_mentioned = Some(last.name.clone());
                }
            }
            _ => {}
        }
    }

    fn item_id(&self, name: &str) -> Option<usize> {
        self.history.iter().position(|n| n == name).map(|p| p + 1)
    }

    fn informs(goal: &UserGoal, slots: impl IntoIterator<Item = String>) -> Vec<UserIntent> {
        slots
            .into_iter()
            .filter_map(|slot| {
                let value = goal.get(&slot)?.as_str().to_string();
                Some(UserIntent::Inform { slot, value })
            })
            .collect()
    }

    /// Informs correcting the constraints an offer or refusal violated.
    fn corrections(&self, mv: &SystemMove) -> Option<Vec<UserIntent>> {
        let goal = &self.goals[self.stage];
        let wrong: Vec<String> = match mv {
            SystemMove::Offer { venue } => goal
                .constraints()
                .filter(|(slot, value)| venue.get(slot) != Some(value.as_str()))
                .map(|(slot, _)| slot.to_string())
                .collect(),
            SystemMove::CantHelp { constraints } => goal
                .constraints()
                .filter(|(slot, value)| !constraints.iter().any(|(s, v)| s == slot && v == *value))
                .map(|(slot, _)| slot.to_string())
                .collect(),
            _ => return None,
        };
        (!wrong.is_empty()).then(|| Self::informs(goal, wrong))
    }

    fn followup_intent<R: Rng>(&self, rng: &mut R) -> UserIntent {
        let f = &self.scenario.followups[self.followup];
        let venue = self.elicited[f.stage].clone();
        let is_last = self.last_mentioned.as_deref() == Some(venue.name.as_str());
        let reference = if !self.config.referring || (is_last && rng.gen_bool(self.config.generic_prob)) {
            None
        } else {
            let value = venue.get(&f.reference);
            let unique = self.venues.iter().filter(|v| v.get(&f.reference) == value).count() == 1;
            Some(if unique { f.reference.clone() } else { "name".to_string() })
        };
        UserIntent::Request { slot: f.slot.clone(), venue, reference }
    }

    fn answered(&self, mv: &SystemMove) -> bool {
        let Some(UserIntent::Request { slot, venue, .. }) = self.pending.first() else {
            return false;
        };
        match mv {
            SystemMove::Inform { values } => values
                .iter()
                .any(|v| v.name == venue.name && &v.slot == slot && venue.get(slot) == Some(v.value.as_str())),
            _ => false,
        }
    }

    /// Next agenda item after the current stage has been satisfied.
    fn after_stage<R: Rng>(&mut self, rng: &mut R) -> Vec<UserIntent> {
        if self.stage < self.goals.len() {
            let (slot, value) = self.scenario.goal_changes[self.stage - 1].clone();
            return vec![UserIntent::Inform { slot, value }];
        }
        self.agenda = Agenda::Followup;
        self.next_followup(rng)
    }

    fn next_followup<R: Rng>(&mut self, rng: &mut R) -> Vec<UserIntent> {
        if self.followup < self.scenario.followups.len() {
            vec![self.followup_intent(rng)]
        } else {
            self.agenda = Agenda::Bye;
            vec![UserIntent::Bye]
        }
    }

    /// React to the system's last move. Returns `None` once the dialogue is
    /// over (after the goodbye, or when the turn cap is exhausted).
    pub fn next_user_turn<R: Rng>(&mut self, last_move: &SystemMove, rng: &mut R) -> Result<Option<UserTurn>> {
        self.observe(last_move);
        let intents = match self.agenda {
            Agenda::Done => return Ok(None),
            Agenda::Bye => {
                self.agenda = Agenda::Done;
                return Ok(None);
            }
            Agenda::Start => {
                self.agenda = Agenda::Stage;
                let slots: Vec<String> = self.goals[0].constraints().map(|(s, _)| s.to_string()).collect();
                let cut = if slots.len() > 1 && rng.gen_bool(self.config.split_initial_prob) {
                    rng.gen_range(1..slots.len())
                } else {
                    slots.len()
                };
                Self::informs(&self.goals[0], slots[..cut].to_vec())
            }
            Agenda::Stage => match last_move {
                SystemMove::Offer { venue } if venue.matches(&self.goals[self.stage]) => {
                    self.elicited.push(venue.clone());
                    self.stage += 1;
                    self.after_stage(rng)
                }
                mv => self.corrections(mv).unwrap_or_else(|| self.pending.clone()),
            },
            Agenda::Followup => {
                if self.answered(last_move) {
                    self.followup += 1;
                    self.next_followup(rng)
                } else {
                    vec![self.followup_intent(rng)]
                }
            }
        };

        if self.user_turns >= self.scenario.turn_cap {
            self.hit_cap = true;
            self.agenda = Agenda::Done;
            return Ok(None);
        }
        self.user_turns += 1;
        let utterance = self.bank.generate_utterance(&intents, rng)?;
        let mut gold = Vec::new();
        let mut referring = false;
        for intent in &intents {
            match intent {
                UserIntent::Inform { slot, value } => gold.push(Action::inform(slot.clone(), value.as_str())),
                UserIntent::Request { slot, venue, reference } => {
                    let item_id = self.item_id(&venue.name).ok_or_else(|| AsuError::DanglingItem(0))?;
                    gold.push(Action::request(item_id, slot.clone()));
                    referring |= reference.is_some();
                }
                UserIntent::Bye => {}
            }
        }
        self.pending = intents.clone();
        Ok(Some(UserTurn { intents, utterance, gold_actions: gold, referring }))
    }
}

impl PartialOrd for Agenda {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some((*self as u8).cmp(&(*other as u8)))
    }
}
