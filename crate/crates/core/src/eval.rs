//! Simulated and corpus evaluation.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::corpus::{AnnotatedCorpus, CorpusTurn, Replayer};
use crate::error::{AsuError, Result};
use crate::manager::{realize, DialogueSystem, Session, SystemMove};
use crate::ontology::Ontology;
use crate::scorer::{ActionScorer, TurnContext};
use crate::simulator::{sample_scenario, DialogueOutcome, Scenario, Simulator, SimulatorConfig, SurfaceBank, UserTurn};
use crate::state::DialogueState;
use crate::updater::{update_turn, TurnUpdate};

/// Set equality of executed and gold actions.
pub fn turn_correct(executed: &[Action], gold: &[Action]) -> bool {
    let a: BTreeSet<String> = executed.iter().map(|x| x.to_string()).collect();
    let b: BTreeSet<String> = gold.iter().map(|x| x.to_string()).collect();
    a == b
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Table-style simulation statistics. Lengths count user turns; the
/// per-dialogue act counts count gold actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_dialogues: usize,
    pub avg_length: f64,
    pub std_length: f64,
    pub success_rate: f64,
    pub accuracy_all: f64,
    pub accuracy_inform: f64,
    pub accuracy_request: f64,
    pub accuracy_referring: f64,
    pub informs_per_dialogue: f64,
    pub std_informs: f64,
    pub requests_per_dialogue: f64,
    pub std_requests: f64,
    pub n_turns: usize,
    pub n_inform_turns: usize,
    pub n_request_turns: usize,
    pub n_referring_turns: usize,
}

impl Metrics {
    pub fn from_records(records: &[DialogueRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(AsuError::Empty("dialogue records"));
        }
        let (mut turns, mut correct) = (0, 0);
        let (mut inf, mut inf_ok, mut req, mut req_ok, mut refr, mut refr_ok) = (0, 0, 0, 0, 0, 0);
        let mut lengths = Vec::new();
        let mut informs = Vec::new();
        let mut requests = Vec::new();
        let mut successes = 0;
        for record in records {
            successes += usize::from(record.outcome.success);
            lengths.push(record.turns.len() as f64);
            let mut n_inf = 0;
            let mut n_req = 0;
            for t in &record.turns {
                turns += 1;
                correct += usize::from(t.correct);
                n_inf += t.user.gold_actions.iter().filter(|a| a.is_inform()).count();
                n_req += t.user.gold_actions.iter().filter(|a| a.is_request()).count();
                if t.user.gold_actions.is_empty() {
                    continue;
                }
                if t.user.gold_actions.iter().all(Action::is_inform) {
                    inf += 1;
                    inf_ok += usize::from(t.correct);
                } else if t.user.gold_actions.iter().all(Action::is_request) {
                    req += 1;
                    req_ok += usize::from(t.correct);
                }
                if t.user.referring {
                    refr += 1;
                    refr_ok += usize::from(t.correct);
                }
            }
            informs.push(n_inf as f64);
            requests.push(n_req as f64);
        }
        let (avg_length, std_length) = mean_std(&lengths);
        let (informs_per_dialogue, std_informs) = mean_std(&informs);
        let (requests_per_dialogue, std_requests) = mean_std(&requests);
        Ok(Metrics {
            n_dialogues: records.len(),
            avg_length,
            std_length,
            success_rate: ratio(successes, records.len()),
            accuracy_all: ratio(correct, turns),
            accuracy_inform: ratio(inf_ok, inf),
            accuracy_request: ratio(req_ok, req),
            accuracy_referring: ratio(refr_ok, refr),
            informs_per_dialogue,
            std_informs,
            requests_per_dialogue,
            std_requests,
            n_turns: turns,
            n_inform_turns: inf,
            n_request_turns: req,
            n_referring_turns: refr,
        })
    }
}

/// One simulated user turn with the system's reaction, for audit dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTurn {
    pub dialogue_id: String,
    pub turn_idx: usize,
    #[serde(flatten)]
    pub user: UserTurn,
    pub executed: Vec<Action>,
    pub correct: bool,
    pub system_move: SystemMove,
    pub state: DialogueState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    pub scenario: Scenario,
    pub outcome: DialogueOutcome,
    pub turns: Vec<SimulatedTurn>,
}

/// What an observer sees of each simulated turn.
pub struct TurnTrace<'a> {
    pub dialogue_id: &'a str,
    pub turn_idx: usize,
    /// State the user turn was interpreted in.
    pub state_before: &'a DialogueState,
    /// System move preceding the user turn.
    pub previous_move: &'a SystemMove,
    pub user: &'a UserTurn,
    pub update: &'a TurnUpdate,
}

/// Simulation settings shared by every dialogue of a run.
#[derive(Clone)]
pub struct SimulationSetup<'a> {
    pub system: DialogueSystem,
    pub bank: &'a SurfaceBank,
    pub config: SimulatorConfig,
}

pub fn dialogue_id(index: usize) -> String {
    format!("sim-{index:05}")
}

/// Simulate one dialogue. Every user turn is passed to `observe`.
pub fn simulate_dialogue(
    setup: &SimulationSetup<'_>,
    seed: u64,
    id: &str,
    mut observe: impl FnMut(&TurnTrace<'_>),
) -> Result<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = &setup.system;
    let scenario = sample_scenario(&system.ontology, &system.db, &setup.config, &mut rng)?;
    let mut sim = Simulator::new(scenario.clone(), setup.config.clone(), setup.bank);
    let mut session = Session::open(system.clone(), id);
    let mut last = SystemMove::Welcome;
    let mut turns = Vec::new();
    while let Some(user) = sim.next_user_turn(&last, &mut rng)? {
        let state_before = session.state().clone();
        let outcome = session.step(&user.utterance, Some(&user.gold_actions))?;
        let update = outcome.update.ok_or(AsuError::Empty("turn update"))?;
        let mv = outcome.system_move.ok_or(AsuError::Empty("system move"))?;
        observe(&TurnTrace {
            dialogue_id: id,
            turn_idx: turns.len(),
            state_before: &state_before,
            previous_move: &last,
            user: &user,
            update: &update,
        });
        turns.push(SimulatedTurn {
            dialogue_id: id.to_string(),
            turn_idx: turns.len(),
            correct: turn_correct(&update.executed, &user.gold_actions),
            executed: update.executed,
            user,
            system_move: mv.clone(),
            state: session.state().clone(),
        });
        last = mv;
    }
    Ok(DialogueRecord { dialogue_id: id.to_string(), scenario, outcome: sim.outcome(), turns })
}

/// Simulate `n` dialogues in parallel; dialogue `i` uses seed `seed + i`.
pub fn run_simulation(setup: &SimulationSetup<'_>, n: usize, seed: u64) -> Result<(Metrics, Vec<DialogueRecord>)> {
    if n == 0 {
        return Err(AsuError::Empty("simulation size"));
    }
    let records = (0..n)
        .into_par_iter()
        .map(|i| simulate_dialogue(setup, seed.wrapping_add(i as u64), &dialogue_id(i), |_| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok((Metrics::from_records(&records)?, records))
}

/// Flatten simulated dialogues into an annotated corpus (gold actions as
/// the intended actions).
pub fn records_to_corpus(records: &[DialogueRecord]) -> AnnotatedCorpus {
    let mut turns = Vec::new();
    for record in records {
        let mut previous = SystemMove::Welcome;
        for t in &record.turns {
            let offers = match &previous {
                SystemMove::Offer { venue } => vec![venue.clone()],
                _ => Vec::new(),
            };
            turns.push(CorpusTurn {
                dialogue_id: record.dialogue_id.clone(),
                turn_idx: t.turn_idx,
                system_acts_text: realize(&previous).1,
                user_utterance: t.user.utterance.clone(),
                intended_actions: t.user.gold_actions.clone(),
                offers,
            });
            previous = t.system_move.clone();
        }
    }
    AnnotatedCorpus { turns }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Apply gold actions between turns so that errors do not compound.
    #[default]
    Gold,
    /// Apply the scorer's own selections.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub turns: usize,
    pub goal_accuracy: f64,
    pub request_accuracy: f64,
    pub joint_accuracy: f64,
}

/// Per-turn corpus accuracy: a turn counts towards `goal_accuracy` when
/// the selected goal changes equal the gold goal changes, and towards
/// `request_accuracy` when the selected requests equal the gold requests.
pub fn corpus_eval(
    scorer: &dyn ActionScorer,
    corpus: &AnnotatedCorpus,
    ontology: &Ontology,
    system: Option<&DialogueSystem>,
    mode: ReplayMode,
) -> Result<CorpusMetrics> {
    if corpus.is_empty() {
        return Err(AsuError::Empty("corpus"));
    }
    let config = system.map(|s| s.candidates).unwrap_or_default();
    let (mut goal_ok, mut req_ok, mut joint_ok, mut turns) = (0, 0, 0, 0);
    for dialogue in corpus.dialogues() {
        let mut replay = Replayer::new(ontology);
        for turn in dialogue {
            let state = replay.before_user(turn).clone();
            let gold = &turn.intended_actions;
            let ctx = TurnContext { gold: Some(gold) };
            let update = update_turn(scorer, &state, ontology, &turn.user_utterance, config, &ctx)?;
            let split = |xs: &[Action], inform: bool| -> Vec<Action> {
                xs.iter().filter(|a| a.is_inform() == inform).cloned().collect()
            };
            let g = turn_correct(&split(&update.executed, true), &split(gold, true));
            let r = turn_correct(&split(&update.executed, false), &split(gold, false));
            goal_ok += usize::from(g);
            req_ok += usize::from(r);
            joint_ok += usize::from(g && r);
            turns += 1;
            match mode {
                ReplayMode::Gold => replay.after_user(gold)?,
                ReplayMode::Live => replay.set_state(update.resulting_state),
            }
        }
    }
    Ok(CorpusMetrics {
        turns,
        goal_accuracy: ratio(goal_ok, turns),
        request_accuracy: ratio(req_ok, turns),
        joint_accuracy: ratio(joint_ok, turns),
    })
}
