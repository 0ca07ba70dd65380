//! Persisted session records and their aggregate summary.

use std::collections::BTreeMap;

use asu_core::manager::{Speaker, ERROR_MARKER};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Questionnaire items, in order. The first five are rated 1..=6
/// (strongly disagree .. strongly agree); the last takes a task count.
pub const QUESTIONNAIRE: [&str; 6] = [
    "The system understood me well",
    "The systems' responses were appropriate",
    "I was able to retrieve the information about the venues",
    "The system understood my references to the venues",
    "I would recommend this system to my friend",
    "How many of the 5 tasks were you able to complete?",
];
pub const LIKERT_ITEMS: usize = 5;
pub const LIKERT_MAX: u8 = 6;
pub const TASKS_PER_SESSION: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalChange {
    pub slot: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Followup {
    pub slot: String,
    /// Which recommendation (0-based) the question is about.
    pub venue: usize,
}

/// One task shown to a participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub description: String,
    pub initial: BTreeMap<String, String>,
    pub changes: Vec<GoalChange>,
    pub followups: Vec<Followup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub action: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnDebug {
    pub executed: Vec<String>,
    pub top_scores: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub turn_idx: usize,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: String,
    pub error_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug: Option<TurnDebug>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub answers: Vec<u8>,
    pub submitted_at: String,
}

impl Questionnaire {
    pub fn validate(answers: &[u8]) -> Result<(), ServiceError> {
        if answers.len() != QUESTIONNAIRE.len() {
            return Err(ServiceError::Invalid(format!(
                "expected {} answers, got {}",
                QUESTIONNAIRE.len(),
                answers.len()
            )));
        }
        for (i, &a) in answers[..LIKERT_ITEMS].iter().enumerate() {
            if !(1..=LIKERT_MAX).contains(&a) {
                return Err(ServiceError::Invalid(format!("answer {} must lie in 1..={LIKERT_MAX}, got {a}", i + 1)));
            }
        }
        let tasks = answers[LIKERT_ITEMS];
        if usize::from(tasks) > TASKS_PER_SESSION {
            return Err(ServiceError::Invalid(format!("task count must lie in 0..={TASKS_PER_SESSION}, got {tasks}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub model: String,
    pub task_set: String,
    pub tasks: Vec<Task>,
    pub transcript: Vec<Entry>,
    pub questionnaire: Option<Questionnaire>,
    pub created_at: String,
    pub closed_at: Option<String>,
}

impl SessionRecord {
    /// User turns, not counting error markers.
    pub fn user_turns(&self) -> usize {
        self.transcript
            .iter()
            .filter(|e| e.speaker == Speaker::User && !e.text.trim().eq_ignore_ascii_case(ERROR_MARKER))
            .count()
    }

    pub fn flagged_turns(&self) -> usize {
        self.transcript.iter().filter(|e| e.error_flag).count()
    }

    pub fn is_closed(&self) -> bool {
        self.closed_at.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMean {
    pub statement: String,
    pub mean: Option<f64>,
    pub responses: usize,
}

/// Aggregate over exported sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sessions: usize,
    pub closed_sessions: usize,
    pub turns: usize,
    pub flagged_turns: usize,
    pub avg_turns: f64,
    pub std_turns: f64,
    /// Flagged turns over all turns.
    pub error_rate: f64,
    /// Per-session error rate, averaged over sessions with at least one turn.
    pub mean_session_error_rate: f64,
    pub std_session_error_rate: f64,
    pub questionnaire: Vec<ItemMean>,
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

impl Summary {
    pub fn of(records: &[SessionRecord]) -> Self {
        let turns: Vec<f64> = records.iter().map(|r| r.user_turns() as f64).collect();
        let total_turns = records.iter().map(SessionRecord::user_turns).sum::<usize>();
        let flagged = records.iter().map(SessionRecord::flagged_turns).sum::<usize>();
        let rates: Vec<f64> = records
            .iter()
            .filter(|r| r.user_turns() > 0)
            .map(|r| r.flagged_turns() as f64 / r.user_turns() as f64)
            .collect();
        let (avg_turns, std_turns) = mean_std(&turns);
        let (mean_rate, std_rate) = mean_std(&rates);
        let answered: Vec<&Questionnaire> = records.iter().filter_map(|r| r.questionnaire.as_ref()).collect();
        let questionnaire = QUESTIONNAIRE
            .iter()
            .enumerate()
            .map(|(i, statement)| {
                let xs: Vec<f64> = answered.iter().map(|q| f64::from(q.answers[i])).collect();
                ItemMean {
                    statement: statement.to_string(),
                    mean: (!xs.is_empty()).then(|| mean_std(&xs).0),
                    responses: xs.len(),
                }
            })
            .collect();
        Summary {
            sessions: records.len(),
            closed_sessions: records.iter().filter(|r| r.is_closed()).count(),
            turns: total_turns,
            flagged_turns: flagged,
            avg_turns,
            std_turns,
            error_rate: if total_turns == 0 { 0.0 } else { flagged as f64 / total_turns as f64 },
            mean_session_error_rate: mean_rate,
            std_session_error_rate: std_rate,
            questionnaire,
        }
    }
}
