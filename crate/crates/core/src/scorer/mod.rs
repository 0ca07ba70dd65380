//! Binary action-relevance scoring.
//!
//! A scorer maps each candidate's four-part text input to a relevance score
//! in `[0, 1]`. [`RelevanceModel`] is the trainable hashed-feature logistic
//! classifier; [`OracleScorer`] reads gold actions in simulation.

mod features;
mod model;

use serde::{Deserialize, Serialize};

use crate::action::{Action, CandidateInput};

pub use features::{tokenize, FeatureVector, Featurizer, Lexicon};
pub use model::{objective, LinearParams, RelevanceModel, TrainConfig, TrainingReport, MODEL_FORMAT, MODEL_VERSION};

/// The four text fields the classifier sees for one candidate action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScorerInput {
    /// Lexicalized system dialogue acts of the preceding system turn.
    #[serde(rename = "sys")]
    pub system_acts_text: String,
    #[serde(rename = "usr")]
    pub user_utterance: String,
    /// Empty for goal-change actions.
    #[serde(rename = "item")]
    pub item_description: String,
    #[serde(rename = "act")]
    pub action_sentence: String,
}

impl ScorerInput {
    pub fn new(
        system_acts_text: impl AsRef<str>,
        user_utterance: impl AsRef<str>,
        item_description: impl Into<String>,
        action_sentence: impl AsRef<str>,
    ) -> Self {
        ScorerInput {
            system_acts_text: system_acts_text.as_ref().trim().to_lowercase(),
            user_utterance: user_utterance.as_ref().trim().to_lowercase(),
            item_description: item_description.into(),
            action_sentence: action_sentence.as_ref().trim().to_lowercase(),
        }
    }
}

/// Where a training example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleSource {
    Baseline,
    ExtH,
    ExtA,
}

/// A labeled scorer input. Serialized as one JSONL record with the fields
/// `sys, usr, item, act, label, source` plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    #[serde(flatten)]
    pub input: ScorerInput,
    #[serde(with = "label_01")]
    pub label: bool,
    pub source: ExampleSource,
    pub dialogue_id: String,
    pub turn_idx: usize,
    /// Score the mining model gave this example (active learning only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Whether the user turn used a referring expression.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub referring: bool,
}

mod label_01 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// Per-turn information a scorer may consult besides the candidate text.
#[derive(Debug, Clone, Copy, Default)]
pub struct TurnContext<'a> {
    /// Gold actions of the turn, known only in simulation.
    pub gold: Option<&'a [Action]>,
}

/// Anything that assigns a relevance score to candidate actions.
pub trait ActionScorer: Send + Sync {
    fn score(&self, candidate: &CandidateInput, ctx: &TurnContext<'_>) -> f64;

    fn score_all(&self, candidates: &[CandidateInput], ctx: &TurnContext<'_>) -> Vec<f64> {
        candidates.iter().map(|c| self.score(c, ctx)).collect()
    }

    fn name(&self) -> &str;
}

/// Scores 1 for gold actions and 0 for everything else.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleScorer;

impl OracleScorer {
    pub fn oracle_score(gold: &[Action], action: &Action) -> f64 {
        if gold.contains(action) {
            1.0
        } else {
            0.0
        }
    }
}

impl ActionScorer for OracleScorer {
    fn score(&self, candidate: &CandidateInput, ctx: &TurnContext<'_>) -> f64 {
        ctx.gold.map_or(0.0, |gold| Self::oracle_score(gold, &candidate.action))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Gives every candidate the same score.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl ActionScorer for ConstantScorer {
    fn score(&self, _: &CandidateInput, _: &TurnContext<'_>) -> f64 {
        self.0
    }

    fn name(&self) -> &str {
        "constant"
    }
}

impl ActionScorer for RelevanceModel {
    fn score(&self, candidate: &CandidateInput, _: &TurnContext<'_>) -> f64 {
        self.score_input(&candidate.input)
    }

    fn score_all(&self, candidates: &[CandidateInput], _: &TurnContext<'_>) -> Vec<f64> {
        self.score_batch(candidates.iter().map(|c| &c.input))
    }

    fn name(&self) -> &str {
        "relevance-model"
    }
}
