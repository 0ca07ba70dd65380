//! Action State Update dialogue state tracking.
//!
//! Each user turn, the tracker enumerates every state-modifying action the
//! current state admits (goal changes and requests about previously offered
//! venues), scores each with a binary relevance classifier, and executes
//! the relevant ones. Around that core sit a rule-based dialogue manager,
//! an agenda-based user simulator, training-data builders and evaluation.

pub mod action;
pub mod corpus;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod io;
pub mod manager;
pub mod ontology;
pub mod scorer;
pub mod simulator;
pub mod state;
pub mod updater;

pub use action::{candidate_actions, candidate_count, render_candidates, Action, CandidateConfig, CandidateInput};
pub use error::{AsuError, Result};
pub use manager::{DialogueSystem, RulePolicy, Session, SystemMove};
pub use ontology::{Ontology, Venue, VenueDb};
pub use scorer::{ActionScorer, OracleScorer, RelevanceModel, ScorerInput, TrainingExample};
pub use state::{DialogueState, GoalValue, HistoryItem, RequestBit, UserGoal};
pub use updater::{select, update_turn, ScoredAction, TurnUpdate};
