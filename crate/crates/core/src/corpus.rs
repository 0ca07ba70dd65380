//! Annotated dialogue corpora: canonical JSONL turns and DSTC2 import.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{AsuError, Result};
use crate::io::{read_jsonl, write_jsonl};
use crate::ontology::{Ontology, Venue, VenueDb};
use crate::state::{DialogueState, GoalValue};
use crate::updater::apply_all;

/// One user turn with the system turn preceding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTurn {
    pub dialogue_id: String,
    pub turn_idx: usize,
    pub system_acts_text: String,
    pub user_utterance: String,
    pub intended_actions: Vec<Action>,
    /// Venues the preceding system turn offered, needed to rebuild the
    /// dialogue history on replay.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offers: Vec<Venue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCorpus {
    pub turns: Vec<CorpusTurn>,
}

impl AnnotatedCorpus {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(AnnotatedCorpus { turns: read_jsonl(path.as_ref())? })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path.as_ref(), &self.turns)
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Turns grouped by consecutive dialogue id.
    pub fn dialogues(&self) -> Vec<&[CorpusTurn]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.turns.len() {
            if i == self.turns.len() || self.turns[i].dialogue_id != self.turns[start].dialogue_id {
                if i > start {
                    out.push(&self.turns[start..i]);
                }
                start = i;
            }
        }
        out
    }

    pub fn action_count(&self) -> usize {
        self.turns.iter().map(|t| t.intended_actions.len()).sum()
    }

    /// Check that every intended action names ontology slots and values.
    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        for turn in &self.turns {
            for action in &turn.intended_actions {
                match action {
                    Action::InformGoal { slot, value } => ontology.check_value(slot, value)?,
                    Action::Request { slot, .. } if !ontology.is_requestable(slot) => {
                        return Err(AsuError::UnknownSlot(slot.clone()))
                    }
                    Action::Request { .. } => {}
                }
            }
        }
        Ok(())
    }
}

/// Rebuilds the system state before each user turn of a corpus dialogue,
/// applying the gold actions between turns.
pub struct Replayer<'a> {
    ontology: &'a Ontology,
    state: DialogueState,
}

impl<'a> Replayer<'a> {
    pub fn new(ontology: &'a Ontology) -> Self {
        Replayer { ontology, state: DialogueState::new() }
    }

    /// Enter the system side of `turn` and return the state the user turn
    /// is interpreted in.
    pub fn before_user(&mut self, turn: &CorpusTurn) -> &DialogueState {
        let t = self.state.turn_index;
        for venue in &turn.offers {
            self.state.record_offer(venue, t);
        }
        self.state.last_system_acts = turn.system_acts_text.clone();
        self.state.turn_index = t + 1;
        &self.state
    }

    /// Apply the given actions for the user side of the turn.
    pub fn after_user(&mut self, actions: &[Action]) -> Result<()> {
        apply_all(&mut self.state, actions, self.ontology)
    }

    pub fn state(&self) -> &DialogueState {
        &self.state
    }

    pub fn set_state(&mut self, state: DialogueState) {
        self.state = state;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub dialogues: usize,
    pub turns: usize,
    pub actions: usize,
    pub skipped_turns: usize,
    pub skip_reasons: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct DstcAct {
    act: String,
    #[serde(default)]
    slots: Vec<Vec<serde_json::Value>>,
}

#[derive(Debug, Deserialize)]
struct LogTurn {
    output: LogOutput,
}

#[derive(Debug, Deserialize)]
struct LogOutput {
    #[serde(rename = "dialog-acts", default)]
    dialog_acts: Vec<DstcAct>,
}

#[derive(Debug, Deserialize)]
struct LogFile {
    #[serde(rename = "session-id")]
    session_id: Option<String>,
    turns: Vec<LogTurn>,
}

#[derive(Debug, Deserialize)]
struct LabelTurn {
    #[serde(default)]
    transcription: String,
    #[serde(default)]
    semantics: LabelSemantics,
}

#[derive(Debug, Default, Deserialize)]
struct LabelSemantics {
    #[serde(default)]
    json: Vec<DstcAct>,
}

#[derive(Debug, Deserialize)]
struct LabelFile {
    turns: Vec<LabelTurn>,
}

fn slot_pairs(act: &DstcAct) -> Vec<(String, String)> {
    act.slots
        .iter()
        .filter_map(|pair| {
            let s = pair.first()?.as_str()?.to_lowercase();
            let v = match pair.get(1)? {
                serde_json::Value::String(v) => v.to_lowercase(),
                other => other.to_string(),
            };
            Some((s, v))
        })
        .collect()
}

fn lexicalize(acts: &[DstcAct]) -> String {
    let mut parts = Vec::new();
    for act in acts {
        parts.push(act.act.to_lowercase());
        for (s, v) in slot_pairs(act) {
            if s == "slot" {
                parts.push(v);
            } else {
                parts.push(s);
                parts.push(v);
            }
        }
    }
    parts.join(" ")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AsuError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AsuError::json(path, e))
}

fn find_dialogue_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("log.json").is_file() && dir.join("label.json").is_file() {
        out.push(dir.to_path_buf());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| AsuError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for sub in entries {
        find_dialogue_dirs(&sub, out)?;
    }
    Ok(())
}

/// Import DSTC2-format `log.json`/`label.json` pairs found under `log_dir`.
///
/// Informs map to goal changes, requests to a request on the most recently
/// offered item. Turns whose annotation cannot be mapped are skipped and
/// reported; their offers carry over to the next kept turn.
pub fn import_dstc2(log_dir: &Path, ontology: &Ontology, db: &VenueDb) -> Result<(AnnotatedCorpus, ImportReport)> {
    let mut dirs = Vec::new();
    find_dialogue_dirs(log_dir, &mut dirs)?;
    let mut corpus = AnnotatedCorpus::default();
    let mut report = ImportReport::default();
    for dir in dirs {
        let log: LogFile = read_json(&dir.join("log.json"))?;
        let label: LabelFile = read_json(&dir.join("label.json"))?;
        let dialogue_id = log
            .session_id
            .clone()
            .unwrap_or_else(|| dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        report.dialogues += 1;

        let mut history = DialogueState::new();
        let mut carried: Vec<Venue> = Vec::new();
        let mut last_offered: Option<usize> = None;
        for (idx, (log_turn, label_turn)) in log.turns.iter().zip(&label.turns).enumerate() {
            let acts = &log_turn.output.dialog_acts;
            let mut informed: Vec<(String, String)> = Vec::new();
            let mut offered_name = None;
            for act in acts {
                for (s, v) in slot_pairs(act) {
                    match (act.act.as_str(), s.as_str()) {
                        ("offer", "name") => offered_name = Some(v),
                        ("inform", slot) if ontology.is_informable(slot) => informed.push((s, v)),
                        _ => {}
                    }
                }
            }
            if let Some(name) = offered_name {
                let venue = db
                    .by_name(&name)
                    .cloned()
                    .unwrap_or_else(|| Venue::new(name.clone(), informed.iter().cloned()));
                last_offered = Some(history.record_offer(&venue, idx));
                carried.push(venue);
            }

            let mut actions = Vec::new();
            let mut skip: Option<String> = None;
            for act in &label_turn.semantics.json {
                for (s, v) in slot_pairs(act) {
                    match act.act.as_str() {
                        "inform" => {
                            let value = GoalValue::from(v.clone());
                            match ontology.check_value(&s, &value) {
                                Ok(()) => actions.push(Action::InformGoal { slot: s, value }),
                                Err(e) => skip = Some(e.to_string()),
                            }
                        }
                        "request" if s == "slot" => {
                            if !ontology.is_requestable(&v) {
                                skip = Some(AsuError::UnknownSlot(v).to_string());
                            } else if let Some(item_id) = last_offered {
                                actions.push(Action::request(item_id, v));
                            } else {
                                skip = Some(format!("request({v}) before any offer"));
                            }
                        }
                        _ => {}
                    }
                }
            }
            if let Some(reason) = skip {
                report.skipped_turns += 1;
                report.skip_reasons.push(format!("{dialogue_id} turn {idx}: {reason}"));
                continue;
            }
            actions.dedup();
            report.turns += 1;
            report.actions += actions.len();
            corpus.turns.push(CorpusTurn {
                dialogue_id: dialogue_id.clone(),
                turn_idx: idx,
                system_acts_text: lexicalize(acts),
                user_utterance: label_turn.transcription.to_lowercase(),
                intended_actions: actions,
                offers: std::mem::take(&mut carried),
            });
        }
    }
    Ok((corpus, report))
}
