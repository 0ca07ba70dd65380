//! The tracked dialogue state: user goal plus the history of offered items.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{AsuError, Result};
use crate::ontology::{Ontology, Venue};

/// A goal constraint value; `dontcare` matches every venue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum GoalValue {
    Value(String),
    DontCare,
}

impl GoalValue {
    pub const DONTCARE: &'static str = "dontcare";

    pub fn as_str(&self) -> &str {
        match self {
            GoalValue::Value(v) => v,
            GoalValue::DontCare => Self::DONTCARE,
        }
    }
}

impl From<String> for GoalValue {
    fn from(s: String) -> Self {
        if s == Self::DONTCARE {
            GoalValue::DontCare
        } else {
            GoalValue::Value(s)
        }
    }
}

impl From<&str> for GoalValue {
    fn from(s: &str) -> Self {
        GoalValue::from(s.to_string())
    }
}

impl From<&String> for GoalValue {
    fn from(s: &String) -> Self {
        GoalValue::from(s.clone())
    }
}

impl From<GoalValue> for String {
    fn from(v: GoalValue) -> Self {
        v.as_str().to_string()
    }
}

impl fmt::Display for GoalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Search constraints, at most one value per informable slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserGoal {
    constraints: BTreeMap<String, GoalValue>,
}

impl UserGoal {
    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<GoalValue>,
    {
        UserGoal {
            constraints: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn set(&mut self, slot: impl Into<String>, value: GoalValue) {
        self.constraints.insert(slot.into(), value);
    }

    pub fn get(&self, slot: &str) -> Option<&GoalValue> {
        self.constraints.get(slot)
    }

    pub fn remove(&mut self, slot: &str) -> Option<GoalValue> {
        self.constraints.remove(slot)
    }

    pub fn constraints(&self) -> impl Iterator<Item = (&str, &GoalValue)> {
        self.constraints.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }
}

/// Whether the user has asked for a slot of an item and is still waiting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestBit {
    Off,
    Pending,
}

/// A venue discussed earlier in the dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    /// 1-based position in order of first offer.
    pub item_id: usize,
    pub venue: Venue,
    pub last_mention_turn: usize,
    pub request_bits: BTreeMap<String, RequestBit>,
}

impl HistoryItem {
    /// Flat text rendering fed to the scorer, e.g.
    /// `NAME zizzi AREA center PRICE cheap FOOD italian`.
    pub fn description(&self) -> String {
        item_description(&self.venue)
    }

    pub fn pending_slots(&self) -> impl Iterator<Item = &str> {
        self.request_bits
            .iter()
            .filter(|(_, bit)| **bit == RequestBit::Pending)
            .map(|(slot, _)| slot.as_str())
    }
}

const DESCRIPTION_FIELDS: [(&str, &str); 4] =
    [("NAME", "name"), ("AREA", "area"), ("PRICE", "pricerange"), ("FOOD", "food")];

/// Item description in the fixed NAME/AREA/PRICE/FOOD order. Fields the
/// venue lacks are omitted.
pub fn item_description(venue: &Venue) -> String {
    let mut parts = Vec::with_capacity(8);
    for (label, slot) in DESCRIPTION_FIELDS {
        if let Some(value) = venue.get(slot) {
            parts.push(label.to_string());
            parts.push(value.to_lowercase());
        }
    }
    parts.join(" ")
}

/// Recover `(slot, value)` pairs from an item description.
pub fn parse_item_description(text: &str) -> Vec<(&'static str, String)> {
    let mut fields: Vec<(&'static str, String)> = Vec::new();
    for token in text.split_whitespace() {
        if let Some((_, slot)) = DESCRIPTION_FIELDS.iter().find(|(label, _)| *label == token) {
            fields.push((slot, String::new()));
        } else if let Some((_, value)) = fields.last_mut() {
            if !value.is_empty() {
                value.push(' ');
            }
            value.push_str(token);
        }
    }
    fields
}

/// System beliefs about the user goal and the discussed items.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueState {
    pub goal: UserGoal,
    pub history: Vec<HistoryItem>,
    pub turn_index: usize,
    #[serde(default)]
    pub last_system_acts: String,
    /// Goal in force when the most recent offer was made.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offer_goal: Option<UserGoal>,
}

impl DialogueState {
    pub fn new() -> Self {
        DialogueState::default()
    }

    pub fn item(&self, item_id: usize) -> Option<&HistoryItem> {
        item_id.checked_sub(1).and_then(|i| self.history.get(i))
    }

    fn item_mut(&mut self, item_id: usize) -> Result<&mut HistoryItem> {
        item_id
            .checked_sub(1)
            .and_then(|i| self.history.get_mut(i))
            .ok_or(AsuError::DanglingItem(item_id))
    }

    pub fn item_by_name(&self, name: &str) -> Option<&HistoryItem> {
        self.history.iter().find(|item| item.venue.name == name)
    }

    /// Add the venue to the history on first offer and refresh its mention
    /// turn. Returns the item id.
    pub fn record_offer(&mut self, venue: &Venue, turn: usize) -> usize {
        if let Some(pos) = self.history.iter().position(|item| item.venue.name == venue.name) {
            self.history[pos].last_mention_turn = turn;
            return self.history[pos].item_id;
        }
        let item_id = self.history.len() + 1;
        self.history.push(HistoryItem {
            item_id,
            venue: venue.clone(),
            last_mention_turn: turn,
            request_bits: BTreeMap::new(),
        });
        item_id
    }

    /// Execute one state-update action. Validation happens before any
    /// mutation, so a failed call leaves the state untouched.
    pub fn apply_action(&mut self, action: &Action, ontology: &Ontology, turn: usize) -> Result<()> {
        match action {
            Action::InformGoal { slot, value } => {
                ontology.check_value(slot, value)?;
                self.goal.set(slot.clone(), value.clone());
            }
            Action::Request { item_id, slot } => {
                if !ontology.is_requestable(slot) {
                    return Err(AsuError::UnknownSlot(slot.clone()));
                }
                let item = self.item_mut(*item_id)?;
                item.request_bits.insert(slot.clone(), RequestBit::Pending);
                item.last_mention_turn = turn;
            }
        }
        Ok(())
    }

    /// Switch a pending request bit off once the value has been given.
    pub fn clear_request(&mut self, item_id: usize, slot: &str) -> Result<()> {
        let item = self.item_mut(item_id)?;
        match item.request_bits.get_mut(slot) {
            Some(bit @ RequestBit::Pending) => {
                *bit = RequestBit::Off;
                Ok(())
            }
            _ => Err(AsuError::BitNotPending { item_id, slot: slot.to_string() }),
        }
    }

    /// All `(item_id, slot)` pairs currently pending, by item then slot.
    pub fn pending_requests(&self) -> Vec<(usize, String)> {
        self.history
            .iter()
            .flat_map(|item| item.pending_slots().map(move |slot| (item.item_id, slot.to_string())))
            .collect()
    }
}
