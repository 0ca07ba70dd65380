//! Domain schema and venue database.
//!
//! The shipped Cambridge restaurant domain lives in `data/` and is compiled
//! into the crate so everything runs offline.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AsuError, Result};
use crate::state::{GoalValue, UserGoal};

const CAMBRIDGE_ONTOLOGY: &str = include_str!("../data/ontology.json");
const CAMBRIDGE_VENUES: &str = include_str!("../data/venues.json");

#[derive(Debug, Deserialize)]
struct OntologyFile {
    informable: serde_json::Map<String, serde_json::Value>,
    requestable: Vec<String>,
    name_slot: String,
}

/// Informable and requestable slots of a slot-filling domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    informable_slots: Vec<String>,
    informable_values: BTreeMap<String, Vec<String>>,
    requestable_slots: Vec<String>,
    name_slot: String,
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

impl Ontology {
    /// Build an ontology, normalizing values and validating the invariants.
    pub fn new(
        informable: Vec<(String, Vec<String>)>,
        requestable: Vec<String>,
        name_slot: impl Into<String>,
    ) -> Result<Self> {
        if informable.is_empty() {
            return Err(AsuError::Schema("no informable slots".into()));
        }
        let mut informable_slots = Vec::with_capacity(informable.len());
        let mut informable_values = BTreeMap::new();
        for (slot, values) in informable {
            let slot = normalize(&slot);
            if values.is_empty() {
                return Err(AsuError::Schema(format!("empty value list for slot {slot:?}")));
            }
            let mut seen = HashSet::new();
            let mut normalized = Vec::with_capacity(values.len());
            for value in values {
                let value = normalize(&value);
                if value.is_empty() {
                    return Err(AsuError::Schema(format!("blank value for slot {slot:?}")));
                }
                if value == GoalValue::DONTCARE {
                    return Err(AsuError::Schema(format!(
                        "slot {slot:?} lists the reserved value \"dontcare\""
                    )));
                }
                if !seen.insert(value.clone()) {
                    return Err(AsuError::DuplicateValue { slot, value });
                }
                normalized.push(value);
            }
            if informable_values.insert(slot.clone(), normalized).is_some() {
                return Err(AsuError::Schema(format!("slot {slot:?} listed twice")));
            }
            informable_slots.push(slot);
        }
        let requestable_slots: Vec<String> = requestable.iter().map(|s| normalize(s)).collect();
        let mut seen = HashSet::new();
        for slot in &requestable_slots {
            if !seen.insert(slot) {
                return Err(AsuError::Schema(format!("requestable slot {slot:?} listed twice")));
            }
        }
        Ok(Ontology {
            informable_slots,
            informable_values,
            requestable_slots,
            name_slot: normalize(&name_slot.into()),
        })
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, OntologyParseError> {
        let file: OntologyFile = serde_json::from_str(text).map_err(OntologyParseError::Json)?;
        let mut informable = Vec::with_capacity(file.informable.len());
        for (slot, values) in file.informable {
            let values: Vec<String> = serde_json::from_value(values).map_err(|_| {
                OntologyParseError::Invalid(AsuError::Schema(format!(
                    "values of slot {slot:?} must be an array of strings"
                )))
            })?;
            informable.push((slot, values));
        }
        Ontology::new(informable, file.requestable, file.name_slot).map_err(OntologyParseError::Invalid)
    }

    /// Load an ontology file (`{"informable": {slot: [values]}, "requestable": [..], "name_slot": ..}`).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AsuError::io(path, e))?;
        Ontology::from_json_str(&text).map_err(|e| match e {
            OntologyParseError::Json(source) => AsuError::json(path, source),
            OntologyParseError::Invalid(err) => err,
        })
    }

    /// The shipped Cambridge restaurant ontology.
    pub fn cambridge() -> Self {
        Ontology::from_json_str(CAMBRIDGE_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn informable_slots(&self) -> &[String] {
        &self.informable_slots
    }

    pub fn requestable_slots(&self) -> &[String] {
        &self.requestable_slots
    }

    pub fn name_slot(&self) -> &str {
        &self.name_slot
    }

    /// Values of an informable slot, in file order.
    pub fn values(&self, slot: &str) -> &[String] {
        self.informable_values.get(slot).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_informable_values(&self) -> usize {
        self.informable_values.values().map(Vec::len).sum()
    }

    pub fn is_informable(&self, slot: &str) -> bool {
        self.informable_values.contains_key(slot)
    }

    pub fn is_requestable(&self, slot: &str) -> bool {
        self.requestable_slots.iter().any(|s| s == slot)
    }

    pub fn slot_index(&self, slot: &str) -> Option<usize> {
        self.informable_slots.iter().position(|s| s == slot)
    }

    pub fn requestable_index(&self, slot: &str) -> Option<usize> {
        self.requestable_slots.iter().position(|s| s == slot)
    }

    pub fn value_index(&self, slot: &str, value: &str) -> Option<usize> {
        self.values(slot).iter().position(|v| v == value)
    }

    /// Check that `value` is a legal constraint for `slot`.
    pub fn check_value(&self, slot: &str, value: &GoalValue) -> Result<()> {
        if !self.is_informable(slot) {
            return Err(AsuError::UnknownSlot(slot.to_string()));
        }
        match value {
            GoalValue::DontCare => Ok(()),
            GoalValue::Value(v) if self.value_index(slot, v).is_some() => Ok(()),
            GoalValue::Value(v) => Err(AsuError::UnknownValue {
                slot: slot.to_string(),
                value: v.clone(),
            }),
        }
    }

    /// Every informable value together with its slot, in ontology order.
    pub fn slot_values(&self) -> impl Iterator<Item = (&str, &str)> {
        self.informable_slots.iter().flat_map(move |slot| {
            self.values(slot).iter().map(move |v| (slot.as_str(), v.as_str()))
        })
    }
}

/// Failure while parsing an ontology document held in memory.
#[derive(Debug, thiserror::Error)]
pub enum OntologyParseError {
    #[error(transparent)]
    Json(serde_json::Error),
    #[error(transparent)]
    Invalid(AsuError),
}

/// A restaurant in the searchable database.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Venue {
    pub name: String,
    /// Informable attributes plus requestable-only fields (phone, addr, postcode).
    #[serde(flatten)]
    pub attributes: BTreeMap<String, String>,
}

impl Venue {
    pub fn new<I, K, V>(name: impl Into<String>, attributes: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Venue {
            name: name.into(),
            attributes: attributes.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Value of any field, including `name`.
    pub fn get(&self, slot: &str) -> Option<&str> {
        if slot == "name" {
            return Some(&self.name);
        }
        self.attributes.get(slot).map(String::as_str)
    }

    /// Whether this venue satisfies every constraint of `goal`.
    pub fn matches(&self, goal: &UserGoal) -> bool {
        goal.constraints().all(|(slot, value)| match value {
            GoalValue::DontCare => true,
            GoalValue::Value(v) => self.get(slot) == Some(v.as_str()),
        })
    }
}

/// Ordered venue database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VenueDb {
    venues: Vec<Venue>,
}

impl VenueDb {
    /// Validate venues against the ontology: each informable field must be a
    /// known value and names must be unique.
    pub fn new(venues: Vec<Venue>, ontology: &Ontology) -> Result<Self> {
        let mut names = HashSet::new();
        let venues: Vec<Venue> = venues
            .into_iter()
            .map(|v| Venue {
                name: normalize(&v.name),
                attributes: v.attributes.into_iter().map(|(k, val)| (normalize(&k), normalize(&val))).collect(),
            })
            .collect();
        for venue in &venues {
            if venue.name.is_empty() {
                return Err(AsuError::Schema("venue with empty name".into()));
            }
            if !names.insert(venue.name.clone()) {
                return Err(AsuError::Schema(format!("duplicate venue name {:?}", venue.name)));
            }
            for slot in ontology.informable_slots() {
                let value = venue.get(slot).ok_or_else(|| {
                    AsuError::Schema(format!("venue {:?} has no {slot:?} field", venue.name))
                })?;
                if ontology.value_index(slot, value).is_none() {
                    return Err(AsuError::UnknownValue {
                        slot: slot.clone(),
                        value: value.to_string(),
                    });
                }
            }
        }
        Ok(VenueDb { venues })
    }

    pub fn load(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AsuError::io(path, e))?;
        let venues: Vec<Venue> = serde_json::from_str(&text).map_err(|e| AsuError::json(path, e))?;
        VenueDb::new(venues, ontology)
    }

    /// The shipped Cambridge venue fixture.
    pub fn cambridge(ontology: &Ontology) -> Self {
        let venues: Vec<Venue> = serde_json::from_str(CAMBRIDGE_VENUES).expect("bundled venues parse");
        VenueDb::new(venues, ontology).expect("bundled venues are valid")
    }

    pub fn venues(&self) -> &[Venue] {
        &self.venues
    }

    pub fn len(&self) -> usize {
        self.venues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.venues.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Option<&Venue> {
        self.venues.iter().find(|v| v.name == name)
    }

    /// Venues satisfying every constraint of `goal`, in database order.
    pub fn query(&self, goal: &UserGoal) -> Vec<&Venue> {
        self.venues.iter().filter(|v| v.matches(goal)).collect()
    }
}
