//! Task sets shown to participants, derived from sampled user scenarios so
//! that every task is satisfiable against the venue database.

use std::collections::BTreeMap;

use asu_core::action::slot_phrase;
use asu_core::simulator::{sample_scenario, SimulatorConfig};
use asu_core::{GoalValue, Ontology, VenueDb};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::record::{Followup, GoalChange, Task, TASKS_PER_SESSION};

const ORDINALS: [&str; 4] = ["first", "second", "third", "fourth"];

fn describe(initial: &BTreeMap<String, String>, changes: &[GoalChange], followups: &[Followup]) -> String {
    let constraints: Vec<String> = initial.iter().map(|(s, v)| format!("{}: {v}", slot_phrase(s))).collect();
    let mut text = format!("Ask for a restaurant recommendation ({}).", constraints.join(", "));
    for c in changes {
        text.push_str(&format!(" Then change the {} to {} and get another recommendation.", slot_phrase(&c.slot), c.value));
    }
    let asks: Vec<String> = followups
        .iter()
        .map(|f| format!("the {} of the {} venue", slot_phrase(&f.slot), ORDINALS.get(f.venue).unwrap_or(&"last")))
        .collect();
    if !asks.is_empty() {
        text.push_str(&format!(" Finally ask for {}.", asks.join(" and ")));
    }
    text
}

/// Five tasks: initial constraints, two changes and two follow-up questions.
pub fn generate_tasks(ontology: &Ontology, db: &VenueDb, seed: u64) -> asu_core::Result<Vec<Task>> {
    let config = SimulatorConfig::default();
    (0..TASKS_PER_SESSION)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let scenario = sample_scenario(ontology, db, &config, &mut rng)?;
            let initial: BTreeMap<String, String> = scenario
                .initial
                .constraints()
                .filter_map(|(s, v)| match v {
                    GoalValue::Value(v) => Some((s.to_string(), v.clone())),
                    GoalValue::DontCare => None,
                })
                .collect();
            let changes: Vec<GoalChange> =
                scenario.goal_changes.iter().map(|(slot, value)| GoalChange { slot: slot.clone(), value: value.clone() }).collect();
            let mut followups: Vec<Followup> =
                scenario.followups.iter().map(|f| Followup { slot: f.slot.clone(), venue: f.stage }).collect();
            followups.truncate(2);
            Ok(Task { id: format!("task-{}", i + 1), description: describe(&initial, &changes, &followups), initial, changes, followups })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_satisfiable_tasks() {
        let ontology = Ontology::cambridge();
        let db = VenueDb::cambridge(&ontology);
        let tasks = generate_tasks(&ontology, &db, 0).unwrap();
        assert_eq!(tasks.len(), 5);
        for t in &tasks {
            assert_eq!(t.changes.len(), 2);
            assert!(!t.initial.is_empty() && !t.followups.is_empty());
            assert!(t.description.starts_with("Ask for a restaurant recommendation"));
        }
        assert_eq!(tasks, generate_tasks(&ontology, &db, 0).unwrap());
    }
}
