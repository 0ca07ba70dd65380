//! Surface forms for simulated user utterances: value-substituted patterns
//! retrieved from a corpus, backed by a built-in template bank, plus
//! referring-expression templates for item-targeted requests.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::UserIntent;
use crate::action::Action;
use crate::corpus::AnnotatedCorpus;
use crate::error::{AsuError, Result};
use crate::ontology::{Ontology, Venue};
use crate::scorer::tokenize;
use crate::state::GoalValue;

/// A referring-expression template for one (request slot, reference slot) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferringTemplate {
    /// Appended to a generic request for the slot.
    Suffix(String),
    /// A complete request on its own.
    Full(String),
}

/// Slots a referring expression can use to identify a venue.
pub const REFERENCE_SLOTS: [&str; 4] = ["name", "area", "pricerange", "food"];

const BYE: [&str; 4] = ["thank you goodbye", "thanks bye", "that's all, goodbye", "thank you good bye"];

const PRONOUNS: [&str; 6] = ["it", "its", "they", "them", "their", "there"];

fn builtin_generic(slot: &str) -> &'static [&'static str] {
    match slot {
        "phone" => &["what is the phone number", "phone number", "can i have the phone number", "what's the phone number", "may i have their phone number please"],
        "addr" => &["what is the address", "address", "can i get the address", "what's the address", "address please", "where is it"],
        "postcode" => &["what is the post code", "post code", "can i have the post code", "what's the post code", "what is their post code"],
        "area" => &["what area is it in", "area", "what's the area", "what is the area", "which part of town is it in"],
        "pricerange" => &["what is the price range", "price range", "what's the price range", "how expensive is it"],
        "food" => &["what type of food do they serve", "what kind of food", "what's the food type", "food type", "what type of food"],
        _ => &[],
    }
}

fn builtin_suffixes(reference: &str) -> &'static [&'static str] {
    match reference {
        "name" => &["for {name}", "of {name}", "at {name}"],
        "area" => &["for the place in the {area}", "of the restaurant in the {area}", "for the one in the {area}"],
        "pricerange" => &["of the {pricerange} place", "for the {pricerange} restaurant", "of the {pricerange} one"],
        "food" => &["for the {food} place", "of the {food} restaurant", "for the {food} one"],
        _ => &[],
    }
}

fn builtin_change(slot: &str) -> &'static [&'static str] {
    match slot {
        "food" => &["how about {food}", "what about {food} food", "how about {food} food instead", "i would prefer {food} food", "let's try {food}"],
        "area" => &["how about the {area}", "what about in the {area}", "anything in the {area} instead", "i'd prefer the {area} part of town"],
        "pricerange" => &["how about a {pricerange} one", "what about something {pricerange}", "i'd like something {pricerange} instead", "anything {pricerange}"],
        _ => &[],
    }
}

fn noun_phrases(slots: &BTreeSet<String>) -> Vec<String> {
    let has = |s: &str| slots.contains(s);
    let mut out = Vec::new();
    let adj: String = [has("pricerange").then_some("{pricerange}"), has("food").then_some("{food}")]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ");
    let area_tails: &[&str] = if has("area") { &[" in the {area}", " in the {area} part of town"] } else { &[""] };
    for tail in area_tails {
        let head = if adj.is_empty() { "restaurant".to_string() } else { format!("{adj} restaurant") };
        out.push(format!("{head}{tail}"));
        if has("food") {
            let price = if has("pricerange") { "{pricerange} " } else { "" };
            out.push(format!("{price}restaurant serving {{food}} food{tail}"));
        }
    }
    out
}

fn builtin_inform(slots: &BTreeSet<String>) -> Vec<String> {
    let carriers = ["i am looking for a {}", "i want a {}", "i'd like a {}", "{}", "find me a {}", "is there a {}"];
    let mut out = Vec::new();
    for np in noun_phrases(slots) {
        for c in carriers {
            out.push(c.replace("{}", &np));
        }
    }
    out
}

fn fill(pattern: &str, values: &BTreeMap<String, String>) -> String {
    let mut text = pattern.to_string();
    for (slot, value) in values {
        text = text.replace(&format!("{{{slot}}}"), value);
    }
    text
}

/// Retrieval/template bank for simulated user utterances.
#[derive(Debug, Clone, Default)]
pub struct SurfaceBank {
    inform: BTreeMap<BTreeSet<String>, Vec<String>>,
    generic: BTreeMap<String, Vec<String>>,
    heads: BTreeMap<String, Vec<String>>,
    referring: BTreeMap<(String, String), Vec<ReferringTemplate>>,
}

impl SurfaceBank {
    /// Built-in templates for the Cambridge domain.
    pub fn builtin(ontology: &Ontology) -> Self {
        let mut bank = SurfaceBank::default();
        let slots = ontology.informable_slots();
        for mask in 1u32..(1 << slots.len()) {
            let set: BTreeSet<String> =
                slots.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| s.clone()).collect();
            let mut patterns = builtin_inform(&set);
            if set.len() == 1 {
                let slot = set.iter().next().unwrap();
                patterns.extend(builtin_change(slot).iter().map(|s| s.to_string()));
            }
            bank.inform.insert(set, patterns);
        }
        for req in ontology.requestable_slots() {
            let generic: Vec<String> = builtin_generic(req).iter().map(|s| s.to_string()).collect();
            bank.heads.insert(req.clone(), generic.iter().filter(|g| is_head(g)).cloned().collect());
            bank.generic.insert(req.clone(), generic);
            for reference in REFERENCE_SLOTS {
                let templates = if req == "food" && reference == "name" {
                    vec![ReferringTemplate::Full("What type of food does {name} serve?".into())]
                } else {
                    builtin_suffixes(reference).iter().map(|s| ReferringTemplate::Suffix(s.to_string())).collect()
                };
                bank.referring.insert((req.clone(), reference.to_string()), templates);
            }
        }
        bank
    }

    /// Built-in bank extended with surfaces retrieved from a corpus:
    /// delexicalized inform-only utterances and generic single requests.
    pub fn with_corpus(ontology: &Ontology, corpus: &AnnotatedCorpus) -> Self {
        let mut bank = SurfaceBank::builtin(ontology);
        bank.add_corpus(corpus);
        bank
    }

    pub fn add_corpus(&mut self, corpus: &AnnotatedCorpus) {
        for turn in &corpus.turns {
            let actions = &turn.intended_actions;
            if actions.is_empty() {
                continue;
            }
            let utterance = turn.user_utterance.to_lowercase();
            if actions.iter().all(Action::is_inform) {
                let mut pattern = format!(" {} ", utterance);
                let mut slots = BTreeSet::new();
                let mut ok = true;
                for action in actions {
                    let Action::InformGoal { slot, value: GoalValue::Value(value) } = action else {
                        ok = false;
                        break;
                    };
                    let needle = format!(" {value} ");
                    if pattern.matches(&needle).count() != 1 || !slots.insert(slot.clone()) {
                        ok = false;
                        break;
                    }
                    pattern = pattern.replace(&needle, &format!(" {{{slot}}} "));
                }
                if ok {
                    let entry = self.inform.entry(slots).or_default();
                    let pattern = pattern.trim().to_string();
                    if !entry.contains(&pattern) {
                        entry.push(pattern);
                    }
                }
            } else if let [Action::Request { slot, .. }] = actions.as_slice() {
                let generic = self.generic.entry(slot.clone()).or_default();
                if !generic.contains(&utterance) {
                    generic.push(utterance.clone());
                    if is_head(&utterance) {
                        self.heads.entry(slot.clone()).or_default().push(utterance);
                    }
                }
            }
        }
    }

    pub fn referring_templates(&self, req: &str, reference: &str) -> &[ReferringTemplate] {
        self.referring.get(&(req.to_string(), reference.to_string())).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn generic_requests(&self, slot: &str) -> &[String] {
        self.generic.get(slot).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Replace the generic request surfaces for a slot.
    pub fn set_generic_requests(&mut self, slot: &str, surfaces: Vec<String>) {
        self.heads.insert(slot.to_string(), surfaces.iter().filter(|g| is_head(g)).cloned().collect());
        self.generic.insert(slot.to_string(), surfaces);
    }

    /// Generic request for `slot` with no referring expression.
    pub fn generic_request<R: Rng>(&self, slot: &str, rng: &mut R) -> String {
        self.generic_requests(slot)
            .choose(rng)
            .cloned()
            .unwrap_or_else(|| format!("what is the {}", crate::action::slot_phrase(slot)))
    }

    /// Request for `req` about `venue`, identifying it by `reference`.
    pub fn referring_request<R: Rng>(&self, req: &str, reference: &str, venue: &Venue, rng: &mut R) -> Result<String> {
        let template = self.referring_templates(req, reference).choose(rng).ok_or_else(|| AsuError::MissingTemplate {
            req: req.to_string(),
            reference: reference.to_string(),
        })?;
        let values: BTreeMap<String, String> = REFERENCE_SLOTS
            .iter()
            .filter_map(|s| venue.get(s).map(|v| (s.to_string(), v.to_string())))
            .collect();
        Ok(match template {
            ReferringTemplate::Full(t) => fill(t, &values),
            ReferringTemplate::Suffix(t) => {
                let heads = self.heads.get(req).map(Vec::as_slice).unwrap_or(&[]);
                let head = heads.choose(rng).cloned().unwrap_or_else(|| crate::action::slot_phrase(req).to_string());
                format!("{head} {}", fill(t, &values))
            }
        })
    }

    fn inform_utterance<R: Rng>(&self, values: &BTreeMap<String, String>, rng: &mut R) -> String {
        let key: BTreeSet<String> = values.keys().cloned().collect();
        match self.inform.get(&key).and_then(|p| p.choose(rng)) {
            Some(pattern) => fill(pattern, values),
            None => {
                let parts: Vec<String> = values.values().cloned().collect();
                format!("i want {}", parts.join(" "))
            }
        }
    }

    /// Realize a list of intents. Intents are expected to be homogeneous:
    /// informs, a single request, or bye.
    pub fn generate_utterance<R: Rng>(&self, intents: &[UserIntent], rng: &mut R) -> Result<String> {
        let mut informs = BTreeMap::new();
        let mut parts = Vec::new();
        for intent in intents {
            match intent {
                UserIntent::Inform { slot, value } => {
                    informs.insert(slot.clone(), value.clone());
                }
                UserIntent::Request { slot, venue, reference: Some(reference), .. } => {
                    parts.push(self.referring_request(slot, reference, venue, rng)?)
                }
                UserIntent::Request { slot, reference: None, .. } => parts.push(self.generic_request(slot, rng)),
                UserIntent::Bye => parts.push(BYE.choose(rng).unwrap().to_string()),
            }
        }
        if !informs.is_empty() {
            parts.insert(0, self.inform_utterance(&informs, rng));
        }
        if parts.is_empty() {
            return Err(AsuError::Empty("intents"));
        }
        Ok(parts.join(" and "))
    }
}

fn is_head(surface: &str) -> bool {
    !tokenize(surface).iter().any(|t| PRONOUNS.contains(&t.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusTurn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zizzi() -> Venue {
        Venue::new("zizzi", [("pricerange", "cheap"), ("food", "italian"), ("area", "center")])
    }

    fn bank_with_generic(slot: &str, generic: &str) -> SurfaceBank {
        let mut bank = SurfaceBank::builtin(&Ontology::cambridge());
        bank.set_generic_requests(slot, vec![generic.to_string()]);
        bank
    }

    #[test]
    fn food_by_name_is_a_full_template() {
        let bank = SurfaceBank::builtin(&Ontology::cambridge());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let text = bank.referring_request("food", "name", &zizzi(), &mut rng).unwrap();
        assert_eq!(text, "What type of food does zizzi serve?");
    }

    #[test]
    fn suffix_templates_concatenate_with_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bank = bank_with_generic("pricerange", "price range");
        let candidates: BTreeSet<String> = (0..50)
            .map(|_| bank.referring_request("pricerange", "area", &zizzi(), &mut rng).unwrap())
            .collect();
        assert!(candidates.contains("price range for the place in the center"), "{candidates:?}");

        let bank = bank_with_generic("area", "area");
        let candidates: BTreeSet<String> =
            (0..50).map(|_| bank.referring_request("area", "pricerange", &zizzi(), &mut rng).unwrap()).collect();
        assert!(candidates.contains("area of the cheap place"));

        let bank = bank_with_generic("area", "what's the area");
        let candidates: BTreeSet<String> =
            (0..50).map(|_| bank.referring_request("area", "food", &zizzi(), &mut rng).unwrap()).collect();
        assert!(candidates.contains("what's the area for the italian place"));
    }

    #[test]
    fn every_grid_pair_has_a_template() {
        let ontology = Ontology::cambridge();
        let bank = SurfaceBank::builtin(&ontology);
        for req in ontology.requestable_slots() {
            for reference in REFERENCE_SLOTS {
                assert!(!bank.referring_templates(req, reference).is_empty(), "{req} x {reference}");
            }
        }
        assert!(matches!(
            bank.referring_request("signature", "name", &zizzi(), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(AsuError::MissingTemplate { .. })
        ));
    }

    #[test]
    fn corpus_patterns_are_delexicalized() {
        let ontology = Ontology::cambridge();
        let corpus = AnnotatedCorpus {
            turns: vec![CorpusTurn {
                dialogue_id: "d".into(),
                turn_idx: 0,
                system_acts_text: "welcomemsg".into(),
                user_utterance: "i am looking for a cheap italian restaurant".into(),
                intended_actions: vec![Action::inform("food", "italian"), Action::inform("pricerange", "cheap")],
                offers: vec![],
            }],
        };
        let bank = SurfaceBank::with_corpus(&ontology, &corpus);
        let key: BTreeSet<String> = ["food", "pricerange"].iter().map(|s| s.to_string()).collect();
        assert!(bank.inform[&key].contains(&"i am looking for a {pricerange} {food} restaurant".to_string()));
        let values: BTreeMap<String, String> =
            [("food".to_string(), "indian".to_string()), ("pricerange".to_string(), "expensive".to_string())].into();
        let outs: BTreeSet<String> =
            (0..200).map(|i| bank.inform_utterance(&values, &mut ChaCha8Rng::seed_from_u64(i))).collect();
        assert!(outs.contains("i am looking for a expensive indian restaurant"));
    }

    #[test]
    fn generic_request_surface() {
        let bank = SurfaceBank::builtin(&Ontology::cambridge());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let intents = [UserIntent::Request { slot: "phone".into(), venue: zizzi(), reference: None }];
        let text = bank.generate_utterance(&intents, &mut rng).unwrap();
        assert!(builtin_generic("phone").contains(&text.as_str()));
    }

    #[test]
    fn seeded_generation_repeats() {
        let bank = SurfaceBank::builtin(&Ontology::cambridge());
        let intents = [UserIntent::Inform { slot: "food".into(), value: "thai".into() }];
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| bank.generate_utterance(&intents, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }
}
