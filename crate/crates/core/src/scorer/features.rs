//! Hashed sparse features over the four scorer input fields.
//!
//! Features are field-tagged unigrams and bigrams, pairwise crosses between
//! utterance n-grams and action-sentence content words, ontology value
//! matches in the utterance, and referent features comparing the item
//! description with what the utterance mentions. Indices are FNV-1a hashes
//! reduced to `2^bits` buckets; collisions are accepted.

use std::collections::{HashMap, HashSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::ScorerInput;
use crate::ontology::Ontology;
use crate::state::parse_item_description;

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sparse feature vector: `(bucket, value)` pairs, possibly repeated.
pub type FeatureVector = Vec<(u32, f32)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LexEntry {
    slot: String,
    value: String,
    tokens: Vec<String>,
}

/// Informable values, tokenized, for phrase matching in text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(String, Vec<String>)>", into = "Vec<(String, Vec<String>)>")]
pub struct Lexicon {
    entries: Vec<LexEntry>,
    by_first: HashMap<String, Vec<usize>>,
}

impl From<Vec<(String, Vec<String>)>> for Lexicon {
    fn from(slots: Vec<(String, Vec<String>)>) -> Self {
        let mut entries = Vec::new();
        for (slot, values) in slots {
            for value in values {
                let tokens = tokenize(&value);
                if !tokens.is_empty() {
                    entries.push(LexEntry { slot: slot.clone(), value, tokens });
                }
            }
        }
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_first.entry(e.tokens[0].clone()).or_default().push(i);
        }
        Lexicon { entries, by_first }
    }
}

impl From<Lexicon> for Vec<(String, Vec<String>)> {
    fn from(lex: Lexicon) -> Self {
        let mut out: Vec<(String, Vec<String>)> = Vec::new();
        for e in lex.entries {
            match out.last_mut() {
                Some((slot, values)) if *slot == e.slot => values.push(e.value),
                _ => out.push((e.slot, vec![e.value])),
            }
        }
        out
    }
}

/// A matched value occurrence: lexicon entry and token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    entry: usize,
    start: usize,
    end: usize,
}

impl Lexicon {
    pub fn from_ontology(ontology: &Ontology) -> Self {
        ontology
            .informable_slots()
            .iter()
            .map(|slot| (slot.clone(), ontology.values(slot).to_vec()))
            .collect::<Vec<_>>()
            .into()
    }

    /// Greedy left-to-right longest-match of values in `tokens`.
    fn matches(&self, tokens: &[String]) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = self.by_first.get(&tokens[i]).and_then(|cands| {
                cands
                    .iter()
                    .filter(|&&e| tokens[i..].starts_with(&self.entries[e].tokens))
                    .max_by_key(|&&e| self.entries[e].tokens.len())
            });
            match best {
                Some(&e) => {
                    let end = i + self.entries[e].tokens.len();
                    spans.push(Span { entry: e, start: i, end });
                    i = end;
                }
                None => i += 1,
            }
        }
        spans
    }

    fn entry(&self, i: usize) -> &LexEntry {
        &self.entries[i]
    }
}

fn find_seq(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

const ACTION_STOPWORDS: [&str; 8] = ["the", "user", "of", "this", "restaurant", "for", "wants", "asks"];

struct Sink {
    mask: u64,
    out: FeatureVector,
}

impl Sink {
    fn add(&mut self, parts: &[&str], value: f32) {
        let mut h = FnvHasher::default();
        for p in parts {
            h.write(p.as_bytes());
            h.write_u8(0xff);
        }
        self.out.push(((h.finish() & self.mask) as u32, value));
    }
}

/// Maps scorer inputs to hashed sparse vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub hash_bits: u32,
    pub lexicon: Lexicon,
}

impl Featurizer {
    pub fn new(hash_bits: u32, lexicon: Lexicon) -> Self {
        assert!((1..=30).contains(&hash_bits), "hash_bits must be in 1..=30");
        Featurizer { hash_bits, lexicon }
    }

    pub fn dim(&self) -> usize {
        1 << self.hash_bits
    }

    pub fn featurize(&self, input: &ScorerInput) -> FeatureVector {
        let mut sink = Sink { mask: (1u64 << self.hash_bits) - 1, out: Vec::with_capacity(160) };
        let usr = tokenize(&input.user_utterance);
        let sys = tokenize(&input.system_acts_text);
        let act = tokenize(&input.action_sentence);
        let item = parse_item_description(&input.item_description);
        let is_request = !item.is_empty() || act.iter().any(|t| t == "asks");
        let kind = if is_request { "r" } else { "g" };

        sink.add(&["bias", kind], 1.0);
        for t in &usr {
            sink.add(&["u", t], 1.0);
        }
        for w in usr.windows(2) {
            sink.add(&["uu", &w[0], &w[1]], 1.0);
        }
        for t in &sys {
            sink.add(&["s", t], 1.0);
        }
        for t in &act {
            sink.add(&["a", t], 1.0);
        }
        for w in act.windows(2) {
            sink.add(&["aa", &w[0], &w[1]], 1.0);
        }
        for (slot, value) in &item {
            sink.add(&["i", slot, value], 1.0);
        }

        // utterance n-grams crossed with action content words
        let content: Vec<&str> = act
            .iter()
            .map(String::as_str)
            .filter(|t| !ACTION_STOPWORDS.contains(t))
            .collect();
        for t in &usr {
            sink.add(&["k", kind, t], 1.0);
            for a in &content {
                sink.add(&["x", t, a], 1.0);
            }
        }
        for w in usr.windows(2) {
            sink.add(&["kk", kind, &w[0], &w[1]], 1.0);
            for a in &content {
                sink.add(&["xx", &w[0], &w[1], a], 1.0);
            }
        }
        if usr.is_empty() {
            sink.add(&["empty_usr", kind], 1.0);
        }

        let usr_set: HashSet<&str> = usr.iter().map(String::as_str).collect();
        let overlap = content.iter().filter(|a| usr_set.contains(*a)).count();
        if overlap > 0 {
            sink.add(&["ov_ua", kind], overlap as f32);
        }

        let spans = self.lexicon.matches(&usr);
        for span in &spans {
            let e = self.lexicon.entry(span.entry);
            sink.add(&["uv", &e.slot, &e.value], 1.0);
            sink.add(&["uvs", kind, &e.slot], 1.0);
        }

        if is_request {
            self.request_features(&mut sink, &usr, &sys, &item, &spans, overlap > 0);
        } else {
            self.goal_features(&mut sink, &usr, &sys, &act, &spans);
        }
        sink.out
    }

    fn context<'t>(tokens: &'t [String], start: usize, end: usize) -> (&'t str, &'t str) {
        let prev = if start == 0 { "<s>" } else { tokens[start - 1].as_str() };
        let next = tokens.get(end).map_or("</s>", String::as_str);
        (prev, next)
    }

    fn goal_features(&self, sink: &mut Sink, usr: &[String], sys: &[String], act: &[String], spans: &[Span]) {
        let Some(target) = self.lexicon.matches(act).into_iter().next() else {
            if act.iter().any(|t| t == "any") {
                sink.add(&["g_dontcare"], 1.0);
            }
            return;
        };
        let entry = self.lexicon.entry(target.entry);
        let slot = entry.slot.as_str();
        let hit = spans
            .iter()
            .find(|s| self.lexicon.entry(s.entry).slot == slot && self.lexicon.entry(s.entry).value == entry.value);
        match hit {
            Some(span) => {
                sink.add(&["g_match"], 1.0);
                sink.add(&["g_match_slot", slot], 1.0);
                let (prev, next) = Self::context(usr, span.start, span.end);
                sink.add(&["g_prev", prev], 1.0);
                sink.add(&["g_next", next], 1.0);
                sink.add(&["g_ctx", prev, next], 1.0);
                sink.add(&["g_prev_slot", slot, prev], 1.0);
                sink.add(&["g_next_slot", slot, next], 1.0);
            }
            None if find_seq(usr, &entry.tokens).is_some() => sink.add(&["g_shadow", slot], 1.0),
            None => sink.add(&["g_absent", slot], 1.0),
        }
        let others = spans
            .iter()
            .filter(|s| self.lexicon.entry(s.entry).slot == slot && self.lexicon.entry(s.entry).value != entry.value)
            .count();
        if others > 0 {
            sink.add(&["g_other_value", slot], 1.0);
        }
        if find_seq(sys, &entry.tokens).is_some() {
            sink.add(&["g_insys", if hit.is_some() { "1" } else { "0" }], 1.0);
        }
    }

    fn request_features(
        &self,
        sink: &mut Sink,
        usr: &[String],
        sys: &[String],
        item: &[(&'static str, String)],
        spans: &[Span],
        slot_hit: bool,
    ) {
        // Referent evidence is only informative together with evidence for
        // the requested slot, so it is conjoined with `hit`.
        let hit = if slot_hit { "1" } else { "0" };
        let mut any_ref = false;
        let mut any_mismatch = false;
        let mut item_tokens: HashSet<String> = HashSet::new();
        let mut name_in_sys = false;
        for (slot, value) in item {
            let tokens = tokenize(value);
            item_tokens.extend(tokens.iter().cloned());
            if *slot == "name" {
                if let Some(pos) = find_seq(usr, &tokens) {
                    any_ref = true;
                    sink.add(&["r_ref", "name", hit], 1.0);
                    let (prev, next) = Self::context(usr, pos, pos + tokens.len());
                    sink.add(&["r_prev", prev, hit], 1.0);
                    sink.add(&["r_next", next, hit], 1.0);
                }
                name_in_sys = find_seq(sys, &tokens).is_some();
                continue;
            }
            let same_slot: Vec<&Span> = spans.iter().filter(|s| self.lexicon.entry(s.entry).slot == *slot).collect();
            if let Some(span) = same_slot.iter().find(|s| self.lexicon.entry(s.entry).value == *value) {
                any_ref = true;
                sink.add(&["r_ref", slot, hit], 1.0);
                let (prev, next) = Self::context(usr, span.start, span.end);
                sink.add(&["r_prev", prev, hit], 1.0);
                sink.add(&["r_next", next, hit], 1.0);
                sink.add(&["r_ctx", prev, next, hit], 1.0);
            } else if !same_slot.is_empty() {
                any_mismatch = true;
                sink.add(&["r_mismatch", slot], 1.0);
            }
        }
        let refcount = usr.iter().filter(|t| item_tokens.contains(*t)).count();
        if refcount > 0 {
            sink.add(&["r_refcount", hit], refcount as f32);
        }
        let sys_overlap = sys.iter().filter(|t| item_tokens.contains(*t)).count();
        if sys_overlap > 0 {
            sink.add(&["r_sys_overlap"], (sys_overlap as f32).min(8.0) / 4.0);
        }
        let flag = |b: bool| if b { "1" } else { "0" };
        sink.add(&["r_insys", flag(name_in_sys)], 1.0);
        sink.add(&["r_combo", flag(any_ref), flag(any_mismatch), flag(name_in_sys), hit], 1.0);
        if !item.is_empty() && !any_ref && !any_mismatch {
            // generic request: rely on the system turn to pick the referent
            for t in usr {
                sink.add(&["r_generic", t, flag(name_in_sys)], 1.0);
            }
        }
    }
}
