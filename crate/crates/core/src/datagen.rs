//! Training-set builders: baseline (corpus positives plus sampled
//! distractors), ext_H (plus generated referring requests) and ext_A
//! (plus examples mined from simulations with a baseline model).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{render_candidates, scorer_input, Action, CandidateConfig, CandidateInput};
use crate::corpus::{AnnotatedCorpus, Replayer};
use crate::error::{AsuError, Result};
use crate::eval::{dialogue_id, simulate_dialogue, SimulationSetup};
use crate::io::{write_json, write_jsonl};
use crate::manager::{realize, SystemMove};
use crate::ontology::{Ontology, Venue, VenueDb};
use crate::scorer::{ExampleSource, RelevanceModel, ScorerInput, TrainingExample};
use crate::simulator::{SurfaceBank, REFERENCE_SLOTS};
use crate::state::{DialogueState, GoalValue};

/// Floor added to every sampling weight so that no distractor is impossible.
const WEIGHT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub examples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub positive_rate: f64,
    pub dialogues: usize,
    pub by_source: BTreeMap<String, usize>,
    pub referring_positives: usize,
}

impl SplitStats {
    pub fn of(examples: &[TrainingExample]) -> Self {
        let positives = examples.iter().filter(|e| e.label).count();
        let mut by_source = BTreeMap::new();
        for e in examples {
            let key = serde_json::to_value(e.source).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            *by_source.entry(key).or_insert(0) += 1;
        }
        SplitStats {
            examples: examples.len(),
            positives,
            negatives: examples.len() - positives,
            positive_rate: if examples.is_empty() { 0.0 } else { positives as f64 / examples.len() as f64 },
            dialogues: examples.iter().map(|e| e.dialogue_id.as_str()).collect::<BTreeSet<_>>().len(),
            by_source,
            referring_positives: examples.iter().filter(|e| e.label && e.referring).count(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    /// Exact repeats of an (input, label) pair that were dropped.
    pub duplicates_dropped: usize,
    /// Negatives dropped because the same input is also a positive.
    pub conflicts_dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<TrainingExample>,
    pub dev: Vec<TrainingExample>,
    pub stats: DatasetStats,
}

impl Dataset {
    /// Deduplicate each split and recompute statistics. When an input occurs
    /// with both labels the positive is kept.
    pub fn assemble(train: Vec<TrainingExample>, dev: Vec<TrainingExample>) -> Self {
        let mut duplicates = 0;
        let mut conflicts = 0;
        let mut clean = |examples: Vec<TrainingExample>| {
            let positives: HashSet<ScorerInput> =
                examples.iter().filter(|e| e.label).map(|e| e.input.clone()).collect();
            let mut seen: HashSet<(ScorerInput, bool)> = HashSet::new();
            let mut out = Vec::with_capacity(examples.len());
            for e in examples {
                if !e.label && positives.contains(&e.input) {
                    conflicts += 1;
                    continue;
                }
                if !seen.insert((e.input.clone(), e.label)) {
                    duplicates += 1;
                    continue;
                }
                out.push(e);
            }
            out
        };
        let train = clean(train);
        let dev = clean(dev);
        let stats = DatasetStats {
            train: SplitStats::of(&train),
            dev: SplitStats::of(&dev),
            duplicates_dropped: duplicates,
            conflicts_dropped: conflicts,
        };
        Dataset { train, dev, stats }
    }

    /// Merge two datasets split-wise (deduplicating again).
    pub fn union(self, other: Dataset) -> Dataset {
        let mut train = self.train;
        train.extend(other.train);
        let mut dev = self.dev;
        dev.extend(other.dev);
        let mut merged = Dataset::assemble(train, dev);
        merged.stats.duplicates_dropped += self.stats.duplicates_dropped + other.stats.duplicates_dropped;
        merged.stats.conflicts_dropped += self.stats.conflicts_dropped + other.stats.conflicts_dropped;
        merged
    }

    /// Write `<stem>.train.jsonl`, `<stem>.dev.jsonl` and `<stem>.stats.json`
    /// into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_jsonl(&dir.join(format!("{stem}.train.jsonl")), &self.train)?;
        write_jsonl(&dir.join(format!("{stem}.dev.jsonl")), &self.dev)?;
        write_json(&dir.join(format!("{stem}.stats.json")), &self.stats)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let train = crate::io::read_jsonl(&dir.join(format!("{stem}.train.jsonl")))?;
        let dev = crate::io::read_jsonl(&dir.join(format!("{stem}.dev.jsonl")))?;
        let stats = DatasetStats { train: SplitStats::of(&train), dev: SplitStats::of(&dev), ..Default::default() };
        Ok(Dataset { train, dev, stats })
    }
}

/// Weights for drawing distractors for one positive action.
pub trait NegativeSampler: Sync {
    fn weight(&self, positive: &Action, distractor: &Action) -> f64;
}

fn frequency_key(action: &Action) -> String {
    match action {
        Action::InformGoal { slot, value } => format!("inform {slot} {value}"),
        Action::Request { slot, .. } => format!("request {slot}"),
    }
}

/// `0.5 * normalized corpus frequency + 0.5 * [same slot]`, with a small floor.
#[derive(Debug, Clone, Default)]
pub struct FrequencySimilaritySampler {
    freq: HashMap<String, f64>,
}

impl FrequencySimilaritySampler {
    pub fn from_corpus(corpus: &AnnotatedCorpus) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for turn in &corpus.turns {
            for action in &turn.intended_actions {
                *counts.entry(frequency_key(action)).or_insert(0) += 1;
            }
        }
        let max = counts.values().copied().max().unwrap_or(1) as f64;
        FrequencySimilaritySampler { freq: counts.into_iter().map(|(k, c)| (k, c as f64 / max)).collect() }
    }

    pub fn frequency(&self, action: &Action) -> f64 {
        self.freq.get(&frequency_key(action)).copied().unwrap_or(0.0)
    }
}

pub fn similar(positive: &Action, distractor: &Action) -> bool {
    positive.is_inform() == distractor.is_inform() && positive.slot() == distractor.slot()
}

impl NegativeSampler for FrequencySimilaritySampler {
    fn weight(&self, positive: &Action, distractor: &Action) -> f64 {
        let sim = if similar(positive, distractor) { 1.0 } else { 0.0 };
        0.5 * self.frequency(distractor) + 0.5 * sim + WEIGHT_FLOOR
    }
}

/// Uniform distractors, for comparison.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformSampler;

impl NegativeSampler for UniformSampler {
    fn weight(&self, _: &Action, _: &Action) -> f64 {
        1.0
    }
}

/// One positive per gold action plus `k` weighted distractors per positive,
/// drawn without replacement within the turn.
pub fn sample_turn<R: Rng>(
    candidates: &[CandidateInput],
    gold: &[Action],
    sampler: &dyn NegativeSampler,
    k: usize,
    rng: &mut R,
) -> Vec<(ScorerInput, bool)> {
    let mut out = Vec::new();
    let mut taken: HashSet<usize> = HashSet::new();
    for positive in gold {
        let Some(c) = candidates.iter().find(|c| &c.action == positive) else { continue };
        out.push((c.input.clone(), true));
        let pool: Vec<usize> = (0..candidates.len())
            .filter(|&i| !taken.contains(&i) && !gold.contains(&candidates[i].action))
            .collect();
        let picked: Vec<usize> = pool
            .choose_multiple_weighted(rng, k, |&i| sampler.weight(positive, &candidates[i].action))
            .map(|it| it.copied().collect())
            .unwrap_or_default();
        for i in picked {
            taken.insert(i);
            out.push((candidates[i].input.clone(), false));
        }
    }
    out
}

/// Split dialogue ids into (train, dev) with `dev_fraction` going to dev.
fn split_ids<R: Rng>(ids: &[String], dev_fraction: f64, rng: &mut R) -> BTreeSet<String> {
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let n_dev = (ids.len() as f64 * dev_fraction).round() as usize;
    shuffled.into_iter().take(n_dev).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub negatives_per_positive: usize,
    pub dev_fraction: f64,
    pub candidates: CandidateConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { negatives_per_positive: 5, dev_fraction: 0.25, candidates: CandidateConfig::default() }
    }
}

pub fn gen_baseline<R: Rng>(
    corpus: &AnnotatedCorpus,
    ontology: &Ontology,
    config: &BaselineConfig,
    rng: &mut R,
) -> Result<Dataset> {
    gen_baseline_with(corpus, ontology, config, &FrequencySimilaritySampler::from_corpus(corpus), rng)
}

pub fn gen_baseline_with<R: Rng>(
    corpus: &AnnotatedCorpus,
    ontology: &Ontology,
    config: &BaselineConfig,
    sampler: &dyn NegativeSampler,
    rng: &mut R,
) -> Result<Dataset> {
    if corpus.is_empty() {
        return Err(AsuError::Empty("corpus"));
    }
    let dialogues = corpus.dialogues();
    let ids: Vec<String> = dialogues.iter().map(|d| d[0].dialogue_id.clone()).collect();
    let dev_ids = split_ids(&ids, config.dev_fraction, rng);
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for dialogue in dialogues {
        let mut replay = Replayer::new(ontology);
        for turn in dialogue {
            let state = replay.before_user(turn).clone();
            let candidates = render_candidates(&state, ontology, &turn.user_utterance, config.candidates);
            if candidates.is_empty() {
                return Err(AsuError::NoCandidates { dialogue_id: turn.dialogue_id.clone(), turn_idx: turn.turn_idx });
            }
            let split = if dev_ids.contains(&turn.dialogue_id) { &mut dev } else { &mut train };
            for (input, label) in
                sample_turn(&candidates, &turn.intended_actions, sampler, config.negatives_per_positive, rng)
            {
                split.push(TrainingExample {
                    input,
                    label,
                    source: ExampleSource::Baseline,
                    dialogue_id: turn.dialogue_id.clone(),
                    turn_idx: turn.turn_idx,
                    score: None,
                    referring: false,
                });
            }
            replay.after_user(&turn.intended_actions)?;
        }
    }
    Ok(Dataset::assemble(train, dev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtHConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub negatives_per_positive: usize,
    /// Inclusive range of venues in each synthetic context.
    pub history: (usize, usize),
    pub candidates: CandidateConfig,
}

impl Default for ExtHConfig {
    fn default() -> Self {
        ExtHConfig {
            n_train: 10_000,
            n_dev: 3_000,
            negatives_per_positive: 5,
            history: (2, 4),
            candidates: CandidateConfig::default(),
        }
    }
}

/// Every (requestable slot, reference slot) pair.
pub fn referring_grid(ontology: &Ontology) -> Vec<(String, String)> {
    ontology
        .requestable_slots()
        .iter()
        .flat_map(|req| REFERENCE_SLOTS.iter().map(move |r| (req.clone(), r.to_string())))
        .collect()
}

/// A dialogue context with several offered venues and one target among them
/// that `reference` identifies uniquely.
fn referring_context<R: Rng>(db: &VenueDb, reference: &str, history: (usize, usize), rng: &mut R) -> Option<(DialogueState, usize)> {
    let n = rng.gen_range(history.0..=history.1).min(db.len());
    let venues: Vec<&Venue> = db.venues().choose_multiple(rng, n).collect();
    let target = rng.gen_range(0..venues.len());
    let value = venues[target].get(reference)?;
    if venues.iter().filter(|v| v.get(reference) == Some(value)).count() != 1 {
        return None;
    }
    let mut state = DialogueState::new();
    let mut turn = 0;
    for venue in &venues {
        turn += 2;
        state.record_offer(venue, turn);
    }
    let last = venues.last()?;
    for slot in ["food", "area", "pricerange"] {
        if rng.gen_bool(0.5) {
            if let Some(v) = last.get(slot) {
                state.goal.set(slot, GoalValue::from(v));
            }
        }
    }
    let mv = if rng.gen_bool(0.8) {
        SystemMove::Offer { venue: (*last).clone() }
    } else {
        SystemMove::ReqMore
    };
    state.last_system_acts = realize(&mv).1;
    state.turn_index = turn + 1;
    Some((state, target + 1))
}

/// Baseline data plus generated referring-expression requests: exactly
/// `n_train` / `n_dev` referring positives cycling over the full
/// (requestable, reference) grid, each with sampled distractors.
pub fn gen_ext_h<R: Rng>(
    baseline: &Dataset,
    corpus: &AnnotatedCorpus,
    ontology: &Ontology,
    db: &VenueDb,
    bank: &SurfaceBank,
    config: &ExtHConfig,
    rng: &mut R,
) -> Result<Dataset> {
    let grid = referring_grid(ontology);
    for (req, reference) in &grid {
        if bank.referring_templates(req, reference).is_empty() {
            return Err(AsuError::MissingTemplate { req: req.clone(), reference: reference.clone() });
        }
    }
    let sampler = FrequencySimilaritySampler::from_corpus(corpus);
    let mut seen: HashSet<ScorerInput> =
        baseline.train.iter().chain(&baseline.dev).map(|e| e.input.clone()).collect();
    let mut generate = |n: usize, split: &str, rng: &mut R| -> Result<Vec<TrainingExample>> {
        let mut out = Vec::new();
        let mut accepted = 0;
        let mut attempts = 0;
        while accepted < n {
            attempts += 1;
            if attempts > 100 * n + 1000 {
                return Err(AsuError::Config(format!("could not generate {n} distinct referring requests")));
            }
            let (req, reference) = &grid[accepted % grid.len()];
            let Some((state, item_id)) = referring_context(db, reference, config.history, rng) else { continue };
            let venue = &state.item(item_id).ok_or(AsuError::DanglingItem(item_id))?.venue;
            let utterance = bank.referring_request(req, reference, venue, rng)?;
            let positive = Action::request(item_id, req.clone());
            let input = scorer_input(&positive, &state, &utterance);
            if !seen.insert(input) {
                continue;
            }
            let id = format!("ext_h-{split}-{accepted:05}");
            let candidates = render_candidates(&state, ontology, &utterance, config.candidates);
            for (input, label) in
                sample_turn(&candidates, std::slice::from_ref(&positive), &sampler, config.negatives_per_positive, rng)
            {
                out.push(TrainingExample {
                    input,
                    label,
                    source: ExampleSource::ExtH,
                    dialogue_id: id.clone(),
                    turn_idx: 0,
                    score: None,
                    referring: label,
                });
            }
            accepted += 1;
        }
        Ok(out)
    };
    let train = generate(config.n_train, "train", rng)?;
    let dev = generate(config.n_dev, "dev", rng)?;
    Ok(baseline.clone().union(Dataset::assemble(train, dev)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLearningConfig {
    /// Gold actions scoring below this become positives.
    pub t1: f64,
    /// Non-gold actions scoring above this may become negatives.
    pub t2: f64,
    /// Negatives per turn.
    pub m: usize,
    pub n_dialogues: usize,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for ActiveLearningConfig {
    fn default() -> Self {
        ActiveLearningConfig { t1: 0.99, t2: 0.5, m: 2, n_dialogues: 5000, dev_fraction: 0.2, seed: 1 }
    }
}

impl ActiveLearningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t2 && self.t2 < self.t1 && self.t1 <= 1.0) {
            return Err(AsuError::Config(format!("need 0 <= t2 < t1 <= 1, got t1={} t2={}", self.t1, self.t2)));
        }
        if self.m == 0 || self.n_dialogues == 0 {
            return Err(AsuError::Config("m and the dialogue count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(AsuError::Config("dev fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Hard examples from one simulated turn: gold actions the model is unsure
/// about (all gold requests of referring turns) as positives and the top-M
/// confident non-gold actions as negatives.
pub fn mine_turn(
    scored: &[(Action, f64)],
    gold: &[Action],
    referring: bool,
    config: &ActiveLearningConfig,
) -> (Vec<(Action, f64)>, Vec<(Action, f64)>) {
    let mut positives = Vec::new();
    for action in gold {
        let score = scored.iter().find(|(a, _)| a == action).map_or(0.0, |(_, s)| *s);
        if score < config.t1 || (referring && action.is_request()) {
            positives.push((action.clone(), score));
        }
    }
    let mut negatives: Vec<(Action, f64)> =
        scored.iter().filter(|(a, s)| *s > config.t2 && !gold.contains(a)).cloned().collect();
    // Stable sort keeps candidate order among equal scores.
    negatives.sort_by(|a, b| b.1.total_cmp(&a.1));
    negatives.truncate(config.m);
    (positives, negatives)
}

/// Simulate with `setup.system` (which should score with `baseline_model`)
/// and mine hard examples; the result is `baseline ∪ mined`.
pub fn gen_ext_a(
    baseline: &Dataset,
    baseline_model: Option<&RelevanceModel>,
    setup: &SimulationSetup<'_>,
    config: &ActiveLearningConfig,
) -> Result<Dataset> {
    config.validate()?;
    if baseline_model.is_none() {
        return Err(AsuError::Config("active learning needs a trained baseline model".into()));
    }
    let per_dialogue = (0..config.n_dialogues)
        .into_par_iter()
        .map(|i| {
            let id = format!("ext_a-{}", dialogue_id(i));
            let mut examples = Vec::new();
            simulate_dialogue(setup, config.seed.wrapping_add(i as u64), &id, |trace| {
                let scored: Vec<(Action, f64)> =
                    trace.update.scored.iter().map(|s| (s.action.clone(), s.score)).collect();
                let (pos, neg) = mine_turn(&scored, &trace.user.gold_actions, trace.user.referring, config);
                for (set, label) in [(pos, true), (neg, false)] {
                    for (action, score) in set {
                        examples.push(TrainingExample {
                            input: scorer_input(&action, trace.state_before, &trace.user.utterance),
                            label,
                            source: ExampleSource::ExtA,
                            dialogue_id: id.clone(),
                            turn_idx: trace.turn_idx,
                            score: Some(score),
                            referring: label && trace.user.referring && action.is_request(),
                        });
                    }
                }
            })?;
            Ok((id, examples))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = per_dialogue.iter().map(|(id, _)| id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dev_ids = split_ids(&ids, config.dev_fraction, &mut rng);
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (id, examples) in per_dialogue {
        if dev_ids.contains(&id) {
            dev.extend(examples);
        } else {
            train.extend(examples);
        }
    }
    Ok(baseline.clone().union(Dataset::assemble(train, dev)))
}

/// Re-scoring check of mined examples against the frozen mining model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveLearningAudit {
    pub mined_negatives: usize,
    pub negatives_above_t2: usize,
    pub mined_positives_nonreferring: usize,
    pub positives_below_t1: usize,
    pub mined_referring_positives: usize,
    pub max_negatives_per_turn: usize,
    pub max_recorded_score_drift: f64,
    pub positive_rate: f64,
}

impl ActiveLearningAudit {
    pub fn passes(&self, config: &ActiveLearningConfig) -> bool {
        self.negatives_above_t2 == self.mined_negatives
            && self.positives_below_t1 == self.mined_positives_nonreferring
            && self.max_negatives_per_turn <= config.m
    }
}

pub fn audit_ext_a(dataset: &Dataset, model: &RelevanceModel, config: &ActiveLearningConfig) -> ActiveLearningAudit {
    let all: Vec<&TrainingExample> = dataset.train.iter().chain(&dataset.dev).collect();
    let mined: Vec<&&TrainingExample> = all.iter().filter(|e| e.source == ExampleSource::ExtA).collect();
    let mut per_turn: HashMap<(&str, usize), usize> = HashMap::new();
    let mut audit = ActiveLearningAudit {
        mined_negatives: 0,
        negatives_above_t2: 0,
        mined_positives_nonreferring: 0,
        positives_below_t1: 0,
        mined_referring_positives: 0,
        max_negatives_per_turn: 0,
        max_recorded_score_drift: 0.0,
        positive_rate: 0.0,
    };
    for e in mined {
        let score = model.score_input(&e.input);
        if let Some(recorded) = e.score {
            audit.max_recorded_score_drift = audit.max_recorded_score_drift.max((recorded - score).abs());
        }
        if e.label {
            if e.referring {
                audit.mined_referring_positives += 1;
            } else {
                audit.mined_positives_nonreferring += 1;
                audit.positives_below_t1 += usize::from(score < config.t1);
            }
        } else {
            audit.mined_negatives += 1;
            audit.negatives_above_t2 += usize::from(score > config.t2);
            let n = per_turn.entry((e.dialogue_id.as_str(), e.turn_idx)).or_insert(0);
            *n += 1;
            audit.max_negatives_per_turn = audit.max_negatives_per_turn.max(*n);
        }
    }
    let positives = all.iter().filter(|e| e.label).count();
    audit.positive_rate = if all.is_empty() { 0.0 } else { positives as f64 / all.len() as f64 };
    audit
}
