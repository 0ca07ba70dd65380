use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Featurizer, Lexicon};
use super::{ScorerInput, TrainingExample};
use crate::error::{AsuError, Result};
use crate::io::write_atomic;

pub const MODEL_FORMAT: &str = "asu-relevance-model";
pub const MODEL_VERSION: u32 = 1;

/// Hyper-parameters for [`RelevanceModel::train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub hash_bits: u32,
    /// Loss weight for positive examples; `None` trains on plain log-loss.
    pub positive_weight: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            learning_rate: 0.2,
            l2: 1e-7,
            seed: 1,
            hash_bits: 18,
            positive_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub positive_weight: Option<f64>,
    pub n_examples: usize,
    pub n_positive: usize,
    /// FNV-1a digest of the serialized training examples.
    pub dataset_fingerprint: String,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Weights and bias of a linear logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearParams {
    pub fn zeros(dim: usize) -> Self {
        LinearParams { weights: vec![0.0; dim], bias: 0.0 }
    }

    pub fn logit(&self, x: &FeatureVector) -> f64 {
        self.bias + x.iter().map(|&(i, v)| self.weights[i as usize] * f64::from(v)).sum::<f64>()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z) - y z`, computed without overflow.
fn log_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Regularized mean log-loss and its gradient with respect to the weights
/// and bias. `data` holds `(features, label, example weight)` triples.
pub fn objective(params: &LinearParams, data: &[(FeatureVector, f64, f64)], l2: f64) -> (f64, Vec<f64>, f64) {
    let n = data.len().max(1) as f64;
    let mut grad = vec![0.0; params.weights.len()];
    let mut grad_bias = 0.0;
    let mut loss = 0.0;
    for (x, y, c) in data {
        let z = params.logit(x);
        loss += c * log_loss(z, *y);
        let err = c * (sigmoid(z) - y) / n;
        grad_bias += err;
        for &(i, v) in x {
            grad[i as usize] += err * f64::from(v);
        }
    }
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(&params.weights) {
        *g += l2 * w;
        reg += w * w;
    }
    (loss / n + 0.5 * l2 * reg, grad, grad_bias)
}

/// Hashed-feature logistic regression over scorer inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceModel {
    featurizer: Featurizer,
    params: LinearParams,
    report: Option<TrainingReport>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    seed: Option<u64>,
    hash_bits: u32,
    bias: f64,
    /// Nonzero weights as `[bucket, weight]`.
    weights: Vec<(u32, f64)>,
    lexicon: Lexicon,
    training: Option<TrainingReport>,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn fingerprint(examples: &[TrainingExample]) -> String {
    let mut h = FnvHasher::default();
    for e in examples {
        h.write(&serde_json::to_vec(e).expect("examples serialize"));
        h.write_u8(b'\n');
    }
    format!("{:016x}", h.finish())
}

impl RelevanceModel {
    /// Model with all weights zero: scores 0.5 everywhere.
    pub fn zeros(hash_bits: u32, lexicon: Lexicon) -> Self {
        let featurizer = Featurizer::new(hash_bits, lexicon);
        let params = LinearParams::zeros(featurizer.dim());
        RelevanceModel { featurizer, params, report: None }
    }

    pub fn from_params(featurizer: Featurizer, params: LinearParams) -> Self {
        assert_eq!(params.weights.len(), featurizer.dim());
        RelevanceModel { featurizer, params, report: None }
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn params(&self) -> &LinearParams {
        &self.params
    }

    pub fn report(&self) -> Option<&TrainingReport> {
        self.report.as_ref()
    }

    pub fn score_input(&self, input: &ScorerInput) -> f64 {
        sigmoid(self.params.logit(&self.featurizer.featurize(input)))
    }

    pub fn score_batch<'a>(&self, inputs: impl Iterator<Item = &'a ScorerInput>) -> Vec<f64> {
        inputs.map(|i| self.score_input(i)).collect()
    }

    /// Minimize log-loss with per-example AdaGrad steps. The visiting order
    /// is a seeded shuffle per epoch, so equal inputs give bit-identical
    /// weights.
    pub fn train(examples: &[TrainingExample], lexicon: Lexicon, config: &TrainConfig) -> Result<Self> {
        let n_positive = examples.iter().filter(|e| e.label).count();
        if n_positive == 0 || n_positive == examples.len() {
            return Err(AsuError::SingleClass);
        }
        if config.epochs == 0 || !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
            return Err(AsuError::Config("epochs and learning rate must be positive, l2 non-negative".into()));
        }
        let featurizer = Featurizer::new(config.hash_bits, lexicon);
        let features: Vec<FeatureVector> = examples.par_iter().map(|e| featurizer.featurize(&e.input)).collect();
        let targets: Vec<f64> = examples.iter().map(|e| if e.label { 1.0 } else { 0.0 }).collect();
        let pos_weight = config.positive_weight.unwrap_or(1.0);
        let cost = |y: f64| if y > 0.5 { pos_weight } else { 1.0 };

        let mut params = LinearParams::zeros(featurizer.dim());
        let mean_loss = |params: &LinearParams| -> f64 {
            let total: f64 = features
                .par_iter()
                .zip(targets.par_iter())
                .map(|(x, &y)| cost(y) * log_loss(params.logit(x), y))
                .sum();
            total / examples.len() as f64
        };
        let initial_loss = mean_loss(&params);

        let mut accum = vec![1e-8; featurizer.dim()];
        let mut accum_bias = 1e-8;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &k in &order {
                let x = &features[k];
                let y = targets[k];
                let err = cost(y) * (sigmoid(params.logit(x)) - y);
                for &(i, v) in x {
                    let i = i as usize;
                    let g = err * f64::from(v) + config.l2 * params.weights[i];
                    accum[i] += g * g;
                    params.weights[i] -= config.learning_rate * g / accum[i].sqrt();
                }
                accum_bias += err * err;
                params.bias -= config.learning_rate * err / accum_bias.sqrt();
            }
        }
        let final_loss = mean_loss(&params);
        if !final_loss.is_finite() {
            return Err(AsuError::NonFiniteLoss);
        }
        let report = TrainingReport {
            seed: config.seed,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            l2: config.l2,
            positive_weight: config.positive_weight,
            n_examples: examples.len(),
            n_positive,
            dataset_fingerprint: fingerprint(examples),
            initial_loss,
            final_loss,
        };
        Ok(RelevanceModel { featurizer, params, report: Some(report) })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            seed: self.report.as_ref().map(|r| r.seed),
            hash_bits: self.featurizer.hash_bits,
            bias: self.params.bias,
            weights: self
                .params
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
            lexicon: self.featurizer.lexicon.clone(),
            training: self.report.clone(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text).map_err(|e| AsuError::CorruptModel(e.to_string()))?;
        if header.format != MODEL_FORMAT {
            return Err(AsuError::CorruptModel(format!("unexpected format tag {:?}", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(AsuError::VersionMismatch { found: header.version, expected: MODEL_VERSION });
        }
        let file: ModelFile = serde_json::from_str(text).map_err(|e| AsuError::CorruptModel(e.to_string()))?;
        if !(1..=30).contains(&file.hash_bits) {
            return Err(AsuError::CorruptModel(format!("hash_bits {} out of range", file.hash_bits)));
        }
        let featurizer = Featurizer::new(file.hash_bits, file.lexicon);
        let mut params = LinearParams::zeros(featurizer.dim());
        params.bias = file.bias;
        for (i, w) in file.weights {
            let slot = params
                .weights
                .get_mut(i as usize)
                .ok_or_else(|| AsuError::CorruptModel(format!("weight index {i} out of range")))?;
            *slot = w;
        }
        Ok(RelevanceModel { featurizer, params, report: file.training })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AsuError::io(path, e))?;
        RelevanceModel::from_json(&text)
    }
}
