//! Native scorers: sparse logistic regression and an averaged-embedding
//! ("embedding bag") classifier, both trained by seeded mini-batch SGD, plus
//! an adapter for externally produced score tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::text::{self, SparseVector, TextError, TextField, Vocabulary, Weighting};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training diverged: loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model was trained on vocabulary {model} but vocabulary {vocab} was supplied")]
    VocabMismatch { model: String, vocab: String },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("model file: {0}")]
    Format(String),
    #[error("score file line {line}: {message}")]
    ScoreParse { line: usize, message: String },
    #[error("score {score} for document {id:?} is outside [0, 1]")]
    ScoreRange { id: String, score: f64 },
    #[error("duplicate document id {0:?} in score file")]
    DuplicateScore(String),
    #[error("no score for document {0:?}")]
    MissingScore(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Logistic function, stable for arbitrarily large margins.
pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a margin against a label.
pub fn bce_from_margin(margin: f64, label: bool) -> f64 {
    if label {
        softplus(-margin)
    } else {
        softplus(margin)
    }
}

fn check_classes(data: &[(SparseVector, bool)]) -> Result<(), ModelError> {
    let pos = data.iter().filter(|d| d.1).count();
    if pos == 0 || pos == data.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

fn check_common(epochs: usize, learning_rate: f64, batch_size: usize) -> Result<(), ModelError> {
    if epochs == 0 {
        return Err(ModelError::Config("epochs must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(ModelError::Config(format!("learning rate must be positive, got {learning_rate}")));
    }
    if batch_size == 0 {
        return Err(ModelError::Config("batch size must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1e-4,
            epochs: 5,
            learning_rate: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub vocab_hash: String,
    pub l2: f64,
    pub train_meta: TrainMeta,
}

impl LinearModel {
    pub fn margin(&self, x: &SparseVector) -> Result<f64, ModelError> {
        x.check_dim(self.weights.len())?;
        Ok(self.bias + x.entries().iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>())
    }
}

pub fn predict_linear(model: &LinearModel, x: &SparseVector) -> Result<f64, ModelError> {
    Ok(sigmoid(model.margin(x)?))
}

/// Mean cross-entropy plus `(l2/2)·‖w‖²`.
pub fn logreg_loss(model: &LinearModel, data: &[(SparseVector, bool)]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (x, y) in data {
        total += bce_from_margin(model.margin(x)?, *y);
    }
    let penalty = 0.5 * model.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    Ok(total / data.len().max(1) as f64 + penalty)
}

/// Mini-batch SGD from zero weights. Shuffling is driven by `config.seed`
/// only, so identical inputs give bit-identical models.
pub fn train_logreg(
    data: &[(SparseVector, bool)],
    n_features: usize,
    vocab_hash: &str,
    config: &LogRegConfig,
) -> Result<LinearModel, ModelError> {
    check_classes(data)?;
    check_common(config.epochs, config.learning_rate, config.batch_size)?;
    if !(config.l2 >= 0.0 && config.l2.is_finite()) {
        return Err(ModelError::Config(format!("l2 must be nonnegative, got {}", config.l2)));
    }
    for (x, _) in data {
        x.check_dim(n_features)?;
    }

    let mut model = LinearModel {
        weights: vec![0.0; n_features],
        bias: 0.0,
        vocab_hash: vocab_hash.to_string(),
        l2: config.l2,
        train_meta: TrainMeta {
            seed: config.seed,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            batch_size: config.batch_size,
        },
    };
    let lr = config.learning_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n_features];
    let mut touched: Vec<usize> = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grad_bias = 0.0;
            for &k in batch {
                let (x, y) = &data[k];
                let residual = (sigmoid(model.margin(x)?) - if *y { 1.0 } else { 0.0 }) * scale;
                grad_bias += residual;
                for &(i, v) in x.entries() {
                    if grad[i] == 0.0 {
                        touched.push(i);
                    }
                    grad[i] += residual * v;
                }
            }
            if config.l2 > 0.0 {
                let decay = 1.0 - lr * config.l2;
                model.weights.iter_mut().for_each(|w| *w *= decay);
            }
            for i in touched.drain(..) {
                model.weights[i] -= lr * grad[i];
                grad[i] = 0.0;
            }
            model.bias -= lr * grad_bias;
        }
        let loss = logreg_loss(&model, data)?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        log::debug!("logreg epoch {epoch}: loss {loss:.6}");
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbBagConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EmbBagConfig {
    fn default() -> Self {
        EmbBagConfig {
            dim: 50,
            epochs: 5,
            learning_rate: 0.05,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Mean of weighted n-gram embeddings fed to a sigmoid output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBagModel {
    pub embeddings: Vec<Vec<f64>>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub dim: usize,
    pub vocab_hash: String,
    pub train_meta: TrainMeta,
}

impl EmbeddingBagModel {
    /// Weighted mean embedding; the zero vector for an empty document.
    pub fn hidden(&self, x: &SparseVector) -> Result<Vec<f64>, ModelError> {
        x.check_dim(self.embeddings.len())?;
        let mut h = vec![0.0; self.dim];
        let total = x.total_weight();
        if total <= 0.0 {
            return Ok(h);
        }
        for &(i, v) in x.entries() {
            for (hk, ek) in h.iter_mut().zip(&self.embeddings[i]) {
                *hk += v * ek;
            }
        }
        h.iter_mut().for_each(|hk| *hk /= total);
        Ok(h)
    }

    pub fn margin(&self, x: &SparseVector) -> Result<f64, ModelError> {
        let h = self.hidden(x)?;
        Ok(self.output_bias + h.iter().zip(&self.output_weights).map(|(a, b)| a * b).sum::<f64>())
    }
}

pub fn predict_embbag(model: &EmbeddingBagModel, x: &SparseVector) -> Result<f64, ModelError> {
    Ok(sigmoid(model.margin(x)?))
}

/// Gradient of the mean batch cross-entropy. Embedding rows are sparse:
/// only rows touched by the batch appear.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbBagGradient {
    pub embeddings: BTreeMap<usize, Vec<f64>>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
}

pub fn embbag_loss(model: &EmbeddingBagModel, batch: &[(SparseVector, bool)]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (x, y) in batch {
        total += bce_from_margin(model.margin(x)?, *y);
    }
    Ok(total / batch.len().max(1) as f64)
}

/// Backpropagates through `σ(u·h + c)` with `h = Σ vᵢ·eᵢ / Σ vᵢ`.
pub fn embbag_gradient(model: &EmbeddingBagModel, batch: &[(SparseVector, bool)]) -> Result<EmbBagGradient, ModelError> {
    let mut grad = EmbBagGradient {
        embeddings: BTreeMap::new(),
        output_weights: vec![0.0; model.dim],
        output_bias: 0.0,
    };
    if batch.is_empty() {
        return Ok(grad);
    }
    let scale = 1.0 / batch.len() as f64;
    for (x, y) in batch {
        let h = model.hidden(x)?;
        let margin = model.output_bias + h.iter().zip(&model.output_weights).map(|(a, b)| a * b).sum::<f64>();
        let residual = (sigmoid(margin) - if *y { 1.0 } else { 0.0 }) * scale;
        grad.output_bias += residual;
        for (g, hk) in grad.output_weights.iter_mut().zip(&h) {
            *g += residual * hk;
        }
        let total = x.total_weight();
        if total <= 0.0 {
            continue;
        }
        for &(i, v) in x.entries() {
            let coeff = residual * v / total;
            let row = grad.embeddings.entry(i).or_insert_with(|| vec![0.0; model.dim]);
            for (g, u) in row.iter_mut().zip(&model.output_weights) {
                *g += coeff * u;
            }
        }
    }
    Ok(grad)
}

/// Seeded SGD. Embeddings start uniform in `[-1/dim, 1/dim]`; the output
/// layer starts at zero.
pub fn train_embbag(
    data: &[(SparseVector, bool)],
    n_features: usize,
    vocab_hash: &str,
    config: &EmbBagConfig,
) -> Result<EmbeddingBagModel, ModelError> {
    check_classes(data)?;
    check_common(config.epochs, config.learning_rate, config.batch_size)?;
    if config.dim < 2 {
        return Err(ModelError::Config(format!("embedding dim must be at least 2, got {}", config.dim)));
    }
    for (x, _) in data {
        x.check_dim(n_features)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bound = 1.0 / config.dim as f64;
    let embeddings = (0..n_features)
        .map(|_| (0..config.dim).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    let mut model = EmbeddingBagModel {
        embeddings,
        output_weights: vec![0.0; config.dim],
        output_bias: 0.0,
        dim: config.dim,
        vocab_hash: vocab_hash.to_string(),
        train_meta: TrainMeta {
            seed: config.seed,
            epochs: config.epochs,
            learning_rate: config.learning_rate,
            batch_size: config.batch_size,
        },
    };
    let lr = config.learning_rate;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch: Vec<(SparseVector, bool)> = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&k| data[k].clone()));
            let grad = embbag_gradient(&model, &batch)?;
            for (i, row) in grad.embeddings {
                for (e, g) in model.embeddings[i].iter_mut().zip(row) {
                    *e -= lr * g;
                }
            }
            for (u, g) in model.output_weights.iter_mut().zip(&grad.output_weights) {
                *u -= lr * g;
            }
            model.output_bias -= lr * grad.output_bias;
        }
        let loss = embbag_loss(&model, data)?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        log::debug!("embbag epoch {epoch}: loss {loss:.6}");
    }
    Ok(model)
}

/// Either trained model family, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    Logreg(LinearModel),
    Embbag(EmbeddingBagModel),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    model: Model,
}

impl Model {
    pub fn vocab_hash(&self) -> &str {
        match self {
            Model::Logreg(m) => &m.vocab_hash,
            Model::Embbag(m) => &m.vocab_hash,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Model::Logreg(_) => "logreg",
            Model::Embbag(_) => "embbag",
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<f64, ModelError> {
        match self {
            Model::Logreg(m) => predict_linear(m, x),
            Model::Embbag(m) => predict_embbag(m, x),
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&file).expect("models always serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(json).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported version {}", file.version)));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Scores produced out-of-band (e.g. by a fine-tuned transformer).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub scores: BTreeMap<String, f64>,
    pub source_name: String,
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    id: String,
    score: f64,
}

impl ScoreTable {
    pub fn from_pairs<I>(source_name: &str, pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (String, f64)>,
    {
        let mut scores = BTreeMap::new();
        for (id, score) in pairs {
            if !(0.0..=1.0).contains(&score) {
                return Err(ModelError::ScoreRange { id, score });
            }
            if scores.contains_key(&id) {
                return Err(ModelError::DuplicateScore(id));
            }
            scores.insert(id, score);
        }
        Ok(ScoreTable {
            scores,
            source_name: source_name.to_string(),
        })
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.scores.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Writes JSON Lines sorted by id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        for (id, &score) in &self.scores {
            let rec = ScoreRecord { id: id.clone(), score };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("records serialize"))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses a JSON Lines `{id, score}` file; the table is named after the file
/// stem.
pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ScoreTable, ModelError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "external".into());
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| ModelError::ScoreParse {
            line: i + 1,
            message: e.to_string(),
        })?;
        pairs.push((rec.id, rec.score));
    }
    if pairs.is_empty() {
        log::warn!("score file {} is empty", path.display());
    }
    ScoreTable::from_pairs(&name, pairs)
}

/// Anything that can assign a newsworthiness score to a document.
pub trait DocumentScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score_document(&self, doc: &Document, field: TextField) -> Result<f64, ModelError>;
}

/// A trained model bound to the vocabulary it was trained on.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    name: String,
    model: Model,
    vocab: Vocabulary,
    weighting: Weighting,
}

impl ModelScorer {
    pub fn new(name: impl Into<String>, model: Model, vocab: Vocabulary, weighting: Weighting) -> Result<Self, ModelError> {
        let vocab_hash = vocab.hash();
        if model.vocab_hash() != vocab_hash {
            return Err(ModelError::VocabMismatch {
                model: model.vocab_hash().to_string(),
                vocab: vocab_hash,
            });
        }
        Ok(ModelScorer {
            name: name.into(),
            model,
            vocab,
            weighting,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl DocumentScorer for ModelScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_document(&self, doc: &Document, field: TextField) -> Result<f64, ModelError> {
        let x = text::vectorize(doc, &self.vocab, field, self.weighting)?;
        self.model.predict(&x)
    }
}

impl DocumentScorer for ScoreTable {
    fn name(&self) -> &str {
        &self.source_name
    }

    fn score_document(&self, doc: &Document, _field: TextField) -> Result<f64, ModelError> {
        self.get(&doc.id).ok_or_else(|| ModelError::MissingScore(doc.id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(entries: &[(usize, f64)]) -> SparseVector {
        SparseVector::new(entries.to_vec()).unwrap()
    }

    fn meta() -> TrainMeta {
        TrainMeta {
            seed: 0,
            epochs: 1,
            learning_rate: 0.1,
            batch_size: 64,
        }
    }

    fn linear(weights: Vec<f64>, bias: f64) -> LinearModel {
        LinearModel {
            weights,
            bias,
            vocab_hash: "h".into(),
            l2: 0.0,
            train_meta: meta(),
        }
    }

    /// Feature 0 only on positives, feature 1 only on negatives, plus a
    /// shared noise feature 2.
    fn separable(n: usize) -> Vec<(SparseVector, bool)> {
        (0..n)
            .map(|k| {
                let noise = (k % 3) as f64;
                if k % 2 == 0 {
                    (sv(&[(0, 1.0), (2, noise)]), true)
                } else {
                    (sv(&[(1, 1.0), (2, noise)]), false)
                }
            })
            .collect()
    }

    #[test]
    fn sigmoid_closed_forms() {
        assert_eq!(predict_linear(&linear(vec![0.0, 0.0], 0.0), &sv(&[(0, 3.0), (1, 2.0)])).unwrap(), 0.5);
        let p = predict_linear(&linear(vec![1.0], 0.0), &sv(&[(0, 1.0)])).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-6);
        assert_eq!(sigmoid(-10_000.0), 0.0);
        assert_eq!(sigmoid(10_000.0), 1.0);
        assert!(bce_from_margin(-10_000.0, true).is_finite());
    }

    #[test]
    fn predict_rejects_out_of_range_index() {
        let err = predict_linear(&linear(vec![1.0], 0.0), &sv(&[(3, 1.0)])).unwrap_err();
        assert!(matches!(err, ModelError::Text(TextError::IndexOutOfRange { index: 3, size: 1 })));
    }

    #[test]
    fn logreg_learns_sign_pattern() {
        let data = separable(200);
        let model = train_logreg(&data, 3, "h", &LogRegConfig::default()).unwrap();
        assert!(model.weights[0] > 0.0 && model.weights[1] < 0.0, "{:?}", model.weights);
        let initial = logreg_loss(&linear(vec![0.0; 3], 0.0), &data).unwrap();
        assert!(logreg_loss(&model, &data).unwrap() <= initial);
    }

    #[test]
    fn logreg_flip_symmetry() {
        let data = separable(120);
        let flipped: Vec<_> = data.iter().map(|(x, y)| (x.clone(), !y)).collect();
        let cfg = LogRegConfig {
            seed: 9,
            ..Default::default()
        };
        let a = train_logreg(&data, 3, "h", &cfg).unwrap();
        let b = train_logreg(&flipped, 3, "h", &cfg).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-6);
        }
        assert!((a.bias + b.bias).abs() < 1e-6);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(150);
        let cfg = LogRegConfig {
            seed: 5,
            ..Default::default()
        };
        let a = Model::Logreg(train_logreg(&data, 3, "h", &cfg).unwrap());
        let b = Model::Logreg(train_logreg(&data, 3, "h", &cfg).unwrap());
        assert_eq!(a.to_json(), b.to_json());
        let ecfg = EmbBagConfig {
            dim: 4,
            seed: 5,
            ..Default::default()
        };
        let a = Model::Embbag(train_embbag(&data, 3, "h", &ecfg).unwrap());
        let b = Model::Embbag(train_embbag(&data, 3, "h", &ecfg).unwrap());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![(sv(&[(0, 1.0)]), true), (sv(&[(0, 2.0)]), true)];
        assert!(matches!(train_logreg(&data, 1, "h", &LogRegConfig::default()), Err(ModelError::SingleClass)));
        assert!(matches!(train_embbag(&data, 1, "h", &EmbBagConfig::default()), Err(ModelError::SingleClass)));
    }

    #[test]
    fn divergence_names_epoch() {
        let data = vec![(sv(&[(0, 1e300)]), true), (sv(&[(1, 1.0)]), false)];
        let cfg = LogRegConfig {
            learning_rate: 1e10,
            l2: 1e-4,
            ..Default::default()
        };
        match train_logreg(&data, 2, "h", &cfg) {
            Err(ModelError::Diverged { epoch }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn unused_feature_column_changes_nothing() {
        let data = separable(100);
        let cfg = LogRegConfig::default();
        let narrow = train_logreg(&data, 3, "h", &cfg).unwrap();
        let wide = train_logreg(&data, 4, "h", &cfg).unwrap();
        assert_eq!(wide.weights[3], 0.0);
        for (x, _) in &data {
            assert_eq!(predict_linear(&narrow, x).unwrap(), predict_linear(&wide, x).unwrap());
        }
    }

    #[test]
    fn l2_shrinks_weights_at_convergence() {
        let data = separable(40);
        let norm = |l2: f64| {
            let cfg = LogRegConfig {
                l2,
                epochs: 4000,
                learning_rate: 0.5,
                batch_size: data.len(),
                seed: 1,
            };
            let m = train_logreg(&data, 3, "h", &cfg).unwrap();
            m.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
        };
        let norms: Vec<f64> = [0.01, 0.05, 0.2, 1.0].iter().map(|&l| norm(l)).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{norms:?}");
        }
    }

    fn tiny_embbag(dim: usize, emb: Vec<Vec<f64>>, u: Vec<f64>, c: f64) -> EmbeddingBagModel {
        EmbeddingBagModel {
            embeddings: emb,
            output_weights: u,
            output_bias: c,
            dim,
            vocab_hash: "h".into(),
            train_meta: meta(),
        }
    }

    #[test]
    fn embbag_closed_forms() {
        let m = tiny_embbag(1, vec![vec![2.0]], vec![1.0], 0.0);
        let p = predict_embbag(&m, &sv(&[(0, 1.0)])).unwrap();
        assert!((p - 0.880_797_077_977_882_3).abs() < 1e-6);
        let m = tiny_embbag(2, vec![vec![5.0, -3.0]], vec![1.0, 2.0], 0.7);
        assert_eq!(predict_embbag(&m, &SparseVector::empty()).unwrap(), sigmoid(0.7));
        let one = predict_embbag(&m, &sv(&[(0, 1.0)])).unwrap();
        let many = predict_embbag(&m, &sv(&[(0, 7.5)])).unwrap();
        assert!((one - many).abs() < 1e-15);
    }

    #[test]
    fn embbag_rejects_bad_dim() {
        let data = separable(10);
        let cfg = EmbBagConfig {
            dim: 1,
            ..Default::default()
        };
        assert!(matches!(train_embbag(&data, 3, "h", &cfg), Err(ModelError::Config(_))));
    }

    #[test]
    fn embbag_init_bounds() {
        let data = separable(10);
        let cfg = EmbBagConfig {
            dim: 8,
            epochs: 1,
            learning_rate: 1e-12,
            ..Default::default()
        };
        let m = train_embbag(&data, 3, "h", &cfg).unwrap();
        assert!(m.embeddings.iter().flatten().all(|e| e.abs() <= 1.0 / 8.0 + 1e-9));
        assert!(m.embeddings.iter().all(|row| row.len() == 8));
    }

    #[test]
    fn model_file_round_trip() {
        let m = Model::Logreg(linear(vec![0.1, -0.25, 1e-17], 0.3));
        let json = m.to_json();
        assert!(json.starts_with("{\"version\":1,\"family\":\"logreg\""), "{json}");
        let back = Model::from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), json);
        let e = Model::Embbag(tiny_embbag(2, vec![vec![0.5, -1.0]], vec![0.1, 0.2], -0.4));
        assert_eq!(Model::from_json(&e.to_json()).unwrap(), e);
        assert!(Model::from_json("{\"version\":9,\"family\":\"logreg\"}").is_err());
    }

    #[test]
    fn score_table_validation() {
        let t = ScoreTable::from_pairs("rt", vec![("a".into(), 0.2), ("b".into(), 1.0), ("c".into(), 0.0)]).unwrap();
        assert_eq!(t.len(), 3);
        let err = ScoreTable::from_pairs("rt", vec![("bad".into(), 1.7)]).unwrap_err();
        assert!(err.to_string().contains("bad"));
        let err = ScoreTable::from_pairs("rt", vec![("a".into(), 0.1), ("a".into(), 0.2)]).unwrap_err();
        assert!(matches!(err, ModelError::DuplicateScore(id) if id == "a"));
    }

    #[test]
    fn score_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roberta-external.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"score\":0.9}\n{\"id\":\"b\",\"score\":0.1}\n\n{\"id\":\"c\",\"score\":0.5}\n").unwrap();
        let t = load_external_scores(&path).unwrap();
        assert_eq!(t.source_name, "roberta-external");
        assert_eq!(t.len(), 3);
        let out = dir.path().join("copy.jsonl");
        t.save(&out).unwrap();
        assert_eq!(load_external_scores(&out).unwrap().scores, t.scores);

        let empty = dir.path().join("empty.jsonl");
        std::fs::write(&empty, "").unwrap();
        assert!(load_external_scores(&empty).unwrap().is_empty());

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{\"id\":\"a\",\"score\":0.5}\n{\"id\":\"z\",\"score\":1.7}\n").unwrap();
        let err = load_external_scores(&bad).unwrap_err();
        assert!(err.to_string().contains("\"z\""), "{err}");
    }

    #[test]
    fn model_scorer_checks_vocab_hash() {
        let docs = vec![Document::new("1", "c", "alpha beta"), Document::new("2", "c", "gamma")];
        let cfg = text::VocabConfig {
            min_df: 0.0,
            max_df: 1.0,
            ..Default::default()
        };
        let vocab = text::build_vocab(&docs, &cfg, &Default::default()).unwrap();
        let model = Model::Logreg(LinearModel {
            vocab_hash: "not-it".into(),
            ..linear(vec![0.0; vocab.len()], 0.0)
        });
        assert!(matches!(
            ModelScorer::new("lr", model, vocab.clone(), Weighting::Count),
            Err(ModelError::VocabMismatch { .. })
        ));
        let model = Model::Logreg(LinearModel {
            vocab_hash: vocab.hash(),
            ..linear(vec![0.0; vocab.len()], 0.0)
        });
        let scorer = ModelScorer::new("lr", model, vocab, Weighting::Count).unwrap();
        assert_eq!(scorer.score_document(&docs[0], TextField::Body).unwrap(), 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_score_monotone_in_weight(
                weights in proptest::collection::vec(-3.0f64..3.0, 4),
                which in 0usize..4,
                bump in 0.01f64..2.0,
                xv in 0.1f64..3.0,
            ) {
                let x = sv(&[(which, xv)]);
                let base = linear(weights.clone(), 0.0);
                let mut w2 = weights;
                w2[which] += bump;
                let bumped = linear(w2, 0.0);
                prop_assert!(bumped.margin(&x).unwrap() > base.margin(&x).unwrap());
                prop_assert!(predict_linear(&bumped, &x).unwrap() > predict_linear(&base, &x).unwrap());
            }
        }
    }
}
