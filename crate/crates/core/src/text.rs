//! Tokenization, thresholded n-gram vocabularies, sparse bag-of-words
//! vectors, publishing-artifact stopword mining and smoothed unigram
//! distributions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{Document, LabeledDocument};
use crate::models::{self, LogRegConfig};

/// Tokens kept per document; longer inputs are truncated.
pub const MAX_DOC_TOKENS: usize = 5_000;

pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("no alternate text on document {0:?}")]
    NoAltText(String),
    #[error("cannot build a vocabulary from zero documents")]
    NoDocuments,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature index {index} out of range for vocabulary of {size} terms")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("invalid sparse vector: {0}")]
    InvalidVector(String),
    #[error("vocabulary file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which part of a document feeds the featurizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextField {
    /// Title followed by body.
    #[default]
    Body,
    AltText,
}

impl FromStr for TextField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "body" => Ok(TextField::Body),
            "alt_text" | "alt-text" => Ok(TextField::AltText),
            _ => Err(format!("unknown text field {s:?} (expected body or alt_text)")),
        }
    }
}

impl fmt::Display for TextField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextField::Body => "body",
            TextField::AltText => "alt_text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Count,
    Binary,
}

impl FromStr for Weighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(Weighting::Count),
            "binary" => Ok(Weighting::Binary),
            _ => Err(format!("unknown weighting {s:?} (expected count or binary)")),
        }
    }
}

fn normalize(text: &str) -> String {
    let once: String = text.nfkc().collect::<String>().to_lowercase();
    once.nfkc().collect()
}

/// Lowercased, NFKC-normalized runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut normalized = normalize(text);
    // Case mapping can leave text that normalizes further; iterate to a
    // fixed point so tokenization is idempotent.
    for _ in 0..4 {
        let next = normalize(&normalized);
        if next == normalized {
            break;
        }
        normalized = next;
    }
    normalized
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Tokens of the selected field, truncated to [`MAX_DOC_TOKENS`].
pub fn document_tokens(doc: &Document, field: TextField) -> Result<Vec<String>, TextError> {
    let mut tokens = match field {
        TextField::Body => {
            let mut t = tokenize(&doc.title);
            t.extend(tokenize(&doc.body));
            t
        }
        TextField::AltText => match &doc.alt_text {
            Some(alt) => tokenize(alt),
            None => return Err(TextError::NoAltText(doc.id.clone())),
        },
    };
    tokens.truncate(MAX_DOC_TOKENS);
    Ok(tokens)
}

/// Unigrams then bigrams over the token stream. Stopword unigrams are dropped
/// from the stream before bigrams form; multi-word stopwords drop only the
/// matching n-gram.
pub fn ngrams(tokens: &[String], ngram_max: usize, stopwords: &BTreeSet<String>) -> Vec<String> {
    let kept: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !stopwords.contains(*t))
        .collect();
    let mut out: Vec<String> = kept.iter().map(|t| t.to_string()).collect();
    if ngram_max >= 2 {
        out.extend(
            kept.windows(2)
                .map(|w| format!("{} {}", w[0], w[1]))
                .filter(|g| !stopwords.contains(g)),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub min_df: f64,
    pub max_df: f64,
    pub max_size: usize,
    pub ngram_max: usize,
    pub field: TextField,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_df: 0.01,
            max_df: 0.5,
            max_size: 13_000,
            ngram_max: 2,
            field: TextField::Body,
        }
    }
}

impl VocabConfig {
    pub fn validate(&self) -> Result<(), TextError> {
        let cfg = |m: String| Err(TextError::Config(m));
        if !(0.0..=1.0).contains(&self.min_df) || !(0.0..=1.0).contains(&self.max_df) {
            return cfg(format!("df bounds must lie in [0, 1], got {} and {}", self.min_df, self.max_df));
        }
        if self.min_df >= self.max_df {
            return cfg(format!("min_df ({}) must be below max_df ({})", self.min_df, self.max_df));
        }
        if !(1..=2).contains(&self.ngram_max) {
            return cfg(format!("ngram_max must be 1 or 2, got {}", self.ngram_max));
        }
        if self.max_size == 0 {
            return cfg("max_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Term index with document-frequency statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u64>,
    index: HashMap<String, usize>,
    n_docs: u64,
    stopwords: BTreeSet<String>,
    ngram_max: usize,
    min_df: f64,
    max_df: f64,
}

#[derive(Serialize, Deserialize)]
struct VocabTermRecord {
    term: String,
    doc_freq: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    ngram_max: usize,
    min_df: f64,
    max_df: f64,
    n_docs: u64,
    stopwords: Vec<String>,
    terms: Vec<VocabTermRecord>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self, index: usize) -> Option<u64> {
        self.doc_freq.get(index).copied()
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    pub fn df_bounds(&self) -> (f64, f64) {
        (self.min_df, self.max_df)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            ngram_max: self.ngram_max,
            min_df: self.min_df,
            max_df: self.max_df,
            n_docs: self.n_docs,
            stopwords: self.stopwords.iter().cloned().collect(),
            terms: self
                .terms
                .iter()
                .zip(&self.doc_freq)
                .map(|(term, &doc_freq)| VocabTermRecord {
                    term: term.clone(),
                    doc_freq,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary always serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TextError> {
        let file: VocabFile = serde_json::from_str(json).map_err(|e| TextError::Format(e.to_string()))?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(TextError::Format(format!("unsupported version {}", file.version)));
        }
        let mut index = HashMap::with_capacity(file.terms.len());
        for (i, t) in file.terms.iter().enumerate() {
            if index.insert(t.term.clone(), i).is_some() {
                return Err(TextError::Format(format!("duplicate term {:?}", t.term)));
            }
        }
        Ok(Vocabulary {
            doc_freq: file.terms.iter().map(|t| t.doc_freq).collect(),
            terms: file.terms.into_iter().map(|t| t.term).collect(),
            index,
            n_docs: file.n_docs,
            stopwords: file.stopwords.into_iter().collect(),
            ngram_max: file.ngram_max,
            min_df: file.min_df,
            max_df: file.max_df,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TextError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checksum of the serialized vocabulary; models carry it to refuse
    /// scoring against a different vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds a vocabulary from document frequencies. Terms outside
/// `[min_df, max_df]` (inclusive) and stopwords are dropped; above
/// `max_size`, the highest-df terms win with lexicographic tie-breaks.
/// Indices follow lexicographic term order.
pub fn build_vocab<'a, I>(docs: I, config: &VocabConfig, stopwords: &BTreeSet<String>) -> Result<Vocabulary, TextError>
where
    I: IntoIterator<Item = &'a Document>,
{
    config.validate()?;
    let mut df: HashMap<String, u64> = HashMap::new();
    let mut n_docs: u64 = 0;
    for doc in docs {
        n_docs += 1;
        let tokens = document_tokens(doc, config.field)?;
        let unique: HashSet<String> = ngrams(&tokens, config.ngram_max, stopwords).into_iter().collect();
        for gram in unique {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(TextError::NoDocuments);
    }
    let n = n_docs as f64;
    let mut kept: Vec<(String, u64)> = df
        .into_iter()
        .filter(|(term, count)| {
            let ratio = *count as f64 / n;
            ratio >= config.min_df && ratio <= config.max_df && !stopwords.contains(term)
        })
        .collect();
    if kept.len() > config.max_size {
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(config.max_size);
    }
    kept.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let index = kept.iter().enumerate().map(|(i, (t, _))| (t.clone(), i)).collect();
    let (terms, doc_freq) = kept.into_iter().unzip();
    Ok(Vocabulary {
        terms,
        doc_freq,
        index,
        n_docs,
        stopwords: stopwords.clone(),
        ngram_max: config.ngram_max,
        min_df: config.min_df,
        max_df: config.max_df,
    })
}

/// Sorted `(index, weight)` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Validates strictly increasing indices and finite, nonnegative weights.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self, TextError> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(TextError::InvalidVector(format!(
                    "indices not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        if let Some((i, w)) = entries.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(TextError::InvalidVector(format!("weight {w} at index {i}")));
        }
        Ok(SparseVector { entries })
    }

    pub fn empty() -> Self {
        SparseVector::default()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Errors if any index is `>= dim`.
    pub fn check_dim(&self, dim: usize) -> Result<(), TextError> {
        match self.max_index() {
            Some(index) if index >= dim => Err(TextError::IndexOutOfRange { index, size: dim }),
            _ => Ok(()),
        }
    }
}

pub fn vectorize(doc: &Document, vocab: &Vocabulary, field: TextField, weighting: Weighting) -> Result<SparseVector, TextError> {
    let tokens = document_tokens(doc, field)?;
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for gram in ngrams(&tokens, vocab.ngram_max, &vocab.stopwords) {
        if let Some(i) = vocab.index_of(&gram) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    if weighting == Weighting::Binary {
        entries.iter_mut().for_each(|e| e.1 = 1.0);
    }
    Ok(SparseVector { entries })
}

/// A term surfaced for stopword confirmation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub round: usize,
    pub term: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone)]
pub struct MiningConfig {
    pub rounds: usize,
    pub top_k: usize,
    pub vocab: VocabConfig,
    pub weighting: Weighting,
    pub train: LogRegConfig,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            rounds: 3,
            top_k: 20,
            vocab: VocabConfig::default(),
            weighting: Weighting::Count,
            train: LogRegConfig::default(),
        }
    }
}

/// Per-round record of what was surfaced and confirmed.
#[derive(Debug, Clone, Default)]
pub struct MiningRound {
    pub candidates: Vec<Candidate>,
    pub confirmed: Vec<String>,
    pub vocab_size: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MiningOutcome {
    pub stopwords: BTreeSet<String>,
    pub rounds: Vec<MiningRound>,
}

/// Repeatedly trains logistic regression, shows the `top_k` terms by
/// absolute coefficient to `review`, and excludes the confirmed ones from the
/// next vocabulary. Stops early once a round confirms nothing, since a
/// deterministic retrain would surface the same candidates.
pub fn mine_stopwords<F>(
    docs: &[LabeledDocument],
    config: &MiningConfig,
    initial: &BTreeSet<String>,
    mut review: F,
) -> Result<MiningOutcome, crate::Error>
where
    F: FnMut(&Candidate) -> bool,
{
    if config.rounds == 0 {
        return Err(TextError::Config("rounds must be at least 1".into()).into());
    }
    let mut outcome = MiningOutcome {
        stopwords: initial.clone(),
        rounds: Vec::new(),
    };
    for round in 1..=config.rounds {
        let vocab = build_vocab(docs.iter().map(|d| &d.document), &config.vocab, &outcome.stopwords)?;
        let data = docs
            .iter()
            .map(|d| Ok((vectorize(&d.document, &vocab, config.vocab.field, config.weighting)?, d.label)))
            .collect::<Result<Vec<_>, TextError>>()?;
        let model = models::train_logreg(&data, vocab.len(), &vocab.hash(), &config.train)?;

        let mut ranked: Vec<(usize, f64)> = model.weights.iter().copied().enumerate().filter(|(_, w)| *w != 0.0).collect();
        ranked.sort_by(|a, b| {
            b.1.abs()
                .total_cmp(&a.1.abs())
                .then_with(|| vocab.terms[a.0].cmp(&vocab.terms[b.0]))
        });
        let mut record = MiningRound {
            vocab_size: vocab.len(),
            ..Default::default()
        };
        for &(i, coefficient) in ranked.iter().take(config.top_k) {
            let candidate = Candidate {
                round,
                term: vocab.terms[i].clone(),
                coefficient,
            };
            if review(&candidate) {
                record.confirmed.push(candidate.term.clone());
            }
            record.candidates.push(candidate);
        }
        let done = record.confirmed.is_empty();
        outcome.stopwords.extend(record.confirmed.iter().cloned());
        log::info!(
            "stopword round {round}: vocab {} terms, {} confirmed",
            record.vocab_size,
            record.confirmed.len()
        );
        outcome.rounds.push(record);
        if done {
            break;
        }
    }
    Ok(outcome)
}

/// Additively smoothed unigram probabilities over a fixed, sorted support.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramDistribution {
    terms: Vec<String>,
    probs: Vec<f64>,
    smoothing: f64,
}

impl UnigramDistribution {
    /// Builds a distribution directly from aligned support and probabilities.
    pub fn from_parts(terms: Vec<String>, probs: Vec<f64>, smoothing: f64) -> Result<Self, TextError> {
        if terms.len() != probs.len() || terms.is_empty() {
            return Err(TextError::Config("support and probabilities must be non-empty and aligned".into()));
        }
        Ok(UnigramDistribution { terms, probs, smoothing })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn prob(&self, term: &str) -> Option<f64> {
        self.terms
            .binary_search_by(|t| t.as_str().cmp(term))
            .ok()
            .map(|i| self.probs[i])
    }
}

/// Raw unigram counts over title + body.
pub fn unigram_counts<'a, I>(docs: I) -> HashMap<String, u64>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut counts = HashMap::new();
    for doc in docs {
        let tokens = document_tokens(doc, TextField::Body).expect("body field always present");
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// `p(t) = (count(t) + s) / (total + s·|V|)` over `shared_vocab`, where
/// `total` counts only in-support tokens.
pub fn unigram_distribution<'a, I>(docs: I, shared_vocab: &BTreeSet<String>, smoothing: f64) -> Result<UnigramDistribution, TextError>
where
    I: IntoIterator<Item = &'a Document>,
{
    if shared_vocab.is_empty() {
        return Err(TextError::Config("shared vocabulary is empty".into()));
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(TextError::Config(format!("smoothing must be positive, got {smoothing}")));
    }
    let counts = unigram_counts(docs);
    Ok(distribution_from_counts(&counts, shared_vocab, smoothing))
}

pub(crate) fn distribution_from_counts(
    counts: &HashMap<String, u64>,
    shared_vocab: &BTreeSet<String>,
    smoothing: f64,
) -> UnigramDistribution {
    let terms: Vec<String> = shared_vocab.iter().cloned().collect();
    let raw: Vec<f64> = terms
        .iter()
        .map(|t| counts.get(t).copied().unwrap_or(0) as f64)
        .collect();
    let total: f64 = raw.iter().sum();
    let denom = total + smoothing * terms.len() as f64;
    let probs = raw.iter().map(|c| (c + smoothing) / denom).collect();
    UnigramDistribution { terms, probs, smoothing }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, body: &str) -> Document {
        Document::new(id, "c", body)
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The U.S. Soccer Fed."), ["the", "u", "s", "soccer", "fed"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("op-ed, 2019's ＡＢＣ"), ["op", "ed", "2019", "s", "abc"]);
    }

    #[test]
    fn title_precedes_body() {
        let mut d = doc("a", "body words");
        d.title = "Headline".into();
        assert_eq!(document_tokens(&d, TextField::Body).unwrap(), ["headline", "body", "words"]);
    }

    #[test]
    fn long_documents_truncated() {
        let body = "w ".repeat(MAX_DOC_TOKENS + 100);
        assert_eq!(document_tokens(&doc("a", &body), TextField::Body).unwrap().len(), MAX_DOC_TOKENS);
    }

    #[test]
    fn alt_text_field() {
        let mut d = doc("a", "body");
        assert!(matches!(document_tokens(&d, TextField::AltText), Err(TextError::NoAltText(_))));
        d.alt_text = Some("attack killed".into());
        assert_eq!(document_tokens(&d, TextField::AltText).unwrap(), ["attack", "killed"]);
    }

    #[test]
    fn ngram_stopwords() {
        let toks: Vec<String> = ["business", "review", "court", "ruled"].iter().map(|s| s.to_string()).collect();
        let grams = ngrams(&toks, 2, &set(&["business review", "court"]));
        assert_eq!(grams, ["business", "review", "ruled", "review ruled"]);
        assert_eq!(ngrams(&toks, 1, &BTreeSet::new()).len(), 4);
    }

    #[test]
    fn max_df_boundary() {
        // "common" in 6 of 10 docs: 0.6 > 0.5. "half" in 5 of 10: kept (inclusive).
        let docs: Vec<Document> = (0..10)
            .map(|i| {
                let mut words = vec![format!("u{i}")];
                if i < 6 {
                    words.push("common".into());
                }
                if i < 5 {
                    words.push("half".into());
                }
                doc(&i.to_string(), &words.join(" "))
            })
            .collect();
        let cfg = VocabConfig {
            min_df: 0.0,
            ngram_max: 1,
            ..Default::default()
        };
        let v = build_vocab(&docs, &cfg, &BTreeSet::new()).unwrap();
        assert!(v.index_of("common").is_none());
        assert!(v.index_of("half").is_some());
        let v = build_vocab(&docs, &cfg, &set(&["half"])).unwrap();
        assert!(v.index_of("half").is_none());
    }

    #[test]
    fn vocab_truncation_by_df_then_lexicographic() {
        let docs = vec![doc("1", "a b c d"), doc("2", "a b c"), doc("3", "a z y"), doc("4", "q r s t")];
        let cfg = VocabConfig {
            min_df: 0.0,
            max_df: 1.0,
            max_size: 4,
            ngram_max: 1,
            field: TextField::Body,
        };
        let v = build_vocab(&docs, &cfg, &BTreeSet::new()).unwrap();
        // df: a=3, b=2, c=2, then ties at 1: d, q, r, ... → "d" wins.
        assert_eq!(v.terms(), ["a", "b", "c", "d"]);
        assert_eq!(v.doc_freq(0), Some(3));
    }

    #[test]
    fn vocab_errors() {
        let cfg = VocabConfig::default();
        assert!(matches!(build_vocab(&[], &cfg, &BTreeSet::new()), Err(TextError::NoDocuments)));
        let bad = VocabConfig {
            min_df: 0.5,
            max_df: 0.5,
            ..Default::default()
        };
        assert!(matches!(build_vocab(&[doc("a", "x")], &bad, &BTreeSet::new()), Err(TextError::Config(_))));
    }

    fn court_vocab() -> Vocabulary {
        let json = r#"{"version":1,"ngram_max":2,"min_df":0.01,"max_df":0.5,"n_docs":10,
            "stopwords":[],"terms":[{"term":"court","doc_freq":3},{"term":"court ruled","doc_freq":2}]}"#;
        let v = Vocabulary::from_json(json).unwrap();
        assert_eq!(v.index_of("court"), Some(0));
        assert_eq!(v.index_of("court ruled"), Some(1));
        v
    }

    #[test]
    fn vectorize_counts_unigrams_and_bigrams() {
        let v = court_vocab();
        let x = vectorize(&doc("d", "court ruled"), &v, TextField::Body, Weighting::Count).unwrap();
        assert_eq!(x.entries(), [(0, 1.0), (1, 1.0)]);
        let x = vectorize(&doc("d", "absent tokens only"), &v, TextField::Body, Weighting::Count).unwrap();
        assert!(x.is_empty());
    }

    #[test]
    fn vectorize_binary() {
        let v = court_vocab();
        let text = "court court court court court";
        let counted = vectorize(&doc("d", text), &v, TextField::Body, Weighting::Count).unwrap();
        assert_eq!(counted.entries()[0], (0, 5.0));
        let bin = vectorize(&doc("d", text), &v, TextField::Body, Weighting::Binary).unwrap();
        assert_eq!(bin.entries()[0], (0, 1.0));
    }

    #[test]
    fn vectorize_alt_text_missing() {
        let v = court_vocab();
        let err = vectorize(&doc("d", "x"), &v, TextField::AltText, Weighting::Count).unwrap_err();
        assert!(err.to_string().contains("no alternate text"));
    }

    #[test]
    fn sparse_vector_validation() {
        assert!(SparseVector::new(vec![(0, 1.0), (0, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(2, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(0, f64::NAN)]).is_err());
        let v = SparseVector::new(vec![(1, 1.0), (4, 2.0)]).unwrap();
        assert!(v.check_dim(5).is_ok());
        assert!(matches!(v.check_dim(4), Err(TextError::IndexOutOfRange { index: 4, size: 4 })));
    }

    #[test]
    fn vocab_json_round_trip_is_bit_exact() {
        let mut v = court_vocab();
        v.stopwords = set(&["op ed", "sportsmonday"]);
        let json = v.to_json();
        let back = Vocabulary::from_json(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_json(), json);
        assert_eq!(back.hash(), v.hash());
        assert!(json.contains("\"version\": 1"));
    }

    #[test]
    fn vocab_hash_changes_with_content() {
        let v = court_vocab();
        let mut w = v.clone();
        w.stopwords.insert("x".into());
        assert_ne!(v.hash(), w.hash());
    }

    #[test]
    fn unigram_pure_smoothing() {
        let d = unigram_distribution(&[doc("a", "zzz")], &set(&["a", "b", "c", "d"]), 0.5).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn unigram_hand_arithmetic() {
        let d = unigram_distribution(&[doc("x", "a a a b")], &set(&["a", "b"]), 1.0).unwrap();
        assert!((d.prob("a").unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!((d.prob("b").unwrap() - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn unigram_preconditions() {
        assert!(unigram_distribution(&[doc("x", "a")], &BTreeSet::new(), 1.0).is_err());
        assert!(unigram_distribution(&[doc("x", "a")], &set(&["a"]), 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tokenize_idempotent(text in any::<String>()) {
                let once = tokenize(&text);
                prop_assert_eq!(tokenize(&once.join(" ")), once);
            }

            #[test]
            fn unigram_sums_to_one(
                words in proptest::collection::vec("[a-f]{1,2}", 0..60),
                smoothing in 0.01f64..5.0,
            ) {
                let support: BTreeSet<String> = ["a", "b", "c", "dd", "ef"].iter().map(|s| s.to_string()).collect();
                let d = unigram_distribution(&[doc("x", &words.join(" "))], &support, smoothing).unwrap();
                let sum: f64 = d.probs().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(d.probs().iter().all(|&p| p > 0.0));
            }

            #[test]
            fn vocab_respects_thresholds(
                bodies in proptest::collection::vec(proptest::collection::vec("[a-h]", 1..12), 1..30),
                min_df in 0.0f64..0.4,
                span in 0.05f64..0.6,
            ) {
                let docs: Vec<Document> = bodies.iter().enumerate().map(|(i, w)| doc(&i.to_string(), &w.join(" "))).collect();
                let cfg = VocabConfig { min_df, max_df: (min_df + span).min(1.0), max_size: 25, ngram_max: 2, field: TextField::Body };
                let v = build_vocab(&docs, &cfg, &BTreeSet::new()).unwrap();
                prop_assert!(v.len() <= 25);
                for (i, term) in v.terms().iter().enumerate() {
                    let ratio = v.doc_freq(i).unwrap() as f64 / v.n_docs() as f64;
                    prop_assert!(ratio >= cfg.min_df && ratio <= cfg.max_df, "{} has df {}", term, ratio);
                    prop_assert_eq!(v.index_of(term), Some(i));
                }
                for d in &docs {
                    let x = vectorize(d, &v, TextField::Body, Weighting::Count).unwrap();
                    prop_assert!(x.check_dim(v.len()).is_ok());
                    prop_assert!(x.entries().windows(2).all(|w| w[0].0 < w[1].0));
                }
            }
        }
    }
}
