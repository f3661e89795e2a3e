//! Rank-based AUC, unigram KL divergence between corpora, document ranking
//! and scoring of blind annotation ratings.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::models::{DocumentScorer, ModelError};
use crate::text::{self, TextError, TextField, UnigramDistribution};

/// Size cap of the shared unigram support used for corpus comparisons.
pub const KL_VOCAB_CAP: usize = 50_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC undefined: {0}")]
    AucUndefined(String),
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score for item {0} is NaN")]
    NanScore(usize),
    #[error("distributions have different supports")]
    SupportMismatch,
    #[error("KL matrix needs at least two corpora, got {0}")]
    TooFewCorpora(usize),
    #[error("corpus {0:?} is empty")]
    EmptyCorpus(String),
    #[error("rated document {0:?} is not in the ranked list")]
    UnknownId(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn check_auc_inputs(scores: &[f64], labels: &[bool]) -> Result<(u64, u64), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NanScore(i));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::AucUndefined(format!(
            "need both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Mann-Whitney AUC: `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`, by sorting once and
/// assigning midranks to tie groups. Works in doubled integer ranks so the
/// result is exactly the pairwise count divided by `n_pos·n_neg`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = check_auc_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of 2·rank, with tied groups sharing (first + last).
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let doubled_midrank = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        doubled_rank_sum += doubled_midrank * pos_in_group;
        i = j;
    }
    let np = n_pos as u128;
    let doubled_u = doubled_rank_sum - np * (np + 1);
    Ok(doubled_u as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

/// O(n²) pair count with the same tie convention.
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = check_auc_inputs(scores, labels)?;
    let mut doubled: u128 = 0;
    let pos = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s);
    for sp in pos {
        for sn in scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s) {
            if sp > sn {
                doubled += 2;
            } else if sp == sn {
                doubled += 1;
            }
        }
    }
    Ok(doubled as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub model_name: String,
    pub dataset_name: String,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AUC: {:.4} (n_pos={}, n_neg={})", self.auc, self.n_pos, self.n_neg)
    }
}

/// AUC report for scored, labeled items.
pub fn evaluate_scores(scores: &[f64], labels: &[bool], model_name: &str, dataset_name: &str) -> Result<EvalReport, EvalError> {
    let value = auc(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(EvalReport {
        auc: value,
        n_pos,
        n_neg: labels.len() - n_pos,
        model_name: model_name.to_string(),
        dataset_name: dataset_name.to_string(),
    })
}

/// `Σ p·ln(p/q)` in nats.
pub fn kl_divergence(p: &UnigramDistribution, q: &UnigramDistribution) -> Result<f64, EvalError> {
    if p.terms() != q.terms() {
        return Err(EvalError::SupportMismatch);
    }
    let sum: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .filter(|(pk, _)| **pk > 0.0)
        .map(|(pk, qk)| pk * (pk / qk).ln())
        .sum();
    // Gibbs' inequality; rounding can produce a tiny negative.
    Ok(sum.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlMatrix {
    pub corpus_ids: Vec<String>,
    /// `values[i][j] = KL(p_i ‖ p_j)`.
    pub values: Vec<Vec<f64>>,
}

impl KlMatrix {
    pub fn get(&self, from: &str, to: &str) -> Option<f64> {
        let i = self.corpus_ids.iter().position(|c| c == from)?;
        let j = self.corpus_ids.iter().position(|c| c == to)?;
        Some(self.values[i][j])
    }

    /// CSV with corpus ids as header row and first column; rows are the base
    /// distribution.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.corpus_ids.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.corpus_ids.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        self.write_csv(File::create(path)?)
    }
}

/// Pairwise KL over smoothed unigram distributions. The shared support is
/// the union of all corpus unigrams, capped at the [`KL_VOCAB_CAP`] most
/// frequent overall (ties lexicographic).
pub fn kl_matrix(corpora: &[(String, Vec<Document>)], smoothing: f64) -> Result<KlMatrix, EvalError> {
    if corpora.len() < 2 {
        return Err(EvalError::TooFewCorpora(corpora.len()));
    }
    if let Some((id, _)) = corpora.iter().find(|(_, docs)| docs.is_empty()) {
        return Err(EvalError::EmptyCorpus(id.clone()));
    }
    let counts: Vec<HashMap<String, u64>> = corpora.par_iter().map(|(_, docs)| text::unigram_counts(docs)).collect();
    let mut overall: HashMap<&str, u64> = HashMap::new();
    for c in &counts {
        for (t, n) in c {
            *overall.entry(t.as_str()).or_insert(0) += n;
        }
    }
    let mut ranked: Vec<(&str, u64)> = overall.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(KL_VOCAB_CAP);
    let shared: BTreeSet<String> = ranked.into_iter().map(|(t, _)| t.to_string()).collect();
    if shared.is_empty() {
        return Err(TextError::Config("corpora contain no tokens".into()).into());
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(TextError::Config(format!("smoothing must be positive, got {smoothing}")).into());
    }
    let dists: Vec<UnigramDistribution> = counts
        .iter()
        .map(|c| text::distribution_from_counts(c, &shared, smoothing))
        .collect();
    let n = dists.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                values[i][j] = kl_divergence(&dists[i], &dists[j])?;
            }
        }
    }
    Ok(KlMatrix {
        corpus_ids: corpora.iter().map(|(id, _)| id.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    /// Score descending, ties by id ascending.
    pub entries: Vec<RankedEntry>,
    pub model_name: String,
    pub corpus_id: String,
}

#[derive(Serialize)]
struct RankedRecord<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
    title: &'a str,
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

impl RankedList {
    /// Sorts arbitrary entries into rank order; rejects duplicate ids.
    pub fn from_entries(mut entries: Vec<RankedEntry>, model_name: &str, corpus_id: &str) -> Result<Self, EvalError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(EvalError::DuplicateId(e.id.clone()));
            }
        }
        entries.sort_by(rank_order);
        Ok(RankedList {
            entries,
            model_name: model_name.to_string(),
            corpus_id: corpus_id.to_string(),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    /// JSON Lines `{rank, id, score, title}`, rank starting at 1. `limit`
    /// keeps only the head of the list.
    pub fn write_jsonl<W: Write>(&self, writer: W, limit: Option<usize>) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        let n = limit.unwrap_or(self.entries.len());
        for (k, e) in self.top(n).iter().enumerate() {
            let rec = RankedRecord {
                rank: k + 1,
                id: &e.id,
                score: e.score,
                title: &e.title,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("records serialize"))?;
        }
        w.flush()
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>, limit: Option<usize>) -> std::io::Result<()> {
        self.write_jsonl(File::create(path)?, limit)
    }
}

/// Scores every document (in parallel) and sorts into a [`RankedList`].
pub fn rank_documents(docs: &[Document], scorer: &dyn DocumentScorer, field: TextField) -> Result<RankedList, EvalError> {
    let entries = docs
        .par_iter()
        .map(|d| {
            Ok(RankedEntry {
                id: d.id.clone(),
                score: scorer.score_document(d, field)?,
                title: d.title.clone(),
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let corpus_id = docs.first().map(|d| d.corpus_id.as_str()).unwrap_or_default();
    RankedList::from_entries(entries, scorer.name(), corpus_id)
}

/// AUC of the ranked list's scores against blind 0/1 ratings, restricted to
/// the rated documents.
pub fn evaluate_annotations(ranked: &RankedList, ratings: &BTreeMap<String, bool>) -> Result<EvalReport, EvalError> {
    let positions: HashMap<&str, usize> = ranked.ids().enumerate().map(|(i, id)| (id, i)).collect();
    if let Some(id) = ratings.keys().find(|id| !positions.contains_key(id.as_str())) {
        return Err(EvalError::UnknownId(id.clone()));
    }
    let mut rated: Vec<(usize, bool)> = ratings.iter().map(|(id, &r)| (positions[id.as_str()], r)).collect();
    rated.sort_unstable_by_key(|r| r.0);
    let scores: Vec<f64> = rated.iter().map(|&(i, _)| ranked.entries[i].score).collect();
    let labels: Vec<bool> = rated.iter().map(|r| r.1).collect();
    evaluate_scores(&scores, &labels, &ranked.model_name, &ranked.corpus_id)
}
