//! Planted-signal corpora.
//!
//! The labeled corpus imitates a newspaper archive: front-page articles carry
//! a few signal bigrams far more often than inside pages. The records corpus
//! shares those signal terms but otherwise draws from a shifted filler
//! vocabulary, and a handful of planted records are dense in signal.

use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;

pub const SIGNAL_BIGRAMS: [&str; 3] = ["court ruled", "people killed", "nation largest"];
pub const BUSINESS_BIGRAMS: [&str; 2] = ["share earns", "media business"];

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "h", "j", "l", "m", "n", "p", "t", "v"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pseudo-word for filler index `i` (three syllables).
pub fn filler_word(i: usize) -> String {
    let syllables = ONSETS.len() * NUCLEI.len();
    let mut n = i;
    let mut w = String::new();
    for _ in 0..3 {
        let s = n % syllables;
        n /= syllables;
        w.push_str(ONSETS[s / NUCLEI.len()]);
        w.push_str(NUCLEI[s % NUCLEI.len()]);
    }
    w.push_str(["r", "s", "k", "x"][n % 4]);
    w
}

#[derive(Debug, Clone)]
pub struct NewspaperConfig {
    pub corpus_id: String,
    pub n_docs: usize,
    pub positive_rate: f64,
    /// Filler vocabulary is `filler_range.0..filler_range.1`.
    pub filler_range: (usize, usize),
    pub doc_len: (usize, usize),
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Chance that a positive carries each signal bigram.
    pub signal_rate_pos: f64,
    pub signal_rate_neg: f64,
    /// Token appended to every front-page article (a publishing artifact).
    pub leak_token: Option<String>,
    pub seed: u64,
}

impl Default for NewspaperConfig {
    fn default() -> Self {
        NewspaperConfig {
            corpus_id: "news".into(),
            n_docs: 5_000,
            positive_rate: 0.2,
            filler_range: (0, 1_500),
            doc_len: (60, 140),
            start: NaiveDate::from_ymd_opt(1990, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
            signal_rate_pos: 0.7,
            signal_rate_neg: 0.03,
            leak_token: None,
            seed: 0,
        }
    }
}

/// Zipf-like draw from `lo..hi`: low indices are frequent.
fn filler(rng: &mut ChaCha8Rng, range: (usize, usize)) -> String {
    let span = (range.1 - range.0) as f64;
    let u: f64 = rng.random();
    filler_word(range.0 + ((u * u * span) as usize).min(range.1 - range.0 - 1))
}

fn filler_tokens(rng: &mut ChaCha8Rng, range: (usize, usize), len: (usize, usize)) -> Vec<String> {
    let n = rng.random_range(len.0..=len.1);
    (0..n).map(|_| filler(rng, range)).collect()
}

fn insert_phrase(rng: &mut ChaCha8Rng, tokens: &mut Vec<String>, phrase: &str) {
    let at = rng.random_range(0..=tokens.len());
    let words: Vec<String> = phrase.split(' ').map(str::to_owned).collect();
    tokens.splice(at..at, words);
}

fn random_date(rng: &mut ChaCha8Rng, start: NaiveDate, end: NaiveDate) -> NaiveDate {
    let span = (end - start).num_days().max(1) as u64;
    start + Days::new(rng.random_range(0..span))
}

fn title_from(tokens: &[String]) -> String {
    tokens.iter().take(6).cloned().collect::<Vec<_>>().join(" ")
}

/// Labeled newspaper-like corpus with page metadata and dates (weekends
/// included).
pub fn newspaper_corpus(cfg: &NewspaperConfig) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inside_pages = ["A3", "A12", "B1", "B4", "C2", "D5", "E1"];
    (0..cfg.n_docs)
        .map(|i| {
            let front = rng.random_bool(cfg.positive_rate);
            let mut tokens = filler_tokens(&mut rng, cfg.filler_range, cfg.doc_len);
            let (signal_p, business_p) = if front {
                (cfg.signal_rate_pos, 0.05)
            } else {
                (cfg.signal_rate_neg, 0.4)
            };
            let mut carried = 0;
            for phrase in SIGNAL_BIGRAMS {
                if rng.random_bool(signal_p) {
                    carried += 1;
                    for _ in 0..rng.random_range(1..=3) {
                        insert_phrase(&mut rng, &mut tokens, phrase);
                    }
                }
            }
            if front && carried == 0 {
                let phrase = *SIGNAL_BIGRAMS.choose(&mut rng).unwrap();
                insert_phrase(&mut rng, &mut tokens, phrase);
            }
            for phrase in BUSINESS_BIGRAMS {
                if rng.random_bool(business_p) {
                    insert_phrase(&mut rng, &mut tokens, phrase);
                }
            }
            if front {
                if let Some(leak) = &cfg.leak_token {
                    tokens.push(leak.clone());
                }
            }
            let page = if front {
                if rng.random_bool(0.5) { "A1" } else { "1" }.to_string()
            } else {
                inside_pages.choose(&mut rng).unwrap().to_string()
            };
            let mut doc = Document::new(format!("{}-{i:05}", cfg.corpus_id), cfg.corpus_id.clone(), tokens.join(" "));
            doc.title = title_from(&tokens);
            doc.date = Some(random_date(&mut rng, cfg.start, cfg.end));
            doc.page = Some(page);
            doc
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RecordsConfig {
    pub corpus_id: String,
    pub n_docs: usize,
    pub n_planted: usize,
    pub filler_range: (usize, usize),
    pub doc_len: (usize, usize),
    /// Chance that an ordinary record mentions one signal bigram once.
    pub stray_signal_rate: f64,
    pub seed: u64,
}

impl Default for RecordsConfig {
    fn default() -> Self {
        RecordsConfig {
            corpus_id: "records".into(),
            n_docs: 1_000,
            n_planted: 10,
            filler_range: (700, 2_200),
            doc_len: (40, 120),
            stray_signal_rate: 0.01,
            seed: 1,
        }
    }
}

/// Unlabeled records corpus; returns the documents (shuffled) and the ids of
/// the planted newsworthy records.
pub fn records_corpus(cfg: &RecordsConfig) -> (Vec<Document>, BTreeSet<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    let mut planted = BTreeSet::new();
    let mut docs: Vec<Document> = (0..cfg.n_docs)
        .map(|i| {
            let id = format!("{}-{i:05}", cfg.corpus_id);
            let mut tokens = filler_tokens(&mut rng, cfg.filler_range, cfg.doc_len);
            if i < cfg.n_planted {
                planted.insert(id.clone());
                for phrase in SIGNAL_BIGRAMS {
                    for _ in 0..2 {
                        insert_phrase(&mut rng, &mut tokens, phrase);
                    }
                }
            } else if rng.random_bool(cfg.stray_signal_rate) {
                let phrase = *SIGNAL_BIGRAMS.choose(&mut rng).unwrap();
                insert_phrase(&mut rng, &mut tokens, phrase);
            }
            let mut doc = Document::new(id, cfg.corpus_id.clone(), tokens.join(" "));
            doc.title = title_from(&tokens);
            doc.date = Some(random_date(&mut rng, start, end));
            doc
        })
        .collect();
    docs.shuffle(&mut rng);
    (docs, planted)
}
