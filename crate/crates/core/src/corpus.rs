//! Corpus ingestion, front-page label derivation, date-range splits and
//! class-balanced sampling.
//!
//! Corpus files are UTF-8 JSON Lines, one [`Document`] per line. Unknown keys
//! are ignored; dates use `YYYY-MM-DD`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("unlabeled document {0:?}")]
    Unlabeled(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("cannot balance single-class data")]
    SingleClass,
}

/// One record from any corpus, labeled or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub corpus_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<String>,
    /// Pre-extracted alternate text (e.g. concatenated event arguments).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_text: Option<String>,
}

impl Document {
    /// Minimal constructor used by generators and tests.
    pub fn new(id: impl Into<String>, corpus_id: impl Into<String>, body: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            corpus_id: corpus_id.into(),
            date: None,
            title: String::new(),
            body: body.into(),
            page: None,
            section: None,
            alt_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub document: Document,
    /// `true` for front-page articles.
    pub label: bool,
}

/// Raw line shape; `corpus_id` may be omitted and is then taken from the
/// caller.
#[derive(Deserialize)]
struct RawDocument {
    id: String,
    #[serde(default)]
    corpus_id: Option<String>,
    #[serde(default)]
    date: Option<String>,
    #[serde(default)]
    title: Option<String>,
    body: String,
    #[serde(default)]
    page: Option<String>,
    #[serde(default)]
    section: Option<String>,
    #[serde(default)]
    alt_text: Option<String>,
}

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok()
}

fn parse_line(line: &str, lineno: usize, corpus_id: &str) -> Result<Document, CorpusError> {
    let raw: RawDocument = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    let perr = |message: String| CorpusError::Parse { line: lineno, message };
    if let Some(cid) = &raw.corpus_id {
        if cid != corpus_id {
            return Err(perr(format!("corpus_id {cid:?} does not match expected {corpus_id:?}")));
        }
    }
    if raw.body.trim().is_empty() {
        return Err(perr(format!("document {:?} has an empty body", raw.id)));
    }
    let date = match raw.date.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(d) => Some(parse_date(d).ok_or_else(|| perr(format!("unparseable date {d:?}")))?),
    };
    Ok(Document {
        id: raw.id,
        corpus_id: corpus_id.to_string(),
        date,
        title: raw.title.unwrap_or_default(),
        body: raw.body,
        page: raw.page,
        section: raw.section,
        alt_text: raw.alt_text,
    })
}

/// Reads a JSON Lines corpus, preserving file order. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>, corpus_id: &str) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    read_corpus(reader, corpus_id).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(source),
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead, corpus_id: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_line(&line, i + 1, corpus_id)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("documents always serialize");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// True when `page` designates the front page ("1" or "A1", any case,
/// surrounding whitespace ignored).
pub fn is_front_page(page: &str) -> bool {
    matches!(page.trim().to_uppercase().as_str(), "1" | "A1")
}

pub fn derive_label(doc: Document) -> Result<LabeledDocument, CorpusError> {
    let label = match &doc.page {
        Some(page) => is_front_page(page),
        None => return Err(CorpusError::Unlabeled(doc.id)),
    };
    Ok(LabeledDocument { document: doc, label })
}

pub fn derive_labels(docs: Vec<Document>) -> Result<Vec<LabeledDocument>, CorpusError> {
    docs.into_iter().map(derive_label).collect()
}

/// Half-open date interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn overlaps(&self, other: &DateRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl std::str::FromStr for DateRange {
    type Err = String;

    /// Parses `START..END`, both `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected START..END, got {s:?}"))?;
        let start = parse_date(a).ok_or_else(|| format!("bad start date {a:?}"))?;
        let end = parse_date(b).ok_or_else(|| format!("bad end date {b:?}"))?;
        Ok(DateRange { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_range: DateRange,
    pub test_range: DateRange,
    pub weekdays_only: bool,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.train_range.is_empty() {
            return Err(CorpusError::InvalidSplit("train range is empty".into()));
        }
        if self.test_range.is_empty() {
            return Err(CorpusError::InvalidSplit("test range is empty".into()));
        }
        if self.train_range.overlaps(&self.test_range) {
            return Err(CorpusError::InvalidSplit("train and test ranges overlap".into()));
        }
        Ok(())
    }
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<LabeledDocument>,
    pub test: Vec<LabeledDocument>,
    /// Documents dropped because they carry no date.
    pub missing_date: usize,
    pub weekend: usize,
}

/// Partitions labeled documents into train/test by date. Undated documents
/// are dropped and counted, never placed in either set.
pub fn apply_split(docs: Vec<LabeledDocument>, spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    let mut split = Split::default();
    for doc in docs {
        let Some(date) = doc.document.date else {
            split.missing_date += 1;
            continue;
        };
        if spec.weekdays_only && is_weekend(date) {
            split.weekend += 1;
            continue;
        }
        if spec.train_range.contains(date) {
            split.train.push(doc);
        } else if spec.test_range.contains(date) {
            split.test.push(doc);
        }
    }
    if split.missing_date > 0 {
        log::warn!("{} documents without a date excluded from split", split.missing_date);
    }
    Ok(split)
}

/// Draws `min(cap, minority size)` documents of each class uniformly without
/// replacement, then shuffles the union. Fully determined by `seed`.
pub fn balanced_sample(
    docs: &[LabeledDocument],
    cap: usize,
    seed: u64,
) -> Result<Vec<LabeledDocument>, CorpusError> {
    let (pos, neg): (Vec<&LabeledDocument>, Vec<&LabeledDocument>) = docs.iter().partition(|d| d.label);
    if pos.is_empty() || neg.is_empty() {
        return Err(CorpusError::SingleClass);
    }
    let per_class = cap.min(pos.len()).min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * 2);
    for class in [&pos, &neg] {
        let mut picked = index::sample(&mut rng, class.len(), per_class).into_vec();
        // Keep input order inside each class before the final shuffle.
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| class[i].clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}
