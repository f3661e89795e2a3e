//! Top positive and negative n-gram coefficients of a linear model.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::models::{LinearModel, ModelError};
use crate::text::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    /// Coefficient descending.
    pub positive: Vec<(String, f64)>,
    /// Coefficient ascending (most negative first).
    pub negative: Vec<(String, f64)>,
    pub model_name: String,
}

pub fn top_coefficients(model: &LinearModel, vocab: &Vocabulary, k: usize, model_name: &str) -> Result<CoefficientReport, ModelError> {
    let vocab_hash = vocab.hash();
    if model.vocab_hash != vocab_hash || model.weights.len() != vocab.len() {
        return Err(ModelError::VocabMismatch {
            model: model.vocab_hash.clone(),
            vocab: vocab_hash,
        });
    }
    if k == 0 {
        return Err(ModelError::Config("k must be at least 1".into()));
    }
    let pairs = || {
        model
            .weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (vocab.terms()[i].as_str(), w))
    };
    let mut positive: Vec<(&str, f64)> = pairs().filter(|p| p.1 > 0.0).collect();
    positive.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut negative: Vec<(&str, f64)> = pairs().filter(|p| p.1 < 0.0).collect();
    negative.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    let owned = |v: Vec<(&str, f64)>| v.into_iter().take(k).map(|(t, w)| (t.to_string(), w)).collect();
    Ok(CoefficientReport {
        positive: owned(positive),
        negative: owned(negative),
        model_name: model_name.to_string(),
    })
}

impl CoefficientReport {
    fn write_side<W: Write>(rows: &[(String, f64)], writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["term", "coefficient"])?;
        for (term, coef) in rows {
            w.write_record([term.as_str(), &coef.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_positive_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        Self::write_side(&self.positive, writer)
    }

    pub fn write_negative_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        Self::write_side(&self.negative, writer)
    }

    /// Writes `<stem>_positive.csv` and `<stem>_negative.csv` into `dir`.
    pub fn save_csv(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(), ModelError> {
        let dir = dir.as_ref();
        let to_io = |e: csv::Error| ModelError::Io(std::io::Error::other(e));
        self.write_positive_csv(File::create(dir.join(format!("{stem}_positive.csv")))?)
            .map_err(to_io)?;
        self.write_negative_csv(File::create(dir.join(format!("{stem}_negative.csv")))?)
            .map_err(to_io)?;
        Ok(())
    }
}

/// Side-by-side table: positive terms on the left, negative on the right.
impl fmt::Display for CoefficientReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.positive.len().max(self.negative.len());
        let width = self
            .positive
            .iter()
            .chain(&self.negative)
            .map(|(t, _)| t.chars().count())
            .max()
            .unwrap_or(4)
            .max(14);
        writeln!(f, "{:<w$}  {:>8}  {:<w$}  {:>8}", "Top Pos. Coef.", "", "Top Neg. Coef.", "", w = width)?;
        writeln!(f, "{:<w$}  {:>8}  {:<w$}  {:>8}", "Word", "beta", "Word", "beta", w = width)?;
        writeln!(f, "{}", "-".repeat(2 * width + 24))?;
        for r in 0..rows {
            let (pt, pc) = match self.positive.get(r) {
                Some((t, c)) => (t.as_str(), format!("{c:.2}")),
                None => ("", String::new()),
            };
            let (nt, nc) = match self.negative.get(r) {
                Some((t, c)) => (t.as_str(), format!("{c:.2}")),
                None => ("", String::new()),
            };
            writeln!(f, "{pt:<width$}  {pc:>8}  {nt:<width$}  {nc:>8}")?;
        }
        Ok(())
    }
}
