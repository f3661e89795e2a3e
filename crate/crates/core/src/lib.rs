//! Newsworthiness ranking.
//!
//! Learns a front-page-vs-not classifier from a labeled newspaper corpus and
//! transfers it to unlabeled record corpora (bills, court opinions, council
//! minutes), ranking their documents by predicted newsworthiness.
//!
//! The pipeline is: [`corpus`] ingestion, labeling and balanced splits →
//! [`text`] vocabulary and bag-of-n-grams vectors → [`models`] (logistic
//! regression or an embedding-bag classifier) → [`eval`] ranking and AUC.
//! [`interpret`] reports the strongest linear coefficients and [`synthetic`]
//! generates planted-signal corpora for demos and tests.

pub mod corpus;
pub mod eval;
pub mod interpret;
pub mod models;
pub mod synthetic;
pub mod text;

pub use corpus::{CorpusError, DateRange, Document, LabeledDocument, SplitSpec};
pub use eval::{EvalError, EvalReport, KlMatrix, RankedList};
pub use models::{DocumentScorer, Model, ModelError, ModelScorer, ScoreTable};
pub use text::{SparseVector, TextError, TextField, Vocabulary, Weighting};

/// Errors from operations that span several modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
