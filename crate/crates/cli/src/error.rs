use std::fmt;

use newsrank::corpus::CorpusError;
use newsrank::eval::EvalError;
use newsrank::models::ModelError;
use newsrank::text::TextError;
use newsrank_annotate::AnnotationError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    pub fn numeric(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_NUMERIC,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // One line, whatever the underlying error looks like.
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::InvalidSplit(_) => CliError::usage(e),
            _ => CliError::data(e),
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::Config(_) => CliError::usage(e),
            _ => CliError::data(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Diverged { .. } => CliError::numeric(e),
            ModelError::Config(_) => CliError::usage(e),
            ModelError::Text(t) => t.into(),
            _ => CliError::data(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NanScore(_) => CliError::numeric(e),
            EvalError::Model(m) => m.into(),
            EvalError::Text(t) => t.into(),
            _ => CliError::data(e),
        }
    }
}

impl From<newsrank::Error> for CliError {
    fn from(e: newsrank::Error) -> Self {
        match e {
            newsrank::Error::Corpus(e) => e.into(),
            newsrank::Error::Text(e) => e.into(),
            newsrank::Error::Model(e) => e.into(),
            newsrank::Error::Eval(e) => e.into(),
        }
    }
}

impl From<AnnotationError> for CliError {
    fn from(e: AnnotationError) -> Self {
        match e {
            AnnotationError::Scoring(m) => m.into(),
            _ => CliError::data(e),
        }
    }
}
