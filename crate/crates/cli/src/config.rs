//! On-disk pipeline configuration. Every field has a default, so an empty
//! file (or no file) is valid; command-line flags override what is here.
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//! labeled_corpus = "news"
//!
//! [corpora]
//! news = "data/news.jsonl"
//! bills = "data/bills.jsonl"
//!
//! [split]
//! train = "1987-01-01..2002-01-01"
//! test = "2002-01-01..2008-01-01"
//! weekdays_only = true
//!
//! [vocab]
//! min_df = 0.01
//! max_df = 0.5
//! stopwords = "out/stopwords.txt"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use newsrank::models::LogRegConfig;
use newsrank::text::{MiningConfig, VocabConfig};
use newsrank::{DateRange, SplitSpec, TextField, Weighting};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Corpus used by the training-side commands when `--corpus-id` is not
    /// given.
    pub labeled_corpus: Option<String>,
    pub corpora: BTreeMap<String, PathBuf>,
    pub split: SplitSection,
    pub balance: BalanceSection,
    pub vocab: VocabSection,
    pub logreg: LogRegSection,
    pub embbag: EmbBagSection,
    pub mining: MiningSection,
    pub kl: KlSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            labeled_corpus: None,
            corpora: BTreeMap::new(),
            split: SplitSection::default(),
            balance: BalanceSection::default(),
            vocab: VocabSection::default(),
            logreg: LogRegSection::default(),
            embbag: EmbBagSection::default(),
            mining: MiningSection::default(),
            kl: KlSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: String,
    pub test: String,
    pub weekdays_only: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train: "1987-01-01..2002-01-01".into(),
            test: "2002-01-01..2008-01-01".into(),
            weekdays_only: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceSection {
    /// Per-class cap on the balanced training sample.
    pub cap: usize,
}

impl Default for BalanceSection {
    fn default() -> Self {
        BalanceSection { cap: 45_000 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub min_df: f64,
    pub max_df: f64,
    pub max_size: usize,
    pub ngram_max: usize,
    pub field: TextField,
    pub weighting: Weighting,
    pub stopwords: Option<PathBuf>,
}

impl Default for VocabSection {
    fn default() -> Self {
        let v = VocabConfig::default();
        VocabSection {
            min_df: v.min_df,
            max_df: v.max_df,
            max_size: v.max_size,
            ngram_max: v.ngram_max,
            field: v.field,
            weighting: Weighting::Count,
            stopwords: None,
        }
    }
}

impl VocabSection {
    pub fn vocab_config(&self) -> VocabConfig {
        VocabConfig {
            min_df: self.min_df,
            max_df: self.max_df,
            max_size: self.max_size,
            ngram_max: self.ngram_max,
            field: self.field,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegSection {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for LogRegSection {
    fn default() -> Self {
        let d = LogRegConfig::default();
        LogRegSection {
            l2: d.l2,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

impl LogRegSection {
    pub fn train_config(&self, seed: u64) -> LogRegConfig {
        LogRegConfig {
            l2: self.l2,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbBagSection {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for EmbBagSection {
    fn default() -> Self {
        let d = newsrank::models::EmbBagConfig::default();
        EmbBagSection {
            dim: d.dim,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningSection {
    pub rounds: usize,
    pub top_k: usize,
}

impl Default for MiningSection {
    fn default() -> Self {
        let d = MiningConfig::default();
        MiningSection {
            rounds: d.rounds,
            top_k: d.top_k,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlSection {
    pub smoothing: f64,
}

impl Default for KlSection {
    fn default() -> Self {
        KlSection { smoothing: 0.5 }
    }
}

impl PipelineConfig {
    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.output_dir);
        cfg.corpora.values_mut().for_each(rebase);
        if let Some(p) = cfg.vocab.stopwords.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn split_spec(&self) -> Result<SplitSpec, CliError> {
        let parse = |s: &str| s.parse::<DateRange>().map_err(CliError::usage);
        let spec = SplitSpec {
            train_range: parse(&self.split.train)?,
            test_range: parse(&self.split.test)?,
            weekdays_only: self.split.weekdays_only,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Path of a configured corpus; it must exist.
    pub fn corpus_path(&self, corpus_id: &str) -> Result<PathBuf, CliError> {
        let path = self
            .corpora
            .get(corpus_id)
            .ok_or_else(|| CliError::usage(format!("corpus {corpus_id:?} is not configured; pass --corpus PATH")))?;
        if !path.exists() {
            return Err(CliError::data(format!("corpus file {} does not exist", path.display())));
        }
        Ok(path.clone())
    }
}
