//! `newsrank`: train newsworthiness scorers on a labeled newspaper corpus,
//! rank unlabeled corpora with them, and run blind annotation trials.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod config;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use newsrank::TextField;

use crate::config::PipelineConfig;
use crate::error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "newsrank", version, about = "Newsworthiness ranking pipeline")]
struct Cli {
    /// Pipeline config file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling, shuffling and initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for default artifact paths.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Selects one corpus: a configured id, optionally with an explicit path.
#[derive(Debug, Args)]
struct CorpusArgs {
    /// Corpus id (defaults to `labeled_corpus` from the config).
    #[arg(long)]
    corpus_id: Option<String>,
    /// Corpus file (JSON Lines); defaults to the configured path for the id.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VocabOverrides {
    #[arg(long)]
    min_df: Option<f64>,
    #[arg(long)]
    max_df: Option<f64>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    ngram_max: Option<usize>,
    /// Text field to featurize: body (title + body) or alt_text.
    #[arg(long)]
    field: Option<TextField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Logreg,
    Embbag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitPart {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a corpus and print document, label and date counts.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Also derive front-page labels and split counts.
        #[arg(long)]
        labeled: bool,
    },
    /// Iteratively surface high-weight terms and confirm publishing
    /// artifacts as stopwords.
    MineStopwords {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Confirm every candidate without asking.
        #[arg(long, conflicts_with = "confirm_from")]
        auto_confirm: bool,
        /// Confirm exactly the candidates listed in this file (one per line).
        #[arg(long)]
        confirm_from: Option<PathBuf>,
        /// Stopword list to start from (defaults to the configured one).
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Output stopword list; a `.json` round log is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the n-gram vocabulary from the balanced training split.
    BuildVocab {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        vocab: VocabOverrides,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a scorer on the balanced training split.
    Train {
        #[arg(long, value_enum)]
        family: Family,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// L2 strength (logreg only).
        #[arg(long)]
        l2: Option<f64>,
        /// Embedding dimension (embbag only).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AUC of a model (or score file) on a labeled split.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, required_unless_present = "scores")]
        model: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// External score file instead of a model.
        #[arg(long, conflicts_with = "model")]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitPart,
        /// Recompute the AUC by counting all pairs and require equality.
        #[arg(long)]
        brute_force: bool,
    },
    /// Score an unlabeled corpus and write the ranked list.
    Rank {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Scorer name recorded in the list (defaults to the model file stem).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        field: Option<TextField>,
        /// Keep only the top K entries.
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise KL divergence between corpus unigram distributions.
    Kl {
        /// `ID` (configured) or `ID=PATH`; all configured corpora if omitted.
        #[arg(long = "corpus")]
        corpora: Vec<String>,
        #[arg(long)]
        smoothing: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Top positive and negative logistic-regression coefficients.
    Coeffs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(short, long, default_value_t = 20)]
        k: usize,
        /// Directory for the two CSV files (defaults to the output dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the blind annotation service.
    Serve {
        /// `ID` (configured) or `ID=PATH`; repeatable.
        #[arg(long = "corpus", required = true)]
        corpora: Vec<String>,
        /// `NAME=MODEL,VOCAB`; repeatable. Registered score files are added
        /// automatically.
        #[arg(long = "scorer")]
        scorers: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Session log directory (defaults to `<output_dir>/sessions`).
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Static annotation UI bundle served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        field: Option<TextField>,
    },
    /// Validate an external score file and register it as a scorer.
    ScoreFile {
        #[arg(long)]
        scores: PathBuf,
        /// Scorer name (defaults to the file stem).
        #[arg(long)]
        name: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    let ctx = commands::Context { cfg };
    match cli.command {
        Command::Ingest { corpus, labeled } => ctx.ingest(&corpus, labeled),
        Command::MineStopwords {
            corpus,
            rounds,
            top_k,
            auto_confirm,
            confirm_from,
            stopwords,
            out,
        } => {
            let review = match (auto_confirm, confirm_from) {
                (true, _) => commands::Review::All,
                (false, Some(path)) => commands::Review::FromFile(path),
                (false, None) => commands::Review::Interactive,
            };
            ctx.mine_stopwords(&corpus, rounds, top_k, review, stopwords, out)
        }
        Command::BuildVocab {
            corpus,
            vocab,
            stopwords,
            out,
        } => ctx.build_vocab(&corpus, &vocab, stopwords, out),
        Command::Train {
            family,
            corpus,
            vocab,
            epochs,
            learning_rate,
            batch_size,
            l2,
            dim,
            out,
        } => {
            let hyper = commands::TrainOverrides {
                epochs,
                learning_rate,
                batch_size,
                l2,
                dim,
            };
            ctx.train(family, &corpus, vocab, hyper, out)
        }
        Command::Eval {
            corpus,
            model,
            vocab,
            scores,
            split,
            brute_force,
        } => ctx.eval(&corpus, model, vocab, scores, split, brute_force),
        Command::Rank {
            corpus,
            model,
            vocab,
            name,
            field,
            top,
            out,
        } => ctx.rank(&corpus, &model, vocab, name, field, top, out),
        Command::Kl { corpora, smoothing, out } => ctx.kl(&corpora, smoothing, out),
        Command::Coeffs { model, vocab, k, out_dir } => ctx.coeffs(&model, vocab, k, out_dir),
        Command::Serve {
            corpora,
            scorers,
            addr,
            log_dir,
            ui_dir,
            field,
        } => ctx.serve(&corpora, &scorers, addr, log_dir, ui_dir, field),
        Command::ScoreFile { scores, name } => ctx.score_file(&scores, name),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let default_level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
