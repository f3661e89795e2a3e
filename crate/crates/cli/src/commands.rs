use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use newsrank::corpus::{self, LabeledDocument, Split};
use newsrank::eval::{self, auc_pairwise};
use newsrank::interpret::top_coefficients;
use newsrank::models::{self, load_external_scores, EmbBagConfig};
use newsrank::text::{self, Candidate, MiningConfig};
use newsrank::{Document, DocumentScorer, Model, ModelScorer, TextField, Vocabulary};
use newsrank_annotate::AnnotationStore;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::{CorpusArgs, Family, SplitPart, VocabOverrides};

pub struct Context {
    pub cfg: PipelineConfig,
}

pub enum Review {
    All,
    FromFile(PathBuf),
    Interactive,
}

pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub l2: Option<f64>,
    pub dim: Option<usize>,
}

#[derive(Serialize)]
struct RoundLog<'a> {
    round: usize,
    vocab_size: usize,
    candidates: Vec<CandidateLog<'a>>,
}

#[derive(Serialize)]
struct CandidateLog<'a> {
    term: &'a str,
    coefficient: f64,
    confirmed: bool,
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

/// One term per line; blank lines and `#` comments are ignored.
fn read_term_list(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

fn write_term_list(path: &Path, terms: &BTreeSet<String>) -> Result<(), CliError> {
    let mut text = String::new();
    for t in terms {
        text.push_str(t);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

/// `ID` or `ID=PATH`.
fn split_corpus_spec(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once('=') {
        Some((id, path)) => (id, Some(path)),
        None => (spec, None),
    }
}

impl Context {
    fn out_path(&self, explicit: Option<PathBuf>, default_name: &str) -> Result<PathBuf, CliError> {
        let path = explicit.unwrap_or_else(|| self.cfg.output_dir.join(default_name));
        ensure_parent(&path)?;
        Ok(path)
    }

    fn vocab_path(&self, explicit: Option<PathBuf>) -> PathBuf {
        explicit.unwrap_or_else(|| self.cfg.output_dir.join("vocab.json"))
    }

    fn resolve_corpus(&self, args: &CorpusArgs) -> Result<(String, PathBuf), CliError> {
        let id = args
            .corpus_id
            .clone()
            .or_else(|| args.corpus.as_deref().map(file_stem))
            .or_else(|| self.cfg.labeled_corpus.clone())
            .ok_or_else(|| CliError::usage("no corpus given: pass --corpus-id or --corpus"))?;
        let path = match &args.corpus {
            Some(p) => p.clone(),
            None => self.cfg.corpus_path(&id)?,
        };
        Ok((id, path))
    }

    fn load(&self, id: &str, path: &Path) -> Result<Vec<Document>, CliError> {
        let docs = corpus::load_corpus(path, id)?;
        log::info!("loaded {} documents from {} ({id})", docs.len(), path.display());
        Ok(docs)
    }

    fn labeled_split(&self, args: &CorpusArgs) -> Result<(String, Split), CliError> {
        let spec = self.cfg.split_spec()?;
        let (id, path) = self.resolve_corpus(args)?;
        let labeled = corpus::derive_labels(self.load(&id, &path)?)?;
        let split = corpus::apply_split(labeled, &spec)?;
        log::info!(
            "split {id}: {} train, {} test ({} undated, {} weekend dropped)",
            split.train.len(),
            split.test.len(),
            split.missing_date,
            split.weekend
        );
        Ok((id, split))
    }

    fn balanced_train(&self, args: &CorpusArgs) -> Result<Vec<LabeledDocument>, CliError> {
        let (_, split) = self.labeled_split(args)?;
        log::info!("balancing training split with seed {} (cap {})", self.cfg.seed, self.cfg.balance.cap);
        Ok(corpus::balanced_sample(&split.train, self.cfg.balance.cap, self.cfg.seed)?)
    }

    fn initial_stopwords(&self, explicit: Option<PathBuf>) -> Result<BTreeSet<String>, CliError> {
        match explicit.or_else(|| self.cfg.vocab.stopwords.clone()) {
            Some(path) => read_term_list(&path),
            None => Ok(BTreeSet::new()),
        }
    }

    fn scorer(&self, model_path: &Path, vocab: Option<PathBuf>, name: String) -> Result<ModelScorer, CliError> {
        let model = Model::load(model_path).map_err(|e| CliError::from(e).context(model_path))?;
        let vocab_path = self.vocab_path(vocab);
        let vocab = Vocabulary::load(&vocab_path).map_err(|e| CliError::from(e).context(&vocab_path))?;
        Ok(ModelScorer::new(name, model, vocab, self.cfg.vocab.weighting)?)
    }

    pub fn ingest(&self, args: &CorpusArgs, labeled: bool) -> Result<(), CliError> {
        let (id, path) = self.resolve_corpus(args)?;
        let docs = self.load(&id, &path)?;
        let dated: Vec<_> = docs.iter().filter_map(|d| d.date).collect();
        let weekend = dated.iter().filter(|&&d| corpus::is_weekend(d)).count();
        let with_alt = docs.iter().filter(|d| d.alt_text.is_some()).count();
        println!(
            "{id}: {} documents, {} dated ({weekend} on weekends), {with_alt} with alternate text",
            docs.len(),
            dated.len()
        );
        if labeled {
            let spec = self.cfg.split_spec()?;
            let labeled = corpus::derive_labels(docs)?;
            let pos = labeled.iter().filter(|d| d.label).count();
            println!("labels: {pos} front-page, {} other", labeled.len() - pos);
            let split = corpus::apply_split(labeled, &spec)?;
            let count = |part: &[LabeledDocument]| (part.iter().filter(|d| d.label).count(), part.len());
            let (train_pos, train_n) = count(&split.train);
            let (test_pos, test_n) = count(&split.test);
            println!(
                "split: train {train_n} ({train_pos} positive), test {test_n} ({test_pos} positive), dropped {} undated and {} weekend",
                split.missing_date, split.weekend
            );
        }
        Ok(())
    }

    pub fn mine_stopwords(
        &self,
        args: &CorpusArgs,
        rounds: Option<usize>,
        top_k: Option<usize>,
        review: Review,
        stopwords: Option<PathBuf>,
        out: Option<PathBuf>,
    ) -> Result<(), CliError> {
        let train = self.balanced_train(args)?;
        let initial = self.initial_stopwords(stopwords)?;
        let config = MiningConfig {
            rounds: rounds.unwrap_or(self.cfg.mining.rounds),
            top_k: top_k.unwrap_or(self.cfg.mining.top_k),
            vocab: self.cfg.vocab.vocab_config(),
            weighting: self.cfg.vocab.weighting,
            train: self.cfg.logreg.train_config(self.cfg.seed),
        };
        let out = self.out_path(out, "stopwords.txt")?;

        let outcome = match review {
            Review::All => text::mine_stopwords(&train, &config, &initial, |_| true)?,
            Review::FromFile(path) => {
                let accepted = read_term_list(&path)?;
                text::mine_stopwords(&train, &config, &initial, |c| accepted.contains(&c.term))?
            }
            Review::Interactive => {
                let stdin = io::stdin();
                let mut lines = stdin.lock().lines();
                let mut ask = |c: &Candidate| {
                    eprint!(
                        "round {}: {:?} (coefficient {:+.4}) is a publishing artifact? [y/N] ",
                        c.round, c.term, c.coefficient
                    );
                    let _ = io::stderr().flush();
                    matches!(lines.next(), Some(Ok(l)) if l.trim().eq_ignore_ascii_case("y"))
                };
                text::mine_stopwords(&train, &config, &initial, &mut ask)?
            }
        };

        write_term_list(&out, &outcome.stopwords)?;
        let log: Vec<RoundLog> = outcome
            .rounds
            .iter()
            .enumerate()
            .map(|(i, r)| RoundLog {
                round: i + 1,
                vocab_size: r.vocab_size,
                candidates: r
                    .candidates
                    .iter()
                    .map(|c| CandidateLog {
                        term: &c.term,
                        coefficient: c.coefficient,
                        confirmed: r.confirmed.contains(&c.term),
                    })
                    .collect(),
            })
            .collect();
        let log_path = out.with_extension("json");
        fs::write(&log_path, serde_json::to_string_pretty(&log).expect("log serializes") + "\n")?;
        let added = outcome.stopwords.len() - initial.len();
        println!(
            "{} stopwords ({added} new over {} rounds) -> {}",
            outcome.stopwords.len(),
            outcome.rounds.len(),
            out.display()
        );
        Ok(())
    }

    pub fn build_vocab(
        &self,
        args: &CorpusArgs,
        overrides: &VocabOverrides,
        stopwords: Option<PathBuf>,
        out: Option<PathBuf>,
    ) -> Result<(), CliError> {
        let mut config = self.cfg.vocab.vocab_config();
        config.min_df = overrides.min_df.unwrap_or(config.min_df);
        config.max_df = overrides.max_df.unwrap_or(config.max_df);
        config.max_size = overrides.max_size.unwrap_or(config.max_size);
        config.ngram_max = overrides.ngram_max.unwrap_or(config.ngram_max);
        config.field = overrides.field.unwrap_or(config.field);
        config.validate()?;
        let train = self.balanced_train(args)?;
        let stopwords = self.initial_stopwords(stopwords)?;
        let vocab = text::build_vocab(train.iter().map(|d| &d.document), &config, &stopwords)?;
        let out = self.out_path(out, "vocab.json")?;
        vocab.save(&out)?;
        println!("{} terms (hash {}) -> {}", vocab.len(), vocab.hash(), out.display());
        Ok(())
    }

    pub fn train(
        &self,
        family: Family,
        args: &CorpusArgs,
        vocab: Option<PathBuf>,
        hyper: TrainOverrides,
        out: Option<PathBuf>,
    ) -> Result<(), CliError> {
        let vocab_path = self.vocab_path(vocab);
        let vocab = Vocabulary::load(&vocab_path).map_err(|e| CliError::from(e).context(&vocab_path))?;
        let train = self.balanced_train(args)?;
        let field = self.cfg.vocab.field;
        let data = train
            .iter()
            .map(|d| Ok((text::vectorize(&d.document, &vocab, field, self.cfg.vocab.weighting)?, d.label)))
            .collect::<Result<Vec<_>, CliError>>()?;
        log::info!("training {family:?} on {} documents with seed {}", data.len(), self.cfg.seed);
        let model = match family {
            Family::Logreg => {
                let mut c = self.cfg.logreg.train_config(self.cfg.seed);
                c.epochs = hyper.epochs.unwrap_or(c.epochs);
                c.learning_rate = hyper.learning_rate.unwrap_or(c.learning_rate);
                c.batch_size = hyper.batch_size.unwrap_or(c.batch_size);
                c.l2 = hyper.l2.unwrap_or(c.l2);
                Model::Logreg(models::train_logreg(&data, vocab.len(), &vocab.hash(), &c)?)
            }
            Family::Embbag => {
                let s = &self.cfg.embbag;
                let c = EmbBagConfig {
                    dim: hyper.dim.unwrap_or(s.dim),
                    epochs: hyper.epochs.unwrap_or(s.epochs),
                    learning_rate: hyper.learning_rate.unwrap_or(s.learning_rate),
                    batch_size: hyper.batch_size.unwrap_or(s.batch_size),
                    seed: self.cfg.seed,
                };
                Model::Embbag(models::train_embbag(&data, vocab.len(), &vocab.hash(), &c)?)
            }
        };
        let out = self.out_path(out, &format!("model-{}.json", model.family()))?;
        model.save(&out)?;
        println!("{} model -> {}", model.family(), out.display());
        Ok(())
    }

    pub fn eval(
        &self,
        args: &CorpusArgs,
        model: Option<PathBuf>,
        vocab: Option<PathBuf>,
        scores: Option<PathBuf>,
        part: SplitPart,
        brute_force: bool,
    ) -> Result<(), CliError> {
        let scorer: Box<dyn DocumentScorer> = match (model, scores) {
            (Some(m), _) => Box::new(self.scorer(&m, vocab, file_stem(&m))?),
            (None, Some(s)) => Box::new(load_external_scores(&s).map_err(|e| CliError::from(e).context(&s))?),
            (None, None) => return Err(CliError::usage("pass --model or --scores")),
        };
        let (id, split) = self.labeled_split(args)?;
        let docs = match part {
            SplitPart::Train => split.train,
            SplitPart::Test => split.test,
        };
        let labels: BTreeMap<String, bool> = docs.iter().map(|d| (d.document.id.clone(), d.label)).collect();
        let plain: Vec<Document> = docs.into_iter().map(|d| d.document).collect();
        let ranked = eval::rank_documents(&plain, scorer.as_ref(), self.cfg.vocab.field)?;
        let mut report = eval::evaluate_annotations(&ranked, &labels)?;
        report.dataset_name = format!("{id}/{}", if part == SplitPart::Test { "test" } else { "train" });
        if brute_force {
            let scores: Vec<f64> = ranked.entries.iter().map(|e| e.score).collect();
            let truth: Vec<bool> = ranked.entries.iter().map(|e| labels[&e.id]).collect();
            let slow = auc_pairwise(&scores, &truth)?;
            if slow != report.auc {
                return Err(CliError::numeric(format!(
                    "rank AUC {} differs from pairwise AUC {slow}",
                    report.auc
                )));
            }
            log::info!("pairwise AUC agrees over {} pairs", report.n_pos * report.n_neg);
        }
        println!("{report}");
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn rank(
        &self,
        args: &CorpusArgs,
        model: &Path,
        vocab: Option<PathBuf>,
        name: Option<String>,
        field: Option<TextField>,
        top: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<(), CliError> {
        let scorer = self.scorer(model, vocab, name.unwrap_or_else(|| file_stem(model)))?;
        let (id, path) = self.resolve_corpus(args)?;
        let docs = self.load(&id, &path)?;
        let ranked = eval::rank_documents(&docs, &scorer, field.unwrap_or(self.cfg.vocab.field))?;
        let out = self.out_path(out, &format!("ranked-{id}.jsonl"))?;
        ranked.save_jsonl(&out, top)?;
        println!(
            "ranked {} documents from {id}; wrote {} -> {}",
            ranked.entries.len(),
            top.unwrap_or(ranked.entries.len()).min(ranked.entries.len()),
            out.display()
        );
        Ok(())
    }

    fn corpora_from_specs(&self, specs: &[String]) -> Result<Vec<(String, Vec<Document>)>, CliError> {
        let specs: Vec<(String, PathBuf)> = if specs.is_empty() {
            self.cfg.corpora.keys().map(|id| Ok((id.clone(), self.cfg.corpus_path(id)?))).collect::<Result<_, CliError>>()?
        } else {
            specs
                .iter()
                .map(|s| match split_corpus_spec(s) {
                    (id, Some(path)) => Ok((id.to_string(), PathBuf::from(path))),
                    (id, None) => Ok((id.to_string(), self.cfg.corpus_path(id)?)),
                })
                .collect::<Result<_, CliError>>()?
        };
        specs.into_iter().map(|(id, path)| Ok((id.clone(), self.load(&id, &path)?))).collect()
    }

    pub fn kl(&self, specs: &[String], smoothing: Option<f64>, out: Option<PathBuf>) -> Result<(), CliError> {
        let corpora = self.corpora_from_specs(specs)?;
        let smoothing = smoothing.unwrap_or(self.cfg.kl.smoothing);
        let matrix = eval::kl_matrix(&corpora, smoothing)?;
        let out = self.out_path(out, "kl.csv")?;
        matrix.save_csv(&out)?;
        matrix.write_csv(io::stdout())?;
        log::info!("KL matrix -> {}", out.display());
        Ok(())
    }

    pub fn coeffs(&self, model_path: &Path, vocab: Option<PathBuf>, k: usize, out_dir: Option<PathBuf>) -> Result<(), CliError> {
        let name = file_stem(model_path);
        let scorer = self.scorer(model_path, vocab, name.clone())?;
        let Model::Logreg(linear) = scorer.model() else {
            return Err(CliError::usage("coefficient reports need a logreg model"));
        };
        let report = top_coefficients(linear, scorer.vocab(), k, &name)?;
        let dir = out_dir.unwrap_or_else(|| self.cfg.output_dir.clone());
        fs::create_dir_all(&dir)?;
        report.save_csv(&dir, &name)?;
        print!("{report}");
        Ok(())
    }

    fn registry_dir(&self) -> PathBuf {
        self.cfg.output_dir.join("scores")
    }

    pub fn serve(
        &self,
        corpus_specs: &[String],
        scorer_specs: &[String],
        addr: SocketAddr,
        log_dir: Option<PathBuf>,
        ui_dir: Option<PathBuf>,
        field: Option<TextField>,
    ) -> Result<(), CliError> {
        let log_dir = log_dir.unwrap_or_else(|| self.cfg.output_dir.join("sessions"));
        let mut store = AnnotationStore::new(Some(log_dir))?.with_field(field.unwrap_or(self.cfg.vocab.field));
        for (id, docs) in self.corpora_from_specs(corpus_specs)? {
            store.add_corpus(id, docs);
        }
        for spec in scorer_specs {
            let (name, paths) = spec
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--scorer expects NAME=MODEL,VOCAB, got {spec:?}")))?;
            let (model, vocab) = paths
                .split_once(',')
                .ok_or_else(|| CliError::usage(format!("--scorer expects NAME=MODEL,VOCAB, got {spec:?}")))?;
            let scorer = self.scorer(Path::new(model), Some(PathBuf::from(vocab)), name.to_string())?;
            store.add_scorer(Arc::new(scorer));
        }
        let registry = self.registry_dir();
        if registry.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&registry)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for path in files {
                let table = load_external_scores(&path).map_err(|e| CliError::from(e).context(&path))?;
                log::info!("registered score file {} as {:?}", path.display(), table.source_name);
                store.add_scorer(Arc::new(table));
            }
        }
        if store.scorer_names().next().is_none() {
            return Err(CliError::usage("no scorers: pass --scorer or register a score file"));
        }
        let restored = store.restore()?;
        log::info!("restored {restored} sessions");
        let app = newsrank_annotate::router(Arc::new(store), ui_dir);
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        runtime.block_on(newsrank_annotate::serve(addr, app, |bound| {
            println!("listening on http://{bound}");
            let _ = io::stdout().flush();
        }))?;
        Ok(())
    }

    pub fn score_file(&self, path: &Path, name: Option<String>) -> Result<(), CliError> {
        let mut table = load_external_scores(path).map_err(|e| CliError::from(e).context(path))?;
        if let Some(name) = name {
            table.source_name = name;
        }
        let valid = !table.source_name.is_empty()
            && table.source_name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(CliError::usage(format!(
                "scorer name {:?} must be non-empty ASCII letters, digits, '-' or '_'",
                table.source_name
            )));
        }
        let out = self.registry_dir().join(format!("{}.jsonl", table.source_name));
        ensure_parent(&out)?;
        table.save(&out)?;
        println!("registered scorer {:?} ({} scores) -> {}", table.source_name, table.len(), out.display());
        Ok(())
    }
}

impl CliError {
    /// Prefixes the message with the file it concerns.
    fn context(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}
