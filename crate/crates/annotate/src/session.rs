//! Blind annotation sessions and their append-only event logs.
//!
//! Every state change is written to `<log_dir>/<session_id>.jsonl` (and
//! synced) before it is applied in memory, so a restart between any two
//! ratings loses nothing. A log holds one `created` event followed by one
//! `rating` event per judged document.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use newsrank::eval::{self, RankedEntry};
use newsrank::{Document, DocumentScorer, EvalError, EvalReport, ModelError, RankedList, TextField};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown corpus {0:?}")]
    UnknownCorpus(String),
    #[error("unknown scorer {0:?}")]
    UnknownScorer(String),
    #[error("sample size {requested} exceeds corpus size {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("not current task")]
    NotCurrentTask,
    #[error("document {0:?} already rated")]
    AlreadyRated(String),
    #[error("session is complete")]
    SessionComplete,
    #[error("{0} ratings remaining")]
    Incomplete(usize),
    #[error("document {0:?} is missing from the loaded corpus")]
    MissingDocument(String),
    #[error("scoring failed: {0}")]
    Scoring(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("corrupt session log {path}:{line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error("session log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Source of rating and creation timestamps. Injected so that logs can be
/// reproduced byte for byte in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub session_id: String,
    pub doc_id: String,
    pub value: u8,
    pub rated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        corpus_id: String,
        sample_size: usize,
        seed: u64,
        scorers: Vec<String>,
        doc_ids: Vec<String>,
        hidden_scores: BTreeMap<String, BTreeMap<String, f64>>,
        created: String,
    },
    Rating(Rating),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub completed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSession {
    pub session_id: String,
    pub corpus_id: String,
    pub seed: u64,
    pub scorers: Vec<String>,
    /// Presentation order.
    pub doc_ids: Vec<String>,
    pub ratings: BTreeMap<String, u8>,
    pub hidden_scores: BTreeMap<String, BTreeMap<String, f64>>,
    pub created: String,
    /// Ratings in submission order, as logged.
    pub history: Vec<Rating>,
}

impl AnnotationSession {
    pub fn cursor(&self) -> usize {
        self.ratings.len()
    }

    pub fn sample_size(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn progress(&self) -> Progress {
        Progress {
            completed: self.cursor(),
            total: self.sample_size(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.cursor() == self.sample_size()
    }

    pub fn current_doc(&self) -> Option<&str> {
        self.doc_ids.get(self.cursor()).map(String::as_str)
    }

    fn created_event(&self) -> SessionEvent {
        SessionEvent::Created {
            session_id: self.session_id.clone(),
            corpus_id: self.corpus_id.clone(),
            sample_size: self.sample_size(),
            seed: self.seed,
            scorers: self.scorers.clone(),
            doc_ids: self.doc_ids.clone(),
            hidden_scores: self.hidden_scores.clone(),
            created: self.created.clone(),
        }
    }

    /// Checks a rating against the sequential protocol without applying it.
    fn check_rating(&self, doc_id: &str, value: u8) -> Result<(), AnnotationError> {
        if value > 1 {
            return Err(AnnotationError::Invalid(format!("rating must be 0 or 1, got {value}")));
        }
        if self.ratings.contains_key(doc_id) {
            return Err(AnnotationError::AlreadyRated(doc_id.to_string()));
        }
        match self.current_doc() {
            None => Err(AnnotationError::SessionComplete),
            Some(current) if current != doc_id => Err(AnnotationError::NotCurrentTask),
            Some(_) => Ok(()),
        }
    }

    fn apply(&mut self, rating: Rating) {
        self.ratings.insert(rating.doc_id.clone(), rating.value);
        self.history.push(rating);
    }

    /// Rebuilds a session from its event sequence, re-validating every
    /// rating.
    pub fn replay(events: &[SessionEvent]) -> Result<Self, String> {
        let mut it = events.iter();
        let mut session = match it.next() {
            Some(SessionEvent::Created {
                session_id,
                corpus_id,
                sample_size,
                seed,
                scorers,
                doc_ids,
                hidden_scores,
                created,
            }) => {
                if doc_ids.len() != *sample_size {
                    return Err(format!("{} doc ids for sample size {sample_size}", doc_ids.len()));
                }
                for name in scorers {
                    let covered = hidden_scores
                        .get(name)
                        .is_some_and(|s| doc_ids.iter().all(|id| s.contains_key(id)));
                    if !covered {
                        return Err(format!("hidden scores for {name:?} do not cover the sample"));
                    }
                }
                AnnotationSession {
                    session_id: session_id.clone(),
                    corpus_id: corpus_id.clone(),
                    seed: *seed,
                    scorers: scorers.clone(),
                    doc_ids: doc_ids.clone(),
                    ratings: BTreeMap::new(),
                    hidden_scores: hidden_scores.clone(),
                    created: created.clone(),
                    history: Vec::new(),
                }
            }
            _ => return Err("log must start with a created event".into()),
        };
        for event in it {
            match event {
                SessionEvent::Rating(r) => {
                    if r.session_id != session.session_id {
                        return Err(format!("rating for foreign session {:?}", r.session_id));
                    }
                    session.check_rating(&r.doc_id, r.value).map_err(|e| e.to_string())?;
                    session.apply(r.clone());
                }
                SessionEvent::Created { .. } => return Err("duplicate created event".into()),
            }
        }
        Ok(session)
    }

    pub fn events(&self) -> Vec<SessionEvent> {
        std::iter::once(self.created_event())
            .chain(self.history.iter().cloned().map(SessionEvent::Rating))
            .collect()
    }
}

/// What the annotator sees: text and progress, never a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Task {
    Document {
        doc_id: String,
        title: String,
        body: String,
        progress: Progress,
    },
    Done { done: bool },
}

/// Public view of a session (no document order, no scores).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub corpus_id: String,
    pub sample_size: usize,
    pub seed: u64,
    pub scorers: Vec<String>,
    pub created: String,
    pub progress: Progress,
}

impl From<&AnnotationSession> for SessionInfo {
    fn from(s: &AnnotationSession) -> Self {
        SessionInfo {
            session_id: s.session_id.clone(),
            corpus_id: s.corpus_id.clone(),
            sample_size: s.sample_size(),
            seed: s.seed,
            scorers: s.scorers.clone(),
            created: s.created.clone(),
            progress: s.progress(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub corpus_id: String,
    pub n_ratings: usize,
    pub reports: Vec<EvalReport>,
}

/// Per-scorer transfer AUC of a fully rated session.
pub fn session_report(session: &AnnotationSession) -> Result<SessionReport, AnnotationError> {
    if !session.is_complete() {
        return Err(AnnotationError::Incomplete(session.sample_size() - session.cursor()));
    }
    let ratings: BTreeMap<String, bool> = session.ratings.iter().map(|(id, &v)| (id.clone(), v == 1)).collect();
    let reports = session
        .scorers
        .iter()
        .map(|name| {
            let scores = &session.hidden_scores[name];
            let entries = session
                .doc_ids
                .iter()
                .map(|id| RankedEntry {
                    id: id.clone(),
                    score: scores[id],
                    title: String::new(),
                })
                .collect();
            let ranked = RankedList::from_entries(entries, name, &session.corpus_id)?;
            Ok(eval::evaluate_annotations(&ranked, &ratings)?)
        })
        .collect::<Result<Vec<_>, AnnotationError>>()?;
    Ok(SessionReport {
        session_id: session.session_id.clone(),
        corpus_id: session.corpus_id.clone(),
        n_ratings: session.ratings.len(),
        reports,
    })
}

/// Seed-deterministic sample without replacement, in shuffled presentation
/// order.
pub fn sample_doc_ids(docs: &[Document], sample_size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, docs.len(), sample_size).into_vec();
    picked.sort_unstable();
    picked.shuffle(&mut rng);
    picked.into_iter().map(|i| docs[i].id.clone()).collect()
}

fn session_id_for(corpus_id: &str, sample_size: usize, seed: u64, scorers: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(corpus_id.as_bytes());
    h.update([0]);
    h.update(sample_size.to_le_bytes());
    h.update(seed.to_le_bytes());
    for s in scorers {
        h.update([0]);
        h.update(s.as_bytes());
    }
    h.finalize()[..6].iter().map(|b| format!("{b:02x}")).collect()
}

struct LoadedCorpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

/// All sessions plus the corpora and scorers they draw on.
///
/// Register corpora and scorers first (`&mut self`), then share the store
/// behind an `Arc`; session operations take `&self` and serialize writes per
/// session.
pub struct AnnotationStore {
    corpora: BTreeMap<String, LoadedCorpus>,
    scorers: BTreeMap<String, Arc<dyn DocumentScorer>>,
    field: TextField,
    log_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<AnnotationSession>>>>,
}

impl AnnotationStore {
    /// A store persisting to `log_dir` (created if needed), or purely in
    /// memory when `None`.
    pub fn new(log_dir: Option<PathBuf>) -> Result<Self, AnnotationError> {
        if let Some(dir) = &log_dir {
            fs::create_dir_all(dir).map_err(|source| AnnotationError::Io {
                path: dir.clone(),
                source,
            })?;
        }
        Ok(AnnotationStore {
            corpora: BTreeMap::new(),
            scorers: BTreeMap::new(),
            field: TextField::Body,
            log_dir,
            clock: Arc::new(SystemClock),
            sessions: RwLock::new(BTreeMap::new()),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Text field the scorers read when precomputing hidden scores.
    pub fn with_field(mut self, field: TextField) -> Self {
        self.field = field;
        self
    }

    pub fn add_corpus(&mut self, corpus_id: impl Into<String>, docs: Vec<Document>) {
        let by_id = docs.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        self.corpora.insert(corpus_id.into(), LoadedCorpus { docs, by_id });
    }

    pub fn add_scorer(&mut self, scorer: Arc<dyn DocumentScorer>) {
        self.scorers.insert(scorer.name().to_string(), scorer);
    }

    pub fn scorer_names(&self) -> impl Iterator<Item = &str> {
        self.scorers.keys().map(String::as_str)
    }

    pub fn corpus_ids(&self) -> impl Iterator<Item = &str> {
        self.corpora.keys().map(String::as_str)
    }

    pub fn log_path(&self, session_id: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(format!("{session_id}.jsonl")))
    }

    /// Loads every session log found in the log directory. A torn final
    /// line (crash mid-append) is truncated away; any other damage is an
    /// error. Returns the number of sessions restored.
    pub fn restore(&self) -> Result<usize, AnnotationError> {
        let Some(dir) = &self.log_dir else { return Ok(0) };
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| AnnotationError::Io { path, source }
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = self.sessions.write().expect("session map lock poisoned");
        for path in &paths {
            let session = read_log(path)?;
            if path.file_stem().and_then(|s| s.to_str()) != Some(session.session_id.as_str()) {
                return Err(AnnotationError::CorruptLog {
                    path: path.clone(),
                    line: 1,
                    message: format!("file name does not match session id {:?}", session.session_id),
                });
            }
            log::info!(
                "restored session {} ({}/{} rated)",
                session.session_id,
                session.cursor(),
                session.sample_size()
            );
            sessions.insert(session.session_id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(paths.len())
    }

    pub fn create_session(
        &self,
        corpus_id: &str,
        sample_size: usize,
        seed: u64,
        scorers: &[String],
    ) -> Result<SessionInfo, AnnotationError> {
        let corpus = self
            .corpora
            .get(corpus_id)
            .ok_or_else(|| AnnotationError::UnknownCorpus(corpus_id.to_string()))?;
        if sample_size == 0 {
            return Err(AnnotationError::Invalid("sample_size must be at least 1".into()));
        }
        if sample_size > corpus.docs.len() {
            return Err(AnnotationError::SampleTooLarge {
                requested: sample_size,
                available: corpus.docs.len(),
            });
        }
        if scorers.is_empty() {
            return Err(AnnotationError::Invalid("at least one scorer is required".into()));
        }
        let mut scorer_objs = Vec::with_capacity(scorers.len());
        for (i, name) in scorers.iter().enumerate() {
            if scorers[..i].contains(name) {
                return Err(AnnotationError::Invalid(format!("scorer {name:?} listed twice")));
            }
            let s = self
                .scorers
                .get(name)
                .ok_or_else(|| AnnotationError::UnknownScorer(name.clone()))?;
            scorer_objs.push(s);
        }

        let doc_ids = sample_doc_ids(&corpus.docs, sample_size, seed);
        let mut hidden_scores = BTreeMap::new();
        for scorer in scorer_objs {
            let mut scores = BTreeMap::new();
            for id in &doc_ids {
                let doc = &corpus.docs[corpus.by_id[id]];
                scores.insert(id.clone(), scorer.score_document(doc, self.field)?);
            }
            hidden_scores.insert(scorer.name().to_string(), scores);
        }

        let mut sessions = self.sessions.write().expect("session map lock poisoned");
        let base = session_id_for(corpus_id, sample_size, seed, scorers);
        let session_id = (1..)
            .map(|n| if n == 1 { base.clone() } else { format!("{base}-{n}") })
            .find(|id| !sessions.contains_key(id))
            .expect("unbounded candidates");
        let session = AnnotationSession {
            session_id: session_id.clone(),
            corpus_id: corpus_id.to_string(),
            seed,
            scorers: scorers.to_vec(),
            doc_ids,
            ratings: BTreeMap::new(),
            hidden_scores,
            created: self.clock.now(),
            history: Vec::new(),
        };
        if let Some(path) = self.log_path(&session_id) {
            let mut f = OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
                .map_err(io_at(&path))?;
            write_event(&mut f, &path, &session.created_event())?;
        }
        let info = SessionInfo::from(&session);
        sessions.insert(session_id, Arc::new(Mutex::new(session)));
        Ok(info)
    }

    fn session(&self, session_id: &str) -> Result<Arc<Mutex<AnnotationSession>>, AnnotationError> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| AnnotationError::UnknownSession(session_id.to_string()))
    }

    /// A consistent copy of the session's current state.
    pub fn snapshot(&self, session_id: &str) -> Result<AnnotationSession, AnnotationError> {
        Ok(self.session(session_id)?.lock().expect("session lock poisoned").clone())
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.read().expect("session map lock poisoned").keys().cloned().collect()
    }

    pub fn info(&self, session_id: &str) -> Result<SessionInfo, AnnotationError> {
        Ok(SessionInfo::from(&*self.session(session_id)?.lock().expect("session lock poisoned")))
    }

    pub fn next_task(&self, session_id: &str) -> Result<Task, AnnotationError> {
        let handle = self.session(session_id)?;
        let session = handle.lock().expect("session lock poisoned");
        let Some(doc_id) = session.current_doc() else {
            return Ok(Task::Done { done: true });
        };
        let corpus = self
            .corpora
            .get(&session.corpus_id)
            .ok_or_else(|| AnnotationError::UnknownCorpus(session.corpus_id.clone()))?;
        let doc = corpus
            .by_id
            .get(doc_id)
            .map(|&i| &corpus.docs[i])
            .ok_or_else(|| AnnotationError::MissingDocument(doc_id.to_string()))?;
        Ok(Task::Document {
            doc_id: doc.id.clone(),
            title: doc.title.clone(),
            body: doc.body.clone(),
            progress: session.progress(),
        })
    }

    /// Records a rating for the current document. On any error the session
    /// is left untouched.
    pub fn submit_rating(&self, session_id: &str, doc_id: &str, value: u8) -> Result<Progress, AnnotationError> {
        let handle = self.session(session_id)?;
        let mut session = handle.lock().expect("session lock poisoned");
        session.check_rating(doc_id, value)?;
        let rating = Rating {
            session_id: session_id.to_string(),
            doc_id: doc_id.to_string(),
            value,
            rated_at: self.clock.now(),
        };
        if let Some(path) = self.log_path(session_id) {
            let mut f = OpenOptions::new().append(true).open(&path).map_err(io_at(&path))?;
            write_event(&mut f, &path, &SessionEvent::Rating(rating.clone()))?;
        }
        session.apply(rating);
        Ok(session.progress())
    }

    pub fn report(&self, session_id: &str) -> Result<SessionReport, AnnotationError> {
        let session = self.snapshot(session_id)?;
        session_report(&session)
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotationError {
    let path = path.to_path_buf();
    move |source| AnnotationError::Io { path, source }
}

fn write_event(f: &mut File, path: &Path, event: &SessionEvent) -> Result<(), AnnotationError> {
    let mut line = serde_json::to_string(event).expect("events serialize");
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(io_at(path))?;
    f.sync_data().map_err(io_at(path))
}

/// Parses a session log and replays it.
pub fn read_log(path: &Path) -> Result<AnnotationSession, AnnotationError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let corrupt = |line: usize, message: String| AnnotationError::CorruptLog {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut events = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let complete = raw.ends_with('\n');
        match serde_json::from_str::<SessionEvent>(raw.trim_end()) {
            Ok(ev) => events.push(ev),
            Err(_) if !complete && i > 0 => {
                log::warn!("{}: dropping torn final line", path.display());
                let f = OpenOptions::new().write(true).open(path).map_err(io_at(path))?;
                f.set_len(offset as u64).map_err(io_at(path))?;
                break;
            }
            Err(e) => return Err(corrupt(i + 1, e.to_string())),
        }
        offset += raw.len();
    }
    AnnotationSession::replay(&events).map_err(|m| corrupt(events.len(), m))
}
