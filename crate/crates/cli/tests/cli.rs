use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use newsrank::corpus::write_corpus;
use newsrank::synthetic::{newspaper_corpus, records_corpus, NewspaperConfig, RecordsConfig};

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(n_docs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let news = newspaper_corpus(&NewspaperConfig {
            n_docs,
            leak_token: Some("sportsmonday".into()),
            ..Default::default()
        });
        write_corpus(dir.path().join("news.jsonl"), &news).unwrap();
        let (records, _) = records_corpus(&RecordsConfig {
            n_docs: 200,
            n_planted: 5,
            ..Default::default()
        });
        write_corpus(dir.path().join("records.jsonl"), &records).unwrap();
        fs::write(
            dir.path().join("run.toml"),
            r#"
seed = 7
output_dir = "out"
labeled_corpus = "news"

[corpora]
news = "news.jsonl"
records = "records.jsonl"

[split]
train = "1987-01-01..2003-01-01"
test = "2003-01-01..2008-01-01"
"#,
        )
        .unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_newsrank"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("run.toml")
            .arg("--quiet")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn single_line_error(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

#[test]
fn full_pipeline_runs_and_reports() {
    let ws = Workspace::new(1500);
    let ingest = ws.ok(&["ingest", "--corpus-id", "news", "--labeled"]);
    assert!(ingest.starts_with("news: 1500 documents"), "{ingest}");
    assert!(ingest.contains("front-page"));

    ws.ok(&["mine-stopwords", "--auto-confirm", "--rounds", "1", "--top-k", "1"]);
    let stop = fs::read_to_string(ws.path("out/stopwords.txt")).unwrap();
    assert_eq!(stop, "sportsmonday\n");
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(ws.path("out/stopwords.json")).unwrap()).unwrap();
    assert_eq!(log[0]["candidates"][0]["term"], "sportsmonday");

    ws.ok(&["build-vocab", "--stopwords", "out/stopwords.txt"]);
    let vocab = newsrank::Vocabulary::load(ws.path("out/vocab.json")).unwrap();
    assert_eq!(vocab.index_of("sportsmonday"), None);
    assert!(vocab.stopwords().contains("sportsmonday"));
    assert!(vocab.index_of("court ruled").is_some());

    ws.ok(&["train", "--family", "logreg"]);
    let eval = ws.ok(&["eval", "--model", "out/model-logreg.json", "--brute-force"]);
    let line = eval.trim();
    assert!(line.starts_with("AUC: ") && line.contains("(n_pos=") && line.contains(", n_neg="), "{line}");
    let auc: f64 = line[5..11].parse().unwrap();
    assert!(auc > 0.9, "{line}");

    ws.ok(&["rank", "--corpus-id", "records", "--model", "out/model-logreg.json", "--top", "10"]);
    let ranked = fs::read_to_string(ws.path("out/ranked-records.jsonl")).unwrap();
    assert_eq!(ranked.lines().count(), 10);
    let first: serde_json::Value = serde_json::from_str(ranked.lines().next().unwrap()).unwrap();
    assert_eq!(first["rank"], 1);

    let kl = ws.ok(&["kl"]);
    assert!(kl.starts_with(",news,records"), "{kl}");
    assert_eq!(fs::read_to_string(ws.path("out/kl.csv")).unwrap(), kl);

    let coeffs = ws.ok(&["coeffs", "--model", "out/model-logreg.json", "-k", "5"]);
    assert!(coeffs.contains("Top Pos. Coef."));
    assert!(ws.path("out/model-logreg_positive.csv").exists());
    assert!(ws.path("out/model-logreg_negative.csv").exists());

    ws.ok(&["train", "--family", "embbag", "--epochs", "3"]);
    let eval = ws.ok(&["eval", "--model", "out/model-embbag.json"]);
    assert!(eval.starts_with("AUC: "));
    let out = ws.run(&["coeffs", "--model", "out/model-embbag.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_is_byte_identical_across_runs() {
    let ws = Workspace::new(600);
    ws.ok(&["build-vocab"]);
    for family in ["logreg", "embbag"] {
        ws.ok(&["train", "--family", family, "--seed", "7", "--out", "a.json"]);
        ws.ok(&["train", "--family", family, "--seed", "7", "--out", "b.json"]);
        assert_eq!(fs::read(ws.path("a.json")).unwrap(), fs::read(ws.path("b.json")).unwrap());
        ws.ok(&["train", "--family", family, "--seed", "8", "--out", "c.json"]);
        assert_ne!(fs::read(ws.path("a.json")).unwrap(), fs::read(ws.path("c.json")).unwrap());
    }
}

#[test]
fn score_files_register_and_evaluate() {
    let ws = Workspace::new(400);
    let news = newsrank::corpus::load_corpus(ws.path("news.jsonl"), "news").unwrap();
    let lines: String = news
        .iter()
        .map(|d| {
            let score = if d.body.contains("sportsmonday") { 0.9 } else { 0.1 };
            format!("{{\"id\":\"{}\",\"score\":{score}}}\n", d.id)
        })
        .collect();
    fs::write(ws.path("oracle.jsonl"), lines).unwrap();
    let out = ws.ok(&["score-file", "--scores", "oracle.jsonl", "--name", "leak-oracle"]);
    assert!(out.contains("leak-oracle"));
    assert!(ws.path("out/scores/leak-oracle.jsonl").exists());
    let eval = ws.ok(&["eval", "--scores", "out/scores/leak-oracle.jsonl", "--brute-force"]);
    assert!(eval.starts_with("AUC: 1.0000"), "{eval}");

    fs::write(ws.path("bad.jsonl"), "{\"id\":\"a\",\"score\":1.5}\n").unwrap();
    let out = ws.run(&["score-file", "--scores", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    single_line_error(&out);
}

#[test]
fn exit_codes_follow_the_contract() {
    let ws = Workspace::new(300);
    let out = ws.run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = ws.run(&["train", "--family", "logreg", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));

    let out = ws.run(&["build-vocab", "--min-df", "0.6", "--max-df", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    single_line_error(&out);

    let out = ws.run(&["ingest", "--corpus-id", "missing"]);
    assert_eq!(out.status.code(), Some(1));
    single_line_error(&out);

    fs::write(ws.path("broken.jsonl"), "{\"id\": \"a\", \"body\": \"x\"}\nnot json\n").unwrap();
    let out = ws.run(&["ingest", "--corpus", "broken.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let err = single_line_error(&out);
    assert!(err.contains('2'), "{err}");

    ws.ok(&["build-vocab"]);
    let out = ws.run(&["train", "--family", "logreg", "--learning-rate", "1e300", "--epochs", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    single_line_error(&out);

    let out = Command::new(env!("CARGO_BIN_EXE_newsrank")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn serve_answers_over_http() {
    let ws = Workspace::new(300);
    let records = newsrank::corpus::load_corpus(ws.path("records.jsonl"), "records").unwrap();
    let lines: String = records
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{{\"id\":\"{}\",\"score\":{}}}\n", d.id, i as f64 / 1000.0))
        .collect();
    fs::write(ws.path("ext.jsonl"), lines).unwrap();
    ws.ok(&["score-file", "--scores", "ext.jsonl"]);

    let mut child = Command::new(env!("CARGO_BIN_EXE_newsrank"))
        .current_dir(ws.dir.path())
        .args(["--config", "run.toml", "--quiet", "serve", "--corpus", "records", "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line}")).to_string();

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    let result = rt.block_on(async {
        let client = reqwest::Client::new();
        let created: serde_json::Value = client
            .post(format!("{base}/sessions"))
            .json(&serde_json::json!({"corpus_id": "records", "sample_size": 3, "seed": 1, "scorers": ["ext"]}))
            .send()
            .await?
            .json()
            .await?;
        let id = created["session_id"].as_str().unwrap().to_string();
        let task: serde_json::Value = client.get(format!("{base}/sessions/{id}/next")).send().await?.json().await?;
        Ok::<_, reqwest::Error>(task)
    });
    let _ = child.kill();
    let _ = child.wait();
    let task = result.unwrap();
    assert_eq!(task["progress"], serde_json::json!({"completed": 0, "total": 3}));
    assert!(Path::new(&ws.path("out/sessions")).is_dir());
}
