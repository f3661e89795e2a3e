use std::collections::HashSet;

use chrono::NaiveDate;
use newsrank::corpus::{self, DateRange, Document, LabeledDocument, SplitSpec};
use proptest::prelude::*;

fn arb_document() -> impl Strategy<Value = Document> {
    (
        "[a-z0-9]{1,8}",
        proptest::option::of((1980i32..2020, 1u32..13, 1u32..29)),
        ".{0,20}",
        "[^\\s].{0,40}",
        proptest::option::of("[A-Z]?[0-9]{1,2}"),
        proptest::option::of("[a-z ]{1,10}"),
        proptest::option::of(".{1,20}"),
    )
        .prop_map(|(id, date, title, body, page, section, alt)| Document {
            id,
            corpus_id: "nyt".into(),
            date: date.map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap()),
            title,
            body,
            page,
            section,
            alt_text: alt,
        })
}

proptest! {
    #[test]
    fn corpus_file_round_trip(docs in proptest::collection::vec(arb_document(), 0..20)) {
        let mut seen = HashSet::new();
        let docs: Vec<Document> = docs.into_iter().filter(|d| seen.insert(d.id.clone())).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus::write_corpus(&path, &docs).unwrap();
        prop_assert_eq!(corpus::load_corpus(&path, "nyt").unwrap(), docs);
    }

    #[test]
    fn label_is_idempotent(page in "\\s{0,2}[aAbB]?[0-9]{1,2}\\s{0,2}") {
        let mut d = Document::new("x", "nyt", "b");
        d.page = Some(page.clone());
        let l = corpus::derive_label(d.clone()).unwrap();
        let again = corpus::derive_label(l.document.clone()).unwrap();
        prop_assert_eq!(l.label, again.label);
        let norm = page.trim().to_uppercase();
        prop_assert_eq!(l.label, norm == "1" || norm == "A1");
    }

    #[test]
    fn split_partitions_and_filters_weekends(days in proptest::collection::vec(0u64..6000, 0..200)) {
        let base = NaiveDate::from_ymd_opt(1990, 1, 1).unwrap();
        let docs: Vec<LabeledDocument> = days.iter().enumerate().map(|(i, &d)| {
            let mut doc = Document::new(format!("d{i}"), "nyt", "b");
            doc.date = Some(base + chrono::Days::new(d));
            LabeledDocument { document: doc, label: i % 3 == 0 }
        }).collect();
        let spec = SplitSpec {
            train_range: DateRange::new(base, NaiveDate::from_ymd_opt(2001, 1, 1).unwrap()),
            test_range: DateRange::new(NaiveDate::from_ymd_opt(2001, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2010, 1, 1).unwrap()),
            weekdays_only: true,
        };
        let split = corpus::apply_split(docs, &spec).unwrap();
        let train_ids: HashSet<_> = split.train.iter().map(|d| d.document.id.clone()).collect();
        for d in &split.train {
            prop_assert!(spec.train_range.contains(d.document.date.unwrap()));
            prop_assert!(!corpus::is_weekend(d.document.date.unwrap()));
        }
        for d in &split.test {
            prop_assert!(spec.test_range.contains(d.document.date.unwrap()));
            prop_assert!(!corpus::is_weekend(d.document.date.unwrap()));
            prop_assert!(!train_ids.contains(&d.document.id));
        }
    }

    #[test]
    fn balanced_counts_equal(n_pos in 1usize..80, n_neg in 1usize..400, cap in 1usize..100, seed in any::<u64>()) {
        let docs: Vec<LabeledDocument> = (0..n_pos + n_neg).map(|i| LabeledDocument {
            document: Document::new(format!("d{i}"), "nyt", "b"),
            label: i < n_pos,
        }).collect();
        let out = corpus::balanced_sample(&docs, cap, seed).unwrap();
        let pos = out.iter().filter(|d| d.label).count();
        let expected = cap.min(n_pos).min(n_neg);
        prop_assert_eq!(pos, expected);
        prop_assert_eq!(out.len() - pos, expected);
        let other = corpus::balanced_sample(&docs, cap, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(other.iter().filter(|d| d.label).count(), expected);
    }
}

#[test]
fn balance_at_paper_scale() {
    let docs: Vec<LabeledDocument> = (0..660_000)
        .map(|i| LabeledDocument {
            document: Document::new(i.to_string(), "nyt", "b"),
            label: i < 60_000,
        })
        .collect();
    let out = corpus::balanced_sample(&docs, 45_000, 7).unwrap();
    assert_eq!(out.iter().filter(|d| d.label).count(), 45_000);
    assert_eq!(out.iter().filter(|d| !d.label).count(), 45_000);
}
