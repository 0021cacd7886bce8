use std::collections::BTreeSet;

use dupscout_core::corpus::{load_corpus, split_train_test, Format};
use dupscout_core::metrics::{run_evaluation, NOT_FOUND};
use dupscout_core::{Config, Pipeline, ReportCollection, SplitSpec};

const CORPUS: &str = r#"{"id":"1","summary":"Editor crashes when saving large file","description":"Steps: open a 2GB file and press save.\n  at org.editor.io.Writer.flush(Writer.java:88)\n  at org.editor.ui.SaveAction.run(SaveAction.java:41)","component":"editor","platform":{"os":"linux"}}
{"id":"2","summary":"Toolbar icons missing on high dpi display","description":"icons render as empty squares at 200% scaling","component":"ui","platform":{"os":"windows"}}
{"id":"3","summary":"Sync stalls behind corporate proxy","description":"proxy with ntlm auth blocks the sync worker","component":"sync","platform":{"os":"macos"}}
{"id":"4","summary":"Spell checker ignores custom dictionary","description":"words added to the user dictionary are still underlined","component":"editor"}
{"id":"5","summary":"saving large file crashes editor","description":"press save on a big file.\n  at org.editor.io.Writer.flush(Writer.java:88)\n  at org.editor.ui.SaveAction.run(SaveAction.java:41)","component":"editor","platform":{"os":"linux"},"dup_of":"1"}
{"id":"6","summary":"missing toolbar icons with dpi display high","description":"scaling 200% icons render as empty squares","component":"ui","platform":{"os":"windows"},"dup_of":"2"}
{"id":"7","summary":"corporate proxy stalls sync","description":"ntlm proxy auth blocks sync worker","component":"sync","platform":{"os":"macos"},"dup_of":"6"}
"#;

fn corpus() -> ReportCollection {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    std::fs::write(&path, CORPUS).unwrap();
    load_corpus(&path, Format::Jsonl).unwrap().0
}

fn children(coll: &ReportCollection) -> Vec<(String, String)> {
    coll.iter()
        .filter(|r| r.is_duplicate())
        .map(|r| (r.id.clone(), coll.resolve_parent(&r.id).unwrap().to_string()))
        .collect()
}

#[test]
fn permuted_copies_rank_their_roots_first() {
    let coll = corpus();
    let all: BTreeSet<String> = coll.iter().map(|r| r.id.clone()).collect();
    let (pipeline, summary) = Pipeline::train(&coll, &all, &Config::default()).unwrap();
    assert_eq!(summary.indexed, 4);
    let split = SplitSpec {
        train_ids: all,
        test_pairs: children(&coll),
    };
    let eval = run_evaluation("hand", &split, &pipeline, &coll, 5, false).unwrap();
    // Child 7 links to 6, whose root is 2; scoring uses the root.
    let seven = eval.records.iter().find(|r| r.child_id == "7").unwrap();
    assert_eq!(seven.parent_id, "2");
    let hits: Vec<i64> = eval.records.iter().map(|r| r.found_position).collect();
    assert_eq!(hits[..2], [1, 1]);
    assert_eq!(eval.report.recall_at(5), Some(1.0));
}

#[test]
fn stack_frames_join_the_summary() {
    let coll = corpus();
    let all: BTreeSet<String> = coll.iter().map(|r| r.id.clone()).collect();
    let (pipeline, _) = Pipeline::train(&coll, &all, &Config::default()).unwrap();
    let doc = pipeline.process(coll.get("1").unwrap()).unwrap();
    assert!(doc.doc_summary.iter().any(|t| t == "org.editor.io.writer.flush"));
    assert!(doc.doc_summary.iter().any(|t| t == "writer.java"));
}

#[test]
fn absent_parents_score_zero() {
    let coll = corpus();
    let train: BTreeSet<String> = ["3", "4"].iter().map(|s| s.to_string()).collect();
    let (pipeline, _) = Pipeline::train(&coll, &train, &Config::default()).unwrap();
    let split = SplitSpec {
        train_ids: train,
        test_pairs: vec![("5".into(), "1".into()), ("6".into(), "2".into())],
    };
    let eval = run_evaluation("hand", &split, &pipeline, &coll, 5, false).unwrap();
    assert!(eval.records.iter().all(|r| r.found_position == NOT_FOUND));
    assert_eq!(eval.report.recall_at(5), Some(0.0));
}

#[test]
fn filtering_never_raises_recall() {
    let coll = corpus();
    let split = split_train_test(&coll, 0.5, 3).unwrap();
    split.check_invariants().unwrap();
    let config = Config {
        pair_ratio: 1.0,
        ..Config::default()
    };
    let (pipeline, _) = Pipeline::train(&coll, &split.train_ids, &config).unwrap();
    let raw = run_evaluation("hand", &split, &pipeline, &coll, 3, false).unwrap();
    let filtered = run_evaluation("hand", &split, &pipeline, &coll, 3, true).unwrap();
    for (r, f) in raw.records.iter().zip(&filtered.records) {
        assert!(f.list_length <= r.list_length);
        if f.found_position != NOT_FOUND {
            assert!(f.found_position <= r.found_position || r.found_position == NOT_FOUND);
        }
    }
    assert!(filtered.report.recall_at(3) <= raw.report.recall_at(3));
}

#[test]
fn empty_split_is_rejected() {
    let coll = corpus();
    let all: BTreeSet<String> = coll.iter().map(|r| r.id.clone()).collect();
    let (pipeline, _) = Pipeline::train(&coll, &all, &Config::default()).unwrap();
    let split = SplitSpec {
        train_ids: all,
        test_pairs: Vec::new(),
    };
    let err = run_evaluation("hand", &split, &pipeline, &coll, 5, false).unwrap_err();
    assert!(err.to_string().contains("no test pairs"));
}
