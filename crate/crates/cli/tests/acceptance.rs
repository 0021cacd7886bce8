//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails for a reason other than a documented
//! known gap. Known gaps still print FAIL.
//!
//! Run alone with `cargo test -p dupscout --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use dupscout_core::metrics::{self, cumulative_curve, position_histogram, recall_at_n, EvaluationRecord, NOT_FOUND};
use dupscout_core::nominate::{Algorithm, NeighborIndex, Nomination, SelectionThresholds};
use dupscout_core::vectorize::{BlockWeights, TfidfModel};
use dupscout_core::{
    Config, FeatureSpace, Pipeline, ProcessedReport, RecentCache, ReportCollection, SparseVector, SplitSpec,
};
use dupscout_service::{Gate, Verdict};

struct Outcome {
    pass: bool,
    detail: String,
    /// Why a failure is expected and cannot be fixed in code.
    known_gap: Option<&'static str>,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
        known_gap: None,
    }
}

/// The firefox reference figure is printed to whole percent. Its own position
/// counts give 5650/8424 = 67.070%, which no implementation can bring within
/// 0.05 of 67.
const FIREFOX_WHOLE_PERCENT: &str = "firefox reference is whole-percent 67; its counts give 67.070";

/// Reference position counts at ranks 1..5, the not-found count and the
/// reference recall@5 figure, in percent.
const REFERENCE_COUNTS: [(&str, [usize; 5], usize, f64); 3] = [
    ("private", [2332, 482, 219, 157, 158], 1329, 71.58),
    ("firefox", [3675, 901, 469, 328, 277], 2774, 67.0),
    ("eclipse", [2466, 535, 295, 209, 159], 1486, 71.14),
];

fn records(counts: &[usize], not_found: usize) -> Vec<EvaluationRecord> {
    let mut out = Vec::new();
    let positions = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i as i64 + 1, c))
        .chain(std::iter::repeat_n(NOT_FOUND, not_found));
    for (i, pos) in positions.enumerate() {
        out.push(EvaluationRecord {
            child_id: format!("c{i}"),
            parent_id: format!("p{i}"),
            found_position: pos,
            similarity_to_parent: (pos != NOT_FOUND).then_some(0.5),
            list_length: 5,
            degraded: false,
        });
    }
    out
}

fn metric_reproduction() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for (name, counts, not_found, reference) in REFERENCE_COUNTS {
        let pct = recall_at_n(&records(&counts, not_found), 5).expect("nonempty") * 100.0;
        let diff = (pct - reference).abs();
        let ok = diff <= 0.05;
        if !ok {
            failures.push(name);
        }
        parts.push(format!(
            "{name} {pct:.3}% vs {reference} (|d|={diff:.3}{})",
            if ok { "" } else { " > 0.05" }
        ));
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(1) {
        failures.push("runtime");
    }
    let mut result = outcome(failures.is_empty(), format!("{}; {:.0?}", parts.join(", "), elapsed));
    if failures == ["firefox"] {
        result.known_gap = Some(FIREFOX_WHOLE_PERCENT);
    }
    result
}

fn cumulative_reproduction() -> Outcome {
    let expected: [[usize; 5]; 3] = [
        [2332, 2814, 3033, 3190, 3348],
        [3675, 4576, 5045, 5373, 5650],
        [2466, 3001, 3296, 3505, 3664],
    ];
    let mut pass = true;
    for ((name, counts, not_found, _), want) in REFERENCE_COUNTS.iter().zip(expected) {
        let hist = position_histogram(&records(counts, *not_found), 5).expect("positions in range");
        let got: Vec<usize> = cumulative_curve(&hist).into_iter().map(|(_, c)| c).collect();
        if got != want {
            return outcome(false, format!("{name}: {got:?} != {want:?}"));
        }
        pass &= hist.total == counts.iter().sum::<usize>() + not_found;
    }
    outcome(pass, "private position-2 cumulative 2814; all three curves exact")
}

fn knn_equivalence() -> Outcome {
    let start = Instant::now();
    let thresholds = SelectionThresholds::default();
    let mut worst = 0.0f64;
    for (dim, seed) in [(3usize, 11u64), (50, 12)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<SparseVector> = (0..500)
            .map(|_| SparseVector::from_dense(&(0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let ids: Vec<String> = (0..500).map(|i| format!("v{i:03}")).collect();
        let build = |a| NeighborIndex::build(vectors.clone(), ids.clone(), Some(a), &thresholds).expect("build");
        let brute = build(Algorithm::Brute);
        let trees = [build(Algorithm::KdTree), build(Algorithm::BallTree)];
        let cache = RecentCache::new(1);
        for q in 0..100 {
            let query = SparseVector::from_dense(&(0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
            let want = brute.knn_query(&cache, &query, 10).expect("query");
            for tree in &trees {
                let got = tree.knn_query(&cache, &query, 10).expect("query");
                let same_ids = got.iter().map(|n| &n.id).eq(want.iter().map(|n| &n.id));
                if !same_ids {
                    return outcome(
                        false,
                        format!("{} d={dim} query {q}: id lists differ", tree.algorithm()),
                    );
                }
                for (g, w) in got.iter().zip(&want) {
                    worst = worst.max((g.distance - w.distance).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("kd_tree and ball_tree match brute on 3-d and 50-d, max |dd|={worst:.1e}; {elapsed:.1?}"),
    )
}

fn tfidf_oracle() -> Outcome {
    // idf(a) = ln(3/2) + 1 and idf(b) = ln(3/3) + 1; [a b] normalized by sqrt(idf(a)^2 + 1).
    let (idf_a, idf_b, wa, wb) = (
        1.405_465_108_108_164_4,
        1.0,
        0.814_802_474_667_168_9,
        0.579_738_671_537_665_7,
    );
    let docs = [
        vec!["a".to_string(), "b".to_string()],
        vec!["b".to_string(), "c".to_string()],
    ];
    let model = TfidfModel::fit(docs.iter().map(Vec::as_slice)).expect("fit");
    let v = model.transform(&docs[0]);
    let got = [
        model.idf("a").unwrap_or(f64::NAN),
        model.idf("b").unwrap_or(f64::NAN),
        v.entries()[0].1,
        v.entries()[1].1,
    ];
    let err = got
        .iter()
        .zip([idf_a, idf_b, wa, wb])
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    outcome(
        err <= 1e-9 && v.nnz() == 2,
        format!(
            "idf(a)={:.10} idf(b)={:.1} weights=({:.10}, {:.10}), max err {err:.1e}",
            got[0], got[1], got[2], got[3]
        ),
    )
}

fn random_processed(rng: &mut ChaCha8Rng, vocab: &[String], i: usize) -> ProcessedReport {
    let mut words = |max: usize| -> Vec<String> {
        (0..rng.gen_range(0..=max))
            .map(|_| {
                if rng.gen_bool(0.8) {
                    vocab.choose(rng).unwrap().clone()
                } else {
                    format!("oov{}", rng.gen_range(0..1000))
                }
            })
            .collect()
    };
    let doc_summary = words(10);
    let doc_description = words(30);
    let component = ["ui", "network", "kernel", "never-seen"][rng.gen_range(0..4)].to_string();
    let mut platform = BTreeMap::new();
    if rng.gen_bool(0.7) {
        platform.insert(
            "os".to_string(),
            ["linux", "windows", "beos"][rng.gen_range(0..3)].to_string(),
        );
    }
    if rng.gen_bool(0.5) {
        platform.insert("ram_gb".to_string(), rng.gen_range(1..64).to_string());
    }
    ProcessedReport {
        id: format!("p{i}"),
        doc_summary,
        doc_description,
        component,
        platform,
    }
}

fn norm_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let vocab = common::vocabulary(400, &mut rng);
    let training: Vec<ProcessedReport> = (0..200).map(|i| random_processed(&mut rng, &vocab, i)).collect();
    let space = FeatureSpace::fit(&training, BlockWeights::default()).expect("fit");
    let w = space.weights().0;
    let mut worst = 0.0f64;
    let mut zero_blocks = 0;
    for i in 0..1000 {
        let report = random_processed(&mut rng, &vocab, i);
        let blocks = space.blocks(&report);
        let expected: f64 = blocks
            .iter()
            .zip(w)
            .filter(|(b, _)| !b.is_zero())
            .map(|(_, wb)| wb * wb)
            .sum();
        zero_blocks += blocks.iter().filter(|b| b.is_zero()).count();
        let norm = space.assemble_vector(&report).norm();
        worst = worst.max((norm * norm - expected).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("1000 reports ({zero_blocks} empty blocks), max |norm^2 - sum w_b^2|={worst:.1e}"),
    )
}

struct Synthetic {
    collection: ReportCollection,
    pipeline: Pipeline,
    split: SplitSpec,
}

fn synthetic() -> Synthetic {
    let collection = common::synthetic_corpus(150, 50, 0.1, 7);
    let all: BTreeSet<String> = collection.iter().map(|r| r.id.clone()).collect();
    let (pipeline, _) = Pipeline::train(&collection, &all, &Config::default()).expect("train");
    let test_pairs = collection
        .iter()
        .filter(|r| r.is_duplicate())
        .map(|r| (r.id.clone(), r.dup_of.clone().unwrap()))
        .collect();
    Synthetic {
        split: SplitSpec {
            train_ids: all,
            test_pairs,
        },
        collection,
        pipeline,
    }
}

fn end_to_end_recall(s: &Synthetic) -> Outcome {
    let start = Instant::now();
    let run = |filter| {
        metrics::run_evaluation("synthetic", &s.split, &s.pipeline, &s.collection, 5, filter).expect("evaluate")
    };
    let raw = run(false).report;
    let filtered = run(true).report;
    let (r_raw, r_filt) = (raw.recall_at(5).unwrap(), filtered.recall_at(5).unwrap());
    let elapsed = start.elapsed();
    let pass = s.collection.len() == 200
        && raw.total == 50
        && r_raw >= 0.9
        && r_raw - r_filt <= 0.1
        && filtered.mean_list_length < raw.mean_list_length
        && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "recall@5 {r_raw:.3} unfiltered, {r_filt:.3} filtered; mean list {:.2} -> {:.2}; {elapsed:.1?}",
            raw.mean_list_length, filtered.mean_list_length
        ),
    )
}

fn filter_subsequence(s: &Synthetic) -> Outcome {
    let Some(classifier) = &s.pipeline.classifier else {
        return outcome(false, "no classifier was trained");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let ids = s.pipeline.index.ids().to_vec();
    let queries: Vec<ProcessedReport> = s
        .collection
        .iter()
        .map(|r| s.pipeline.process(r).expect("process"))
        .collect();
    let store: &HashMap<String, ProcessedReport> = s.pipeline.store();
    let mut removed = 0;
    for _ in 0..1000 {
        let query = queries.choose(&mut rng).unwrap();
        let len = rng.gen_range(0..=10);
        let mut distance = 0.0;
        let list: Vec<Nomination> = ids
            .choose_multiple(&mut rng, len)
            .map(|id| {
                distance += rng.gen_range(0.0..0.2);
                Nomination::new(id.clone(), distance)
            })
            .collect();
        let out = classifier.filter_nominees(&s.pipeline.space, query, &list, store);
        let mut input = list.iter();
        if !out.nominees.iter().all(|kept| input.any(|n| n == kept)) {
            return outcome(false, "filter output is not a subsequence of its input");
        }
        removed += list.len() - out.nominees.len();
    }
    outcome(true, format!("1000 lists, {removed} nominees removed, order preserved"))
}

fn dupscout(args: &[&str], dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dupscout"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let corpus = common::synthetic_corpus(60, 20, 0.1, 3);
    common::write_corpus(&corpus, &dir.path().join("corpus.jsonl"));
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let art = format!("art-{run}");
        let out = format!("eval-{run}");
        let result = dupscout(&["--seed", "5", "train", "corpus.jsonl", "-o", &art], dir.path())
            .and_then(|_| dupscout(&["evaluate", &art, "-o", &out], dir.path()));
        if let Err(e) = result {
            return outcome(false, e);
        }
        reports.push(std::fs::read(dir.path().join(out).join("report.json")).expect("report.json"));
    }
    outcome(
        reports[0] == reports[1],
        format!(
            "two seeded train+evaluate runs, report.json {} bytes each, identical={}",
            reports[0].len(),
            reports[0] == reports[1]
        ),
    )
}

fn service_consistency(s: &Synthetic) -> Outcome {
    let gate = Gate::new(s.pipeline.clone());
    let report = json!({
        "summary": "keyboard backlight flickers when the lid closes",
        "description": "after closing the lid the backlight keeps flickering",
        "component": "input"
    });
    let submitted = match gate.handle_submit(&report, false) {
        Ok(r) if r.accepted => r.id.unwrap_or_default(),
        other => return outcome(false, format!("submit not accepted: {other:?}")),
    };
    match gate.handle_check(&report, None) {
        Ok(check) => {
            let top = check.candidates.first();
            let sim = top.map_or(f64::NAN, |n| n.similarity);
            let pass = check.verdict == Verdict::LikelyDuplicate
                && top.is_some_and(|n| n.id == submitted)
                && (sim - 1.0).abs() <= 1e-9;
            outcome(
                pass,
                format!(
                    "submitted {submitted}, check verdict {:?}, top similarity {sim}",
                    check.verdict
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let synthetic = synthetic();
    let criteria: Vec<(&str, Check)> = vec![
        ("metric reproduction", Box::new(metric_reproduction)),
        ("cumulative-curve reproduction", Box::new(cumulative_reproduction)),
        ("k-NN oracle equivalence", Box::new(knn_equivalence)),
        ("TF-IDF hand oracle", Box::new(tfidf_oracle)),
        ("weighted-vector norm property", Box::new(norm_property)),
        (
            "end-to-end synthetic recall",
            Box::new(|| end_to_end_recall(&synthetic)),
        ),
        (
            "filter subsequence property",
            Box::new(|| filter_subsequence(&synthetic)),
        ),
        ("determinism", Box::new(determinism)),
        ("service consistency", Box::new(|| service_consistency(&synthetic))),
    ];
    let (mut failed, mut known) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let status = match (result.pass, result.known_gap) {
            (true, _) => "PASS".to_string(),
            (false, Some(gap)) => {
                known += 1;
                format!("FAIL (known gap: {gap})")
            }
            (false, None) => {
                failed += 1;
                "FAIL".to_string()
            }
        };
        println!("criterion {}: {status} [{name}] {}", i + 1, result.detail);
    }
    println!(
        "acceptance: {} passed, {} failed ({known} known gap)",
        criteria.len() - failed - known,
        failed + known
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
