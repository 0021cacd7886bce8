//! Retrieval scoring: recall@n, parent-position histograms, cumulative
//! position curves and similarity distributions.
//!
//! Plot-ready CSV artifacts written by [`write_csv_artifacts`]:
//!
//! - `positions.csv`: `position,count` for 1..k then -1
//! - `cumulative.csv`: `position,cumulative_count`
//! - `similarity.csv`: `bin_start,bin_end,count`
//! - `records.csv`: `child_id,parent_id,found_position,similarity_to_parent,list_length`

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ReportCollection, SplitSpec};
use crate::error::{Error, Result};
use crate::nominate::RecentCache;
use crate::pipeline::Pipeline;

/// Position used for a child whose parent is absent from its list.
pub const NOT_FOUND: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub child_id: String,
    pub parent_id: String,
    /// 1-based rank of the parent, or [`NOT_FOUND`].
    pub found_position: i64,
    /// Present iff the parent was found.
    pub similarity_to_parent: Option<f64>,
    pub list_length: usize,
    pub degraded: bool,
}

impl EvaluationRecord {
    pub fn found(&self) -> bool {
        self.found_position != NOT_FOUND
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionHistogram {
    pub k: usize,
    /// `counts[i]` is the count at position `i + 1`.
    pub counts: Vec<usize>,
    pub not_found: usize,
    pub total: usize,
}

impl PositionHistogram {
    /// Builds a histogram directly from per-position counts.
    pub fn from_counts(counts: Vec<usize>, not_found: usize) -> Self {
        let total = counts.iter().sum::<usize>() + not_found;
        Self {
            k: counts.len(),
            counts,
            not_found,
            total,
        }
    }

    /// Fraction of records with the parent within the top `n`.
    pub fn recall_at(&self, n: usize) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::InvalidInput("no records to score".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        let hits: usize = self.counts.iter().take(n).sum();
        Ok(hits as f64 / self.total as f64)
    }
}

pub fn recall_at_n(records: &[EvaluationRecord], n: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to score".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let hits = records
        .iter()
        .filter(|r| (1..=n as i64).contains(&r.found_position))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn position_histogram(records: &[EvaluationRecord], k: usize) -> Result<PositionHistogram> {
    let mut counts = vec![0; k];
    let mut not_found = 0;
    for r in records {
        match r.found_position {
            NOT_FOUND => not_found += 1,
            p if p >= 1 && p as usize <= k => counts[p as usize - 1] += 1,
            position => return Err(Error::PositionOutOfRange { position, k }),
        }
    }
    Ok(PositionHistogram::from_counts(counts, not_found))
}

/// Prefix sums over positions 1..k; the not-found bucket is excluded.
pub fn cumulative_curve(hist: &PositionHistogram) -> Vec<(usize, usize)> {
    hist.counts
        .iter()
        .scan(0, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .enumerate()
        .map(|(i, total)| (i + 1, total))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBin {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

/// Bins are `[0, w), [w, 2w), ...`; the last bin is closed and absorbs 1.0.
/// Empty when no record was found.
pub fn similarity_distribution(records: &[EvaluationRecord], bin_width: f64) -> Result<Vec<SimilarityBin>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(Error::InvalidInput(format!("bin width {bin_width} outside (0, 1]")));
    }
    let found: Vec<f64> = records.iter().filter_map(|r| r.similarity_to_parent).collect();
    if found.is_empty() {
        return Ok(Vec::new());
    }
    // The epsilon keeps 1/0.1 from producing an eleventh bin.
    let n_bins = ((1.0 / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut bins: Vec<SimilarityBin> = (0..n_bins)
        .map(|i| SimilarityBin {
            start: round9(i as f64 * bin_width),
            end: round9(((i + 1) as f64 * bin_width).min(1.0)),
            count: 0,
        })
        .collect();
    for s in found {
        let idx = ((s / bin_width + 1e-9).floor() as usize).min(n_bins - 1);
        bins[idx].count += 1;
    }
    Ok(bins)
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Machine-readable summary of one evaluation run. Field order is fixed and
/// contains no timestamps, so identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub k: usize,
    pub with_filter: bool,
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
    pub recall: BTreeMap<String, f64>,
    pub similarity_bins: Vec<SimilarityBin>,
    pub curve: Vec<(usize, usize)>,
    pub mean_list_length: f64,
    pub degraded_queries: usize,
}

impl EvaluationReport {
    pub fn recall_at(&self, n: usize) -> Option<f64> {
        self.recall.get(&n.to_string()).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<EvaluationRecord>,
    pub histogram: PositionHistogram,
    pub curve: Vec<(usize, usize)>,
    pub report: EvaluationReport,
}

/// Scores already-collected records.
pub fn summarize(
    dataset: &str,
    records: Vec<EvaluationRecord>,
    k: usize,
    with_filter: bool,
    bin_width: f64,
) -> Result<Evaluation> {
    let histogram = position_histogram(&records, k)?;
    let curve = cumulative_curve(&histogram);
    let mut counts = BTreeMap::new();
    let mut recall = BTreeMap::new();
    for n in 1..=k {
        counts.insert(n.to_string(), histogram.counts[n - 1]);
        recall.insert(n.to_string(), recall_at_n(&records, n)?);
    }
    counts.insert(NOT_FOUND.to_string(), histogram.not_found);
    let mean_list_length = records.iter().map(|r| r.list_length as f64).sum::<f64>() / records.len() as f64;
    let report = EvaluationReport {
        dataset: dataset.to_string(),
        k,
        with_filter,
        total: records.len(),
        counts,
        recall,
        similarity_bins: similarity_distribution(&records, bin_width)?,
        curve: curve.clone(),
        mean_list_length,
        degraded_queries: records.iter().filter(|r| r.degraded).count(),
    };
    Ok(Evaluation {
        records,
        histogram,
        curve,
        report,
    })
}

/// Queries every held-out child against the trained pipeline, with an empty
/// recent cache, and scores where its resolved root landed.
pub fn run_evaluation(
    dataset: &str,
    split: &SplitSpec,
    pipeline: &Pipeline,
    collection: &ReportCollection,
    k: usize,
    with_filter: bool,
) -> Result<Evaluation> {
    if split.test_pairs.is_empty() {
        return Err(Error::InvalidInput("split has no test pairs".into()));
    }
    let cache = RecentCache::new(1);
    let records = split
        .test_pairs
        .par_iter()
        .map(|(child_id, _)| {
            let child = collection
                .get(child_id)
                .ok_or_else(|| Error::UnknownId(child_id.clone()))?;
            let parent_id = collection.resolve_parent(child_id)?.to_string();
            let doc = pipeline.process(child)?;
            let outcome = pipeline.query(&doc, &cache, None, k, with_filter)?;
            let list = outcome.candidates();
            let hit = list.iter().position(|n| n.id == parent_id);
            Ok(EvaluationRecord {
                child_id: child_id.clone(),
                parent_id,
                found_position: hit.map_or(NOT_FOUND, |i| i as i64 + 1),
                similarity_to_parent: hit.map(|i| list[i].similarity),
                list_length: list.len(),
                degraded: outcome.filtered.as_ref().is_some_and(|f| f.degraded),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(dataset, records, k, with_filter, pipeline.config.similarity_bin_width)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Artifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `report.json` and the CSV artifacts into `dir`.
pub fn write_csv_artifacts(eval: &Evaluation, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(&eval.report)?;
    json.push('\n');
    let report_path = dir.join("report.json");
    fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;

    let h = &eval.histogram;
    let positions = (1..=h.k as i64)
        .zip(h.counts.iter().copied())
        .chain(std::iter::once((NOT_FOUND, h.not_found)));
    write_rows(&dir.join("positions.csv"), &["position", "count"], positions)?;
    write_rows(
        &dir.join("cumulative.csv"),
        &["position", "cumulative_count"],
        eval.curve.iter().copied(),
    )?;
    write_rows(
        &dir.join("similarity.csv"),
        &["bin_start", "bin_end", "count"],
        eval.report.similarity_bins.iter().map(|b| (b.start, b.end, b.count)),
    )?;
    write_rows(
        &dir.join("records.csv"),
        &[
            "child_id",
            "parent_id",
            "found_position",
            "similarity_to_parent",
            "list_length",
        ],
        eval.records.iter().map(|r| {
            (
                &r.child_id,
                &r.parent_id,
                r.found_position,
                r.similarity_to_parent,
                r.list_length,
            )
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records_from(counts: &[usize], not_found: usize) -> Vec<EvaluationRecord> {
        let mut out = Vec::new();
        let mut push = |pos: i64| {
            out.push(EvaluationRecord {
                child_id: format!("c{}", out.len()),
                parent_id: "p".into(),
                found_position: pos,
                similarity_to_parent: (pos != NOT_FOUND).then_some(0.5),
                list_length: 5,
                degraded: false,
            })
        };
        for (i, &c) in counts.iter().enumerate() {
            (0..c).for_each(|_| push(i as i64 + 1));
        }
        (0..not_found).for_each(|_| push(NOT_FOUND));
        out
    }

    #[test]
    fn private_counts_recall_and_curve() {
        let records = records_from(&[2332, 482, 219, 157, 158], 1329);
        assert_eq!(records.len(), 4677);
        let r5 = recall_at_n(&records, 5).unwrap();
        assert!((r5 - 3348.0 / 4677.0).abs() < 1e-12);
        assert!((r5 * 100.0 - 71.58).abs() <= 0.05);
        let hist = position_histogram(&records, 5).unwrap();
        assert_eq!(
            cumulative_curve(&hist),
            [(1, 2332), (2, 2814), (3, 3033), (4, 3190), (5, 3348)]
        );
    }

    #[test]
    fn firefox_and_eclipse_counts() {
        let ff = records_from(&[3675, 901, 469, 328, 277], 2774);
        assert_eq!(ff.len(), 8424);
        assert!((recall_at_n(&ff, 5).unwrap() - 0.6707027540360874).abs() < 1e-12);
        let ec = records_from(&[2466, 535, 295, 209, 159], 1486);
        let hist = position_histogram(&ec, 5).unwrap();
        assert_eq!(hist.counts, [2466, 535, 295, 209, 159]);
        assert_eq!(hist.not_found, 1486);
        assert_eq!(hist.total, 5150);
        assert!((hist.recall_at(5).unwrap() - 0.7114563106796116).abs() < 1e-12);
    }

    #[test]
    fn small_cases() {
        assert_eq!(recall_at_n(&records_from(&[3], 0), 1).unwrap(), 1.0);
        assert!(recall_at_n(&[], 1).is_err());
        let hist = position_histogram(&records_from(&[0, 0, 1], 0), 5).unwrap();
        assert_eq!(hist.counts, [0, 0, 1, 0, 0]);
        assert_eq!(hist.total, 1);
        let mut bad = records_from(&[1], 0);
        bad[0].found_position = 7;
        assert!(matches!(
            position_histogram(&bad, 5),
            Err(Error::PositionOutOfRange { position: 7, k: 5 })
        ));
        let zeros = PositionHistogram::from_counts(vec![0; 3], 4);
        assert_eq!(cumulative_curve(&zeros), [(1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn similarity_bins() {
        let mut records = records_from(&[2], 1);
        records[0].similarity_to_parent = Some(0.95);
        records[1].similarity_to_parent = Some(1.0);
        let bins = similarity_distribution(&records, 0.1).unwrap();
        assert_eq!(bins.len(), 10);
        assert_eq!(
            bins[9],
            SimilarityBin {
                start: 0.9,
                end: 1.0,
                count: 2
            }
        );
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 2);
        assert!(similarity_distribution(&records_from(&[], 3), 0.1).unwrap().is_empty());
        assert!(similarity_distribution(&records, 0.0).is_err());
        assert_eq!(similarity_distribution(&records, 0.3).unwrap().len(), 4);
    }

    #[test]
    fn summary_report_shape() {
        let eval = summarize("toy", records_from(&[1, 1], 2), 2, false, 0.5).unwrap();
        let json = serde_json::to_value(&eval.report).unwrap();
        assert_eq!(json["counts"]["-1"], 2);
        assert_eq!(json["counts"]["1"], 1);
        assert_eq!(json["recall"]["2"], 0.5);
        assert_eq!(json["total"], 4);
        let dir = tempfile::tempdir().unwrap();
        write_csv_artifacts(&eval, dir.path()).unwrap();
        let positions = fs::read_to_string(dir.path().join("positions.csv")).unwrap();
        assert_eq!(positions, "position,count\n1,1\n2,1\n-1,2\n");
        let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
        assert!(records.lines().last().unwrap().ends_with(",-1,,5"));
    }

    proptest! {
        #[test]
        fn recall_properties(counts in prop::collection::vec(0usize..20, 1..8), missing in 0usize..20) {
            let k = counts.len();
            let records = records_from(&counts, missing);
            prop_assume!(!records.is_empty());
            let mut prev = 0.0;
            for n in 1..=k {
                let r = recall_at_n(&records, n).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
            let hist = position_histogram(&records, k).unwrap();
            prop_assert_eq!(hist.counts.iter().sum::<usize>() + hist.not_found, hist.total);
            prop_assert_eq!(prev, (hist.total - hist.not_found) as f64 / hist.total as f64);
            let curve = cumulative_curve(&hist);
            prop_assert_eq!(curve.last().unwrap().1 as f64 / hist.total as f64, prev);
            prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
