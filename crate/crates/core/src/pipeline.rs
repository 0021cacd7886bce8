//! Trained engine state and its on-disk artifact set.
//!
//! An artifact directory holds:
//!
//! | file              | contents                                          |
//! |-------------------|---------------------------------------------------|
//! | `manifest.json`   | format version, counts, algorithm choice          |
//! | `config.json`     | the [`Config`] used for training                  |
//! | `space.json`      | fitted [`FeatureSpace`]                           |
//! | `index.json`      | [`NeighborIndex`] rows and ids (trees rebuilt on load) |
//! | `classifier.json` | [`PairClassifier`], absent when training was skipped |
//! | `reports.jsonl`   | raw indexed reports, for nominee look-up          |
//!
//! Every JSON artifact carries a `format_version`; loading rejects other versions.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::{self, BugReport, Format, ReportCollection};
use crate::error::{Error, Result};
use crate::nominate::{AlgorithmChoice, NeighborIndex, Nomination, RecentCache};
use crate::preprocess::{Preprocessor, ProcessedReport};
use crate::rerank::{build_training_pairs, FilterOutcome, PairClassifier, ReportStore};
use crate::vectorize::{FeatureSpace, SparseVector};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    format_version: u32,
    value: T,
}

/// Writes `value` as pretty JSON with a version tag.
pub fn write_artifact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let versioned = Versioned {
        format_version: FORMAT_VERSION,
        value,
    };
    let mut text = serde_json::to_string_pretty(&versioned)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_artifact<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let artifact_err = |reason: String| Error::Artifact {
        path: path.to_path_buf(),
        reason,
    };
    let versioned: Versioned<T> = serde_json::from_str(&text).map_err(|e| artifact_err(e.to_string()))?;
    if versioned.format_version != FORMAT_VERSION {
        return Err(artifact_err(format!(
            "format_version {} unsupported (expected {FORMAT_VERSION})",
            versioned.format_version
        )));
    }
    Ok(versioned.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_reports: usize,
    pub indexed: usize,
    pub dimension: usize,
    pub algorithm: AlgorithmChoice,
    pub positives: usize,
    pub negatives: usize,
    /// `reference_scorer`, `external_encoder` or `skipped`.
    pub classifier: String,
    pub classifier_note: Option<String>,
}

/// Processed reports from the index and, optionally, from the recent cache.
pub struct CombinedStore<'a> {
    pub index: &'a HashMap<String, ProcessedReport>,
    pub recent: Option<&'a HashMap<String, ProcessedReport>>,
}

impl ReportStore for CombinedStore<'_> {
    fn processed(&self, id: &str) -> Option<&ProcessedReport> {
        self.index.get(id).or_else(|| self.recent.and_then(|r| r.get(id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub nominees: Vec<Nomination>,
    /// Present when filtering was requested.
    pub filtered: Option<FilterOutcome>,
}

impl QueryOutcome {
    /// The filtered list when filtering ran, else the raw nominees.
    pub fn candidates(&self) -> &[Nomination] {
        self.filtered.as_ref().map_or(&self.nominees, |f| &f.nominees)
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: Config,
    preprocessor: Preprocessor,
    pub space: FeatureSpace,
    pub index: NeighborIndex,
    pub classifier: Option<PairClassifier>,
    indexed_reports: Vec<BugReport>,
    store: HashMap<String, ProcessedReport>,
}

impl Pipeline {
    /// Fits the feature space on `train_ids`, indexes the originals among them
    /// and trains the pair classifier. Classifier training is skipped, not
    /// failed, when the training reports lack duplicate links.
    pub fn train(
        collection: &ReportCollection,
        train_ids: &BTreeSet<String>,
        config: &Config,
    ) -> Result<(Self, TrainSummary)> {
        config.validate()?;
        let train = collection.restricted(train_ids)?;
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let preprocessor = Preprocessor::with_patterns(&config.trace_patterns)?;
        let processed: Vec<ProcessedReport> = train
            .reports()
            .par_iter()
            .map(|r| preprocessor.build_document(r))
            .collect::<Result<_>>()?;
        let space = FeatureSpace::fit(&processed, config.weights)?;

        let mut indexed_reports = Vec::new();
        let mut vectors = Vec::new();
        let mut store = HashMap::new();
        for (report, doc) in train.iter().zip(&processed) {
            if report.is_duplicate() {
                continue;
            }
            indexed_reports.push(report.clone());
            vectors.push(space.assemble_vector(doc));
            store.insert(report.id.clone(), doc.clone());
        }
        let ids = indexed_reports.iter().map(|r| r.id.clone()).collect();
        let index = NeighborIndex::build(vectors, ids, config.algorithm, &config.selection)?;

        let mut summary = TrainSummary {
            train_reports: train.len(),
            indexed: index.len(),
            dimension: index.dimension(),
            algorithm: index.choice().clone(),
            positives: 0,
            negatives: 0,
            classifier: "skipped".to_string(),
            classifier_note: None,
        };

        let classifier = match build_training_pairs(&train, config.pair_ratio, config.seed) {
            Ok(pairs) => {
                summary.positives = pairs.positives.len();
                summary.negatives = pairs.negatives.len();
                match &config.encoder {
                    Some(encoder) => Some(PairClassifier::external(encoder.clone(), config.threshold)),
                    None => {
                        let all_docs: HashMap<String, ProcessedReport> =
                            processed.iter().map(|d| (d.id.clone(), d.clone())).collect();
                        Some(PairClassifier::train(
                            &pairs,
                            &all_docs,
                            &space,
                            &config.logistic(),
                            config.threshold,
                        )?)
                    }
                }
            }
            Err(Error::InsufficientData(reason)) => {
                summary.classifier_note = Some(reason);
                config
                    .encoder
                    .as_ref()
                    .map(|encoder| PairClassifier::external(encoder.clone(), config.threshold))
            }
            Err(other) => return Err(other),
        };
        if let Some(clf) = &classifier {
            summary.classifier = clf.kind_name().to_string();
        }

        Ok((
            Self {
                config: config.clone(),
                preprocessor,
                space,
                index,
                classifier,
                indexed_reports,
                store,
            },
            summary,
        ))
    }

    pub fn process(&self, report: &BugReport) -> Result<ProcessedReport> {
        self.preprocessor.build_document(report)
    }

    pub fn vectorize(&self, doc: &ProcessedReport) -> SparseVector {
        self.space.assemble_vector(doc)
    }

    pub fn store(&self) -> &HashMap<String, ProcessedReport> {
        &self.store
    }

    pub fn indexed_reports(&self) -> &[BugReport] {
        &self.indexed_reports
    }

    /// Nominates `k` candidates for `doc` and, when `with_filter` is set and a
    /// classifier exists, runs them through the pair filter. `recent` supplies
    /// processed reports for cached nominees.
    pub fn query(
        &self,
        doc: &ProcessedReport,
        cache: &RecentCache,
        recent: Option<&HashMap<String, ProcessedReport>>,
        k: usize,
        with_filter: bool,
    ) -> Result<QueryOutcome> {
        let vector = self.vectorize(doc);
        let nominees = self.index.knn_query(cache, &vector, k)?;
        let filtered = if with_filter {
            Some(match &self.classifier {
                Some(clf) => {
                    let store = CombinedStore {
                        index: &self.store,
                        recent,
                    };
                    clf.filter_nominees(&self.space, doc, &nominees, &store)
                }
                None => FilterOutcome {
                    nominees: nominees.clone(),
                    degraded: false,
                },
            })
        } else {
            None
        };
        Ok(QueryOutcome { nominees, filtered })
    }

    pub fn save(&self, dir: &Path, summary: &TrainSummary) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_artifact(&dir.join("manifest.json"), summary)?;
        write_artifact(&dir.join("config.json"), &self.config)?;
        write_artifact(&dir.join("space.json"), &self.space)?;
        write_artifact(&dir.join("index.json"), &self.index)?;
        let clf_path = dir.join("classifier.json");
        match &self.classifier {
            Some(clf) => write_artifact(&clf_path, clf)?,
            None if clf_path.exists() => fs::remove_file(&clf_path).map_err(|e| Error::io(&clf_path, e))?,
            None => {}
        }
        let (reports, _) = ReportCollection::new(self.indexed_reports.clone())?;
        corpus::write_jsonl(&reports, &dir.join("reports.jsonl"))
    }

    pub fn load(dir: &Path) -> Result<(Self, TrainSummary)> {
        let need = |name: &str| -> Result<PathBuf> {
            let path = dir.join(name);
            if path.exists() {
                Ok(path)
            } else {
                Err(Error::Artifact {
                    path,
                    reason: "missing; run `train` first".to_string(),
                })
            }
        };
        let summary: TrainSummary = read_artifact(&need("manifest.json")?)?;
        let config: Config = read_artifact(&need("config.json")?)?;
        let space: FeatureSpace = read_artifact(&need("space.json")?)?;
        let index: NeighborIndex = read_artifact(&need("index.json")?)?;
        let clf_path = dir.join("classifier.json");
        let classifier = if clf_path.exists() {
            Some(read_artifact(&clf_path)?)
        } else {
            None
        };
        let (reports, _) = corpus::load_corpus(&need("reports.jsonl")?, Format::Jsonl)?;
        let preprocessor = Preprocessor::with_patterns(&config.trace_patterns)?;
        let mut store = HashMap::with_capacity(reports.len());
        for report in &reports {
            if !index.contains(&report.id) {
                return Err(Error::Artifact {
                    path: dir.join("reports.jsonl"),
                    reason: format!("report {:?} is not in the index", report.id),
                });
            }
            store.insert(report.id.clone(), preprocessor.build_document(report)?);
        }
        Ok((
            Self {
                config,
                preprocessor,
                space,
                index,
                classifier,
                indexed_reports: reports.reports().to_vec(),
                store,
            },
            summary,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct RecentRepr {
    capacity: usize,
    reports: Vec<BugReport>,
}

/// Reports registered since training: the cache vectors plus the raw and
/// processed reports needed to filter against and persist them.
#[derive(Debug, Clone)]
pub struct RecentReports {
    cache: RecentCache,
    reports: HashMap<String, BugReport>,
    docs: HashMap<String, ProcessedReport>,
}

impl RecentReports {
    pub fn new(capacity: usize) -> Self {
        Self {
            cache: RecentCache::new(capacity),
            reports: HashMap::new(),
            docs: HashMap::new(),
        }
    }

    pub fn cache(&self) -> &RecentCache {
        &self.cache
    }

    pub fn docs(&self) -> &HashMap<String, ProcessedReport> {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.cache.contains(id)
    }

    /// Adds `report` to the cache; returns the evicted id, if any.
    pub fn register(&mut self, pipeline: &Pipeline, report: BugReport) -> Result<Option<String>> {
        let doc = pipeline.process(&report)?;
        let vector = pipeline.vectorize(&doc);
        let evicted = self.cache.add(&pipeline.index, report.id.clone(), vector)?;
        if let Some(old) = &evicted {
            self.reports.remove(old);
            self.docs.remove(old);
        }
        self.docs.insert(report.id.clone(), doc);
        self.reports.insert(report.id.clone(), report);
        Ok(evicted)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let reports = self
            .cache
            .iter()
            .filter_map(|(id, _)| self.reports.get(id).cloned())
            .collect();
        write_artifact(
            path,
            &RecentRepr {
                capacity: self.cache.capacity(),
                reports,
            },
        )
    }

    /// Re-registers saved reports oldest first. Reports that now collide with
    /// the index are dropped.
    pub fn load(path: &Path, pipeline: &Pipeline) -> Result<Self> {
        let repr: RecentRepr = read_artifact(path)?;
        let mut recent = Self::new(repr.capacity);
        for report in repr.reports {
            match recent.register(pipeline, report) {
                Ok(_) => {}
                Err(Error::AlreadyPresent(id)) => tracing::warn!(%id, "cached report already indexed, dropped"),
                Err(other) => return Err(other),
            }
        }
        Ok(recent)
    }
}

impl Pipeline {
    /// [`Pipeline::query`] against the recent reports as cache.
    pub fn query_recent(
        &self,
        doc: &ProcessedReport,
        recent: &RecentReports,
        k: usize,
        with_filter: bool,
    ) -> Result<QueryOutcome> {
        self.query(doc, &recent.cache, Some(&recent.docs), k, with_filter)
    }
}
