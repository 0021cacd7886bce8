//! Pair-classifier filtering of nominated reports.
//!
//! A new report is paired with each nominee; nominees the classifier labels
//! `distinct` are suppressed. The filter only removes: it never reorders or
//! adds, so its output is always a subsequence of the nominee list.
//!
//! Two classifiers implement the contract. [`ReferenceScorer`] is a logistic
//! model over six hand-built pair features, trained locally. The external
//! encoder posts both sides' flattened text to a scoring service.

mod external;
mod logistic;

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use external::{EncoderConfig, ExternalEncoder, DEFAULT_ENCODER_TIMEOUT_MS};
pub use logistic::{fit_logistic, LogisticConfig, ReferenceScorer};

use crate::corpus::ReportCollection;
use crate::error::{Error, Result};
use crate::nominate::Nomination;
use crate::preprocess::ProcessedReport;
use crate::vectorize::FeatureSpace;

pub const DEFAULT_PAIR_RATIO: f64 = 3.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const N_PAIR_FEATURES: usize = 6;

/// Labeled training pairs: `(child, root)` positives and pairs of distinct originals as negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub positives: Vec<(String, String)>,
    pub negatives: Vec<(String, String)>,
    pub ratio: f64,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_training_pairs(collection: &ReportCollection, ratio: f64, seed: u64) -> Result<PairSet> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidInput(format!("pair ratio {ratio} must be positive")));
    }
    let mut positives = Vec::new();
    for report in collection.iter().filter(|r| r.is_duplicate()) {
        let root = collection.resolve_parent(&report.id)?;
        positives.push((report.id.clone(), root.to_string()));
    }
    if positives.is_empty() {
        return Err(Error::InsufficientData("no duplicate links to pair".to_string()));
    }
    let originals: Vec<&str> = collection.originals().map(|r| r.id.as_str()).collect();
    if originals.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 original reports, found {}",
            originals.len()
        )));
    }

    // Distinct originals are distinct roots, so any two of them share no root.
    let n_possible = originals.len() * (originals.len() - 1) / 2;
    let wanted = ((positives.len() as f64 / ratio).floor() as usize).min(n_possible);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut negatives = Vec::with_capacity(wanted);
    while negatives.len() < wanted {
        let a = rng.gen_range(0..originals.len());
        let b = rng.gen_range(0..originals.len());
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        negatives.push((originals[a].to_string(), originals[b].to_string()));
    }

    Ok(PairSet {
        positives,
        negatives,
        ratio,
    })
}

fn cosine_or_identity(a: &crate::vectorize::SparseVector, b: &crate::vectorize::SparseVector) -> f64 {
    match (a.is_zero(), b.is_zero()) {
        (true, true) => 1.0,
        (false, false) => a.dot(b).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Symmetric pair features, each in `[0, 1]`:
///
/// 0. cosine of the summary TF-IDF blocks
/// 1. cosine of the description TF-IDF blocks
/// 2. component equality
/// 3. Jaccard of the platform `(key, value)` sets
/// 4. Jaccard of the summary token sets
/// 5. shorter over longer summary length
///
/// Two empty blocks or sets count as identical.
pub fn pair_features(a: &ProcessedReport, b: &ProcessedReport, space: &FeatureSpace) -> [f64; N_PAIR_FEATURES] {
    let summary = cosine_or_identity(
        &space.summary_model.transform(&a.doc_summary),
        &space.summary_model.transform(&b.doc_summary),
    );
    let description = cosine_or_identity(
        &space.description_model.transform(&a.doc_description),
        &space.description_model.transform(&b.doc_description),
    );
    let component = if a.component == b.component { 1.0 } else { 0.0 };
    let platform = jaccard(
        &a.platform.iter().collect::<BTreeSet<_>>(),
        &b.platform.iter().collect::<BTreeSet<_>>(),
    );
    let tokens = jaccard(
        &a.doc_summary.iter().collect::<BTreeSet<_>>(),
        &b.doc_summary.iter().collect::<BTreeSet<_>>(),
    );
    let (la, lb) = (a.doc_summary.len(), b.doc_summary.len());
    let length = if la.max(lb) == 0 {
        1.0
    } else {
        la.min(lb) as f64 / la.max(lb) as f64
    };
    [summary, description, component, platform, tokens, length]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Duplicate,
    Distinct,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierKind {
    ReferenceScorer(ReferenceScorer),
    ExternalEncoder(ExternalEncoder),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairClassifier {
    pub threshold: f64,
    pub model: ClassifierKind,
}

/// Processed reports addressable by id, for looking up nominees.
pub trait ReportStore {
    fn processed(&self, id: &str) -> Option<&ProcessedReport>;
}

impl ReportStore for HashMap<String, ProcessedReport> {
    fn processed(&self, id: &str) -> Option<&ProcessedReport> {
        self.get(id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub nominees: Vec<Nomination>,
    /// Set when the classifier could not be reached and the list passed through unfiltered.
    pub degraded: bool,
}

impl PairClassifier {
    pub fn external(config: EncoderConfig, threshold: f64) -> Self {
        Self {
            threshold,
            model: ClassifierKind::ExternalEncoder(ExternalEncoder::new(config)),
        }
    }

    /// Trains the reference scorer on `pairs`.
    pub fn train(
        pairs: &PairSet,
        store: &impl ReportStore,
        space: &FeatureSpace,
        config: &LogisticConfig,
        threshold: f64,
    ) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InsufficientData("empty pair set".to_string()));
        }
        let lookup = |id: &str| store.processed(id).ok_or_else(|| Error::UnknownId(id.to_string()));
        let mut features = Vec::with_capacity(pairs.len());
        let mut labels = Vec::with_capacity(pairs.len());
        for (pairs, label) in [(&pairs.positives, true), (&pairs.negatives, false)] {
            for (a, b) in pairs {
                features.push(pair_features(lookup(a)?, lookup(b)?, space).to_vec());
                labels.push(label);
            }
        }
        let (weights, bias) = fit_logistic(&features, &labels, config)?;
        Ok(Self {
            threshold,
            model: ClassifierKind::ReferenceScorer(ReferenceScorer { weights, bias }),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.model {
            ClassifierKind::ReferenceScorer(_) => "reference_scorer",
            ClassifierKind::ExternalEncoder(_) => "external_encoder",
        }
    }

    pub fn classify_pair(
        &self,
        space: &FeatureSpace,
        a: &ProcessedReport,
        b: &ProcessedReport,
    ) -> Result<(PairLabel, f64)> {
        match &self.model {
            ClassifierKind::ReferenceScorer(scorer) => {
                let score = scorer.score(&pair_features(a, b, space));
                Ok((self.label_for(score), score))
            }
            ClassifierKind::ExternalEncoder(encoder) => encoder.classify(a, b),
        }
    }

    pub fn label_for(&self, score: f64) -> PairLabel {
        if score >= self.threshold {
            PairLabel::Duplicate
        } else {
            PairLabel::Distinct
        }
    }

    /// Drops nominees the classifier judges distinct from `query`. Nominees the
    /// store cannot resolve are kept. If the classifier fails, the list is
    /// returned unchanged with `degraded` set.
    pub fn filter_nominees(
        &self,
        space: &FeatureSpace,
        query: &ProcessedReport,
        nominees: &[Nomination],
        store: &impl ReportStore,
    ) -> FilterOutcome {
        let mut kept = Vec::with_capacity(nominees.len());
        for nominee in nominees {
            let Some(candidate) = store.processed(&nominee.id) else {
                tracing::warn!(id = %nominee.id, "nominee missing from report store, kept unfiltered");
                kept.push(nominee.clone());
                continue;
            };
            match self.classify_pair(space, query, candidate) {
                Ok((PairLabel::Duplicate, _)) => kept.push(nominee.clone()),
                Ok((PairLabel::Distinct, _)) => {}
                Err(err) => {
                    tracing::warn!(%err, "pair classifier unavailable, passing nominees through");
                    return FilterOutcome {
                        nominees: nominees.to_vec(),
                        degraded: true,
                    };
                }
            }
        }
        FilterOutcome {
            nominees: kept,
            degraded: false,
        }
    }
}
