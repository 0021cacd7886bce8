//! Weighted heterogeneous vectorization.
//!
//! A report becomes one sparse vector built from four blocks laid side by side:
//!
//! ```text
//! [ summary TF-IDF | description TF-IDF | component one-hot | platform dict ]
//! ```
//!
//! Each block is L2-normalized on its own and then scaled by its block weight,
//! so a block's weight is exactly its share of the vector's squared norm and
//! bounds its contribution to squared Euclidean distance.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_COMPONENT;
use crate::error::{Error, Result};
use crate::preprocess::ProcessedReport;

/// Token budget of a pair-classifier text side.
pub const PAIR_TEXT_MAX_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dimension: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            dimension,
            entries: Vec::new(),
        }
    }

    /// Sorts entries, sums repeated columns and drops zeros.
    pub fn new(dimension: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(col, _)| col);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (col, value) in entries {
            if col >= dimension {
                return Err(Error::InvalidInput(format!(
                    "column {col} outside dimension {dimension}"
                )));
            }
            match merged.last_mut() {
                Some((last, acc)) if *last == col => *acc += value,
                _ => merged.push((col, value)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(Self {
            dimension,
            entries: merged,
        })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            dimension: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for &(col, v) in &self.entries {
            dense[col] = v;
        }
        dense
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (ca, va) = self.entries[i];
            let (cb, vb) = other.entries[j];
            match ca.cmp(&cb) {
                std::cmp::Ordering::Equal => {
                    sum += va * vb;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        sum
    }

    fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            for (_, v) in &mut self.entries {
                *v /= norm;
            }
        }
        self
    }
}

fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Smoothed TF-IDF over a fixed vocabulary. Columns follow sorted term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TfidfRepr", into = "TfidfRepr")]
pub struct TfidfModel {
    terms: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
    n_docs: usize,
    vocabulary: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TfidfRepr {
    n_docs: usize,
    terms: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
}

impl From<TfidfRepr> for TfidfModel {
    fn from(r: TfidfRepr) -> Self {
        let vocabulary = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            terms: r.terms,
            df: r.df,
            idf: r.idf,
            n_docs: r.n_docs,
            vocabulary,
        }
    }
}

impl From<TfidfModel> for TfidfRepr {
    fn from(m: TfidfModel) -> Self {
        Self {
            n_docs: m.n_docs,
            terms: m.terms,
            df: m.df,
            idf: m.idf,
        }
    }
}

impl TfidfModel {
    pub fn fit<'a, I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for term in unique {
                *df.entry(term).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(Error::EmptyCorpus);
        }
        let terms: Vec<String> = df.keys().map(|t| t.to_string()).collect();
        let df: Vec<usize> = df.into_values().collect();
        let idf = df.iter().map(|&d| idf(n_docs, d)).collect();
        Ok(TfidfRepr { n_docs, terms, df, idf }.into())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.column(term).map(|c| self.df[c])
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c])
    }

    /// Raw counts times idf, L2-normalized. Out-of-vocabulary tokens are ignored.
    pub fn transform(&self, tokens: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for token in tokens {
            if let Some(col) = self.column(token) {
                *counts.entry(col).or_default() += 1;
            }
        }
        SparseVector {
            dimension: self.len(),
            entries: counts
                .into_iter()
                .map(|(col, tf)| (col, tf as f64 * self.idf[col]))
                .collect(),
        }
        .normalized()
    }
}

/// Block weights for summary, description, component and platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockWeights(pub [f64; 4]);

impl Default for BlockWeights {
    fn default() -> Self {
        Self([0.45, 0.25, 0.25, 0.05])
    }
}

impl BlockWeights {
    pub fn new(weights: [f64; 4]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(weights));
        }
        Ok(Self(weights))
    }
}

fn parse_number(value: &str) -> Option<f64> {
    value.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FeatureSpaceRepr", into = "FeatureSpaceRepr")]
pub struct FeatureSpace {
    pub summary_model: TfidfModel,
    pub description_model: TfidfModel,
    /// Known labels in column order; the UNKNOWN column follows them.
    components: Vec<String>,
    platform_pairs: Vec<(String, String)>,
    platform_numeric: Vec<String>,
    weights: BlockWeights,
    component_index: HashMap<String, usize>,
    pair_index: HashMap<(String, String), usize>,
    numeric_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSpaceRepr {
    weights: BlockWeights,
    summary: TfidfModel,
    description: TfidfModel,
    components: Vec<String>,
    platform_pairs: Vec<(String, String)>,
    platform_numeric: Vec<String>,
}

impl From<FeatureSpaceRepr> for FeatureSpace {
    fn from(r: FeatureSpaceRepr) -> Self {
        Self {
            component_index: r.components.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect(),
            pair_index: r
                .platform_pairs
                .iter()
                .enumerate()
                .map(|(i, p)| (p.clone(), i))
                .collect(),
            numeric_index: r
                .platform_numeric
                .iter()
                .enumerate()
                .map(|(i, k)| (k.clone(), r.platform_pairs.len() + i))
                .collect(),
            summary_model: r.summary,
            description_model: r.description,
            components: r.components,
            platform_pairs: r.platform_pairs,
            platform_numeric: r.platform_numeric,
            weights: r.weights,
        }
    }
}

impl From<FeatureSpace> for FeatureSpaceRepr {
    fn from(s: FeatureSpace) -> Self {
        Self {
            weights: s.weights,
            summary: s.summary_model,
            description: s.description_model,
            components: s.components,
            platform_pairs: s.platform_pairs,
            platform_numeric: s.platform_numeric,
        }
    }
}

impl FeatureSpace {
    pub fn fit(reports: &[ProcessedReport], weights: BlockWeights) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let weights = BlockWeights::new(weights.0)?;
        let summary = TfidfModel::fit(reports.iter().map(|r| r.doc_summary.as_slice()))?;
        let description = TfidfModel::fit(reports.iter().map(|r| r.doc_description.as_slice()))?;

        let components: BTreeSet<String> = reports
            .iter()
            .map(|r| r.component.clone())
            .filter(|c| c != DEFAULT_COMPONENT)
            .collect();
        let mut pairs = BTreeSet::new();
        let mut numeric = BTreeSet::new();
        for (key, value) in reports.iter().flat_map(|r| &r.platform) {
            if parse_number(value).is_some() {
                numeric.insert(key.clone());
            } else {
                pairs.insert((key.clone(), value.clone()));
            }
        }

        Ok(FeatureSpaceRepr {
            weights,
            summary,
            description,
            components: components.into_iter().collect(),
            platform_pairs: pairs.into_iter().collect(),
            platform_numeric: numeric.into_iter().collect(),
        }
        .into())
    }

    pub fn weights(&self) -> BlockWeights {
        self.weights
    }

    /// Dimensions of the summary, description, component and platform blocks.
    pub fn block_dims(&self) -> [usize; 4] {
        [
            self.summary_model.len(),
            self.description_model.len(),
            self.components.len() + 1,
            self.platform_pairs.len() + self.platform_numeric.len(),
        ]
    }

    pub fn dimension(&self) -> usize {
        self.block_dims().iter().sum()
    }

    /// Column labels of the component block, UNKNOWN last.
    pub fn component_labels(&self) -> Vec<&str> {
        self.components
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(DEFAULT_COMPONENT))
            .collect()
    }

    pub fn encode_onehot(&self, component: &str) -> SparseVector {
        let col = self
            .component_index
            .get(component)
            .copied()
            .unwrap_or(self.components.len());
        SparseVector {
            dimension: self.components.len() + 1,
            entries: vec![(col, 1.0)],
        }
    }

    pub fn encode_platform(&self, platform: &BTreeMap<String, String>) -> SparseVector {
        let mut entries = Vec::new();
        for (key, value) in platform {
            match parse_number(value) {
                Some(number) => {
                    if let Some(&col) = self.numeric_index.get(key) {
                        entries.push((col, number));
                    }
                }
                None => {
                    if let Some(&col) = self.pair_index.get(&(key.clone(), value.clone())) {
                        entries.push((col, 1.0));
                    }
                }
            }
        }
        let dim = self.platform_pairs.len() + self.platform_numeric.len();
        SparseVector::new(dim, entries)
            .expect("platform columns are in range")
            .normalized()
    }

    /// The four normalized, unweighted blocks.
    pub fn blocks(&self, report: &ProcessedReport) -> [SparseVector; 4] {
        [
            self.summary_model.transform(&report.doc_summary),
            self.description_model.transform(&report.doc_description),
            self.encode_onehot(&report.component),
            self.encode_platform(&report.platform),
        ]
    }

    pub fn assemble_vector(&self, report: &ProcessedReport) -> SparseVector {
        let mut entries = Vec::new();
        let mut offset = 0;
        for (block, weight) in self.blocks(report).iter().zip(self.weights.0) {
            if weight > 0.0 {
                entries.extend(block.entries.iter().map(|&(c, v)| (offset + c, v * weight)));
            }
            offset += block.dimension;
        }
        SparseVector {
            dimension: offset,
            entries,
        }
    }
}

/// Flattened text of one report for the pair classifier, capped at
/// [`PAIR_TEXT_MAX_TOKENS`] tokens.
pub fn document_text(report: &ProcessedReport) -> String {
    let platform = report.platform.iter().map(|(k, v)| format!("{k}={v}"));
    report
        .doc_summary
        .iter()
        .cloned()
        .chain(report.doc_description.iter().cloned())
        .chain(std::iter::once(report.component.clone()))
        .chain(platform)
        .take(PAIR_TEXT_MAX_TOKENS)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn pair_text(a: &ProcessedReport, b: &ProcessedReport) -> (String, String) {
    (document_text(a), document_text(b))
}
