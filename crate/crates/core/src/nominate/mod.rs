//! Exact k-nearest-neighbor nomination over original reports.
//!
//! The index holds only reports without a duplicate link, so every nominee is
//! a root. Freshly submitted uniques live in a [`RecentCache`] that is scanned
//! alongside the index until the next offline rebuild.
//!
//! All three search structures return identical `(id, distance)` lists: ties on
//! distance break by report id, and the trees only prune a node when its lower
//! bound is strictly worse than the current k-th candidate.

mod balltree;
mod cache;
mod kdtree;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use balltree::BallTree;
pub use cache::RecentCache;
pub use kdtree::KdTree;

use crate::error::{Error, Result};
use crate::vectorize::SparseVector;

pub const LEAF_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Brute,
    KdTree,
    BallTree,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Brute => "brute",
            Algorithm::KdTree => "kd_tree",
            Algorithm::BallTree => "ball_tree",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" => Ok(Algorithm::Brute),
            "kd" | "kd_tree" => Ok(Algorithm::KdTree),
            "ball" | "ball_tree" => Ok(Algorithm::BallTree),
            other => Err(Error::InvalidInput(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmChoice {
    pub algorithm: Algorithm,
    pub rationale: String,
}

/// Cut-offs for [`select_algorithm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionThresholds {
    /// Below this many samples tree construction is not worth it.
    pub brute_max_samples: usize,
    pub kd_max_features: usize,
    pub ball_max_features: usize,
    /// Data with a lower nonzero fraction counts as sparse.
    pub sparse_density: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            brute_max_samples: 1000,
            kd_max_features: 20,
            ball_max_features: 100,
            sparse_density: 0.5,
        }
    }
}

pub fn select_algorithm(
    n_samples: usize,
    n_features: usize,
    sparse: bool,
    k: usize,
    n_queries: usize,
    thresholds: &SelectionThresholds,
) -> AlgorithmChoice {
    let (algorithm, why) = if sparse {
        (Algorithm::Brute, "sparse input".to_string())
    } else if n_samples < thresholds.brute_max_samples {
        (
            Algorithm::Brute,
            format!(
                "{n_samples} samples < {}, tree overhead not worth it",
                thresholds.brute_max_samples
            ),
        )
    } else if n_features <= thresholds.kd_max_features {
        (
            Algorithm::KdTree,
            format!("{n_features} features <= {}", thresholds.kd_max_features),
        )
    } else if n_features <= thresholds.ball_max_features {
        (
            Algorithm::BallTree,
            format!("{n_features} features <= {}", thresholds.ball_max_features),
        )
    } else {
        (
            Algorithm::Brute,
            format!(
                "{n_features} features > {}, trees degrade",
                thresholds.ball_max_features
            ),
        )
    };
    AlgorithmChoice {
        algorithm,
        rationale: format!("{why} (n={n_samples}, d={n_features}, k={k}, queries={n_queries})"),
    }
}

/// Euclidean distance over the merged sparse supports.
pub fn euclidean_distance(p: &SparseVector, q: &SparseVector) -> Result<f64> {
    if p.dimension() != q.dimension() {
        return Err(Error::DimensionMismatch {
            expected: p.dimension(),
            actual: q.dimension(),
        });
    }
    Ok(sparse_sq_distance(p.entries(), q.entries()).sqrt())
}

/// Accumulates `(q_i - p_i)^2` in ascending column order. Skipped columns add
/// exactly zero, so the result is bitwise equal to [`dense_sq_distance`].
fn sparse_sq_distance(p: &[(usize, f64)], q: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    loop {
        let diff = match (p.get(i), q.get(j)) {
            (Some(&(cp, vp)), Some(&(cq, vq))) if cp == cq => {
                i += 1;
                j += 1;
                vq - vp
            }
            (Some(&(cp, vp)), Some(&(cq, _))) if cp < cq => {
                i += 1;
                0.0 - vp
            }
            (Some(&(_, vp)), None) => {
                i += 1;
                0.0 - vp
            }
            (_, Some(&(_, vq))) => {
                j += 1;
                vq - 0.0
            }
            (None, None) => break,
        };
        sum += diff * diff;
    }
    sum
}

pub(crate) fn dense_sq_distance(p: &[f64], q: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (a, b) in p.iter().zip(q) {
        let diff = b - a;
        sum += diff * diff;
    }
    sum
}

/// `1 - distance`, clamped at zero.
pub fn similarity(distance: f64) -> Result<f64> {
    if distance < 0.0 || distance.is_nan() {
        return Err(Error::NegativeDistance(distance));
    }
    Ok((1.0 - distance).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nomination {
    pub id: String,
    pub distance: f64,
    pub similarity: f64,
}

impl Nomination {
    pub fn new(id: impl Into<String>, distance: f64) -> Self {
        Self {
            id: id.into(),
            distance,
            similarity: (1.0 - distance).clamp(0.0, 1.0),
        }
    }
}

/// Bounded best-k collector ordered by `(distance, id)`.
pub(crate) struct TopK<'a> {
    k: usize,
    ids: &'a [String],
    /// Sorted ascending; holds squared distances.
    items: Vec<(f64, usize)>,
}

impl<'a> TopK<'a> {
    pub(crate) fn new(k: usize, ids: &'a [String]) -> Self {
        Self {
            k,
            ids,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn less(&self, a: (f64, usize), b: (f64, usize)) -> bool {
        a.0 < b.0 || (a.0 == b.0 && self.ids[a.1] < self.ids[b.1])
    }

    pub(crate) fn offer(&mut self, sq_dist: f64, pos: usize) {
        let cand = (sq_dist, pos);
        if self.items.len() == self.k && !self.less(cand, self.items[self.k - 1]) {
            return;
        }
        let at = self.items.partition_point(|&it| self.less(it, cand));
        self.items.insert(at, cand);
        self.items.truncate(self.k);
    }

    /// Squared distance a candidate must not exceed to matter; `None` until full.
    pub(crate) fn bound(&self) -> Option<f64> {
        (self.items.len() == self.k).then(|| self.items[self.k - 1].0)
    }

    pub(crate) fn into_sorted(self) -> Vec<(f64, usize)> {
        self.items
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Brute,
    Kd(KdTree),
    Ball(BallTree),
}

/// Immutable k-NN structure over the training vectors. Row `i` belongs to
/// report `ids[i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "IndexRepr", into = "IndexRepr")]
pub struct NeighborIndex {
    choice: AlgorithmChoice,
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<SparseVector>,
    positions: HashMap<String, usize>,
    backend: Backend,
}

#[derive(Serialize, Deserialize)]
struct IndexRepr {
    choice: AlgorithmChoice,
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<SparseVector>,
}

impl TryFrom<IndexRepr> for NeighborIndex {
    type Error = Error;

    fn try_from(r: IndexRepr) -> Result<Self> {
        NeighborIndex::with_choice(r.vectors, r.ids, r.choice)
    }
}

impl From<NeighborIndex> for IndexRepr {
    fn from(i: NeighborIndex) -> Self {
        Self {
            choice: i.choice,
            dimension: i.dimension,
            ids: i.ids,
            vectors: i.vectors,
        }
    }
}

impl NeighborIndex {
    /// Builds with `algorithm`, or picks one from the data when `None`.
    pub fn build(
        vectors: Vec<SparseVector>,
        ids: Vec<String>,
        algorithm: Option<Algorithm>,
        thresholds: &SelectionThresholds,
    ) -> Result<Self> {
        let n = vectors.len();
        let d = vectors.first().map_or(0, SparseVector::dimension);
        let choice = match algorithm {
            Some(algorithm) => AlgorithmChoice {
                algorithm,
                rationale: "requested".to_string(),
            },
            None => {
                let nnz: usize = vectors.iter().map(SparseVector::nnz).sum();
                let density = if n * d == 0 {
                    0.0
                } else {
                    nnz as f64 / (n as f64 * d as f64)
                };
                select_algorithm(
                    n.max(1),
                    d.max(1),
                    density < thresholds.sparse_density,
                    1,
                    1,
                    thresholds,
                )
            }
        };
        Self::with_choice(vectors, ids, choice)
    }

    fn with_choice(vectors: Vec<SparseVector>, ids: Vec<String>, choice: AlgorithmChoice) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if vectors.len() != ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} vectors but {} ids",
                vectors.len(),
                ids.len()
            )));
        }
        let dimension = vectors[0].dimension();
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != dimension) {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: bad.dimension(),
            });
        }
        let mut positions = HashMap::with_capacity(ids.len());
        for (pos, id) in ids.iter().enumerate() {
            if positions.insert(id.clone(), pos).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let backend = match choice.algorithm {
            Algorithm::Brute => Backend::Brute,
            Algorithm::KdTree => Backend::Kd(KdTree::build(
                vectors.iter().map(SparseVector::to_dense).collect(),
                LEAF_SIZE,
            )),
            Algorithm::BallTree => Backend::Ball(BallTree::build(
                vectors.iter().map(SparseVector::to_dense).collect(),
                LEAF_SIZE,
            )),
        };
        Ok(Self {
            choice,
            dimension,
            ids,
            vectors,
            positions,
            backend,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.choice.algorithm
    }

    pub fn choice(&self) -> &AlgorithmChoice {
        &self.choice
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&SparseVector> {
        self.positions.get(id).map(|&p| &self.vectors[p])
    }

    /// Depth of the search tree; zero for brute force or a single leaf.
    pub fn depth(&self) -> usize {
        match &self.backend {
            Backend::Brute => 0,
            Backend::Kd(tree) => tree.depth(),
            Backend::Ball(tree) => tree.depth(),
        }
    }

    fn search(&self, query: &SparseVector, k: usize) -> Vec<(f64, usize)> {
        let mut top = TopK::new(k, &self.ids);
        match &self.backend {
            Backend::Brute => {
                for (pos, v) in self.vectors.iter().enumerate() {
                    top.offer(sparse_sq_distance(v.entries(), query.entries()), pos);
                }
            }
            Backend::Kd(tree) => tree.search(&query.to_dense(), &mut top),
            Backend::Ball(tree) => tree.search(&query.to_dense(), &mut top),
        }
        top.into_sorted()
    }

    /// Exact k nearest over the index and the cache, by ascending distance then id.
    pub fn knn_query(&self, cache: &RecentCache, query: &SparseVector, k: usize) -> Result<Vec<Nomination>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".to_string()));
        }
        if query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let mut merged: Vec<(f64, &str)> = self
            .search(query, k)
            .into_iter()
            .map(|(sq, pos)| (sq, self.ids[pos].as_str()))
            .collect();
        for (id, v) in cache.iter() {
            merged.push((sparse_sq_distance(v.entries(), query.entries()), id));
        }
        merged.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        merged.truncate(k);
        Ok(merged
            .into_iter()
            .map(|(sq, id)| Nomination::new(id, sq.sqrt()))
            .collect())
    }
}
