use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::NeighborIndex;
use crate::error::{Error, Result};
use crate::vectorize::SparseVector;

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

/// Recently submitted uniques, searched brute-force next to the index.
/// Oldest entries are evicted first once `capacity` is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecentCache {
    capacity: usize,
    entries: VecDeque<(String, SparseVector)>,
}

impl Default for RecentCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl RecentCache {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.iter().any(|(cached, _)| cached == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SparseVector)> {
        self.entries.iter().map(|(id, v)| (id.as_str(), v))
    }

    /// Appends `id`; returns the evicted id when the cache was full.
    pub fn add(
        &mut self,
        index: &NeighborIndex,
        id: impl Into<String>,
        vector: SparseVector,
    ) -> Result<Option<String>> {
        let id = id.into();
        if index.contains(&id) || self.contains(&id) {
            return Err(Error::AlreadyPresent(id));
        }
        if vector.dimension() != index.dimension() {
            return Err(Error::DimensionMismatch {
                expected: index.dimension(),
                actual: vector.dimension(),
            });
        }
        self.entries.push_back((id, vector));
        Ok(if self.entries.len() > self.capacity {
            self.entries.pop_front().map(|(evicted, _)| evicted)
        } else {
            None
        })
    }

    /// Drops entries that collide with the index or do not match its dimension,
    /// e.g. after loading a cache saved against an older index.
    pub fn retain_compatible(&mut self, index: &NeighborIndex) {
        self.entries
            .retain(|(id, v)| !index.contains(id) && v.dimension() == index.dimension());
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }
}
