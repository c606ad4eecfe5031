//! Exact per-class nearest-neighbour search over CAD view embeddings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::similarity::{dot, normalized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingTag {
    ImageRegion,
    ObjectView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub tag: EmbeddingTag,
    pub class_id: u32,
    pub object_id: u32,
    pub view_id: u32,
}

/// A retrieval hit: object identity and its best cosine similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub object_id: u32,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    unit: Vec<f64>,
    object_id: u32,
    view_id: u32,
}

/// Immutable index of L2-normalised object views, partitioned by class.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    classes: BTreeMap<u32, Vec<Entry>>,
}

impl EmbeddingIndex {
    pub fn build(entries: &[EmbeddingVector]) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::domain("cannot build an empty embedding index"))?;
        let dim = first.values.len();
        let mut seen = HashSet::new();
        let mut classes: BTreeMap<u32, Vec<Entry>> = BTreeMap::new();
        for e in entries {
            if e.tag != EmbeddingTag::ObjectView {
                return Err(Error::domain("index entries must be object views"));
            }
            if e.values.len() != dim {
                return Err(Error::domain(format!(
                    "embedding dimension {} differs from {dim}",
                    e.values.len()
                )));
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite embedding entry"));
            }
            if !seen.insert((e.object_id, e.view_id)) {
                return Err(Error::domain(format!(
                    "duplicate view ({}, {}) in index",
                    e.object_id, e.view_id
                )));
            }
            classes.entry(e.class_id).or_default().push(Entry {
                unit: normalized(&e.values)?,
                object_id: e.object_id,
                view_id: e.view_id,
            });
        }
        for list in classes.values_mut() {
            list.sort_by_key(|e| (e.object_id, e.view_id));
        }
        Ok(Self { dim, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.classes.keys().copied()
    }

    /// Objects of `class_id` ranked by their best view similarity to `query`,
    /// descending, ties to the lower object id.
    pub fn ranked(&self, query: &[f64], class_id: u32) -> Result<Vec<Hit>> {
        let list = self
            .classes
            .get(&class_id)
            .ok_or_else(|| Error::lookup(format!("no index entries for class {class_id}")))?;
        if query.len() != self.dim {
            return Err(Error::domain(format!(
                "query dimension {} differs from index dimension {}",
                query.len(),
                self.dim
            )));
        }
        let q = normalized(query)?;
        let mut best: BTreeMap<u32, f64> = BTreeMap::new();
        for e in list {
            let s = dot(&q, &e.unit);
            let slot = best.entry(e.object_id).or_insert(f64::NEG_INFINITY);
            if s > *slot {
                *slot = s;
            }
        }
        let mut hits: Vec<Hit> = best
            .into_iter()
            .map(|(object_id, similarity)| Hit { object_id, similarity })
            .collect();
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .unwrap_or(Ordering::Equal)
                .then(a.object_id.cmp(&b.object_id))
        });
        Ok(hits)
    }

    pub fn retrieve_scored(&self, query: &[f64], class_id: u32, n_k: usize) -> Result<Vec<Hit>> {
        let mut hits = self.ranked(query, class_id)?;
        hits.truncate(n_k);
        Ok(hits)
    }

    /// Top `n_k` object ids for `query` within `class_id`.
    pub fn retrieve(&self, query: &[f64], class_id: u32, n_k: usize) -> Result<Vec<u32>> {
        Ok(self
            .retrieve_scored(query, class_id, n_k)?
            .into_iter()
            .map(|h| h.object_id)
            .collect())
    }

    /// Number of stored views for `(object_id, view_id)` pairs in a class.
    pub fn views_in_class(&self, class_id: u32) -> usize {
        self.classes.get(&class_id).map_or(0, Vec::len)
    }

    pub fn contains(&self, object_id: u32, view_id: u32) -> bool {
        self.classes
            .values()
            .any(|l| l.iter().any(|e| e.object_id == object_id && e.view_id == view_id))
    }
}
