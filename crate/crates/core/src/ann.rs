//! Exact flat index: inner product over L2-normalized rows.

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::vecmath;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<String>,
    rows: HashMap<String, usize>,
    matrix: Vec<f64>,
    degenerate: Vec<bool>,
}

/// One kNN hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub cosine: f64,
}

impl FlatIndex {
    /// Indexes `eligible` (a subset of the table's ids) in id order. Zero
    /// vectors are kept as zero rows and flagged.
    pub fn build(emb: &EmbeddingTable, eligible: &BTreeSet<String>) -> Result<Self> {
        Self::from_vectors(
            emb.dim(),
            eligible.iter().map(|id| {
                emb.vector(id)
                    .map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::UnknownNode(id.clone()))
            }),
        )
    }

    pub fn from_vectors<'a, I>(dim: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<(String, &'a [f64])>>,
    {
        let mut index = FlatIndex {
            dim,
            ids: Vec::new(),
            rows: HashMap::new(),
            matrix: Vec::new(),
            degenerate: Vec::new(),
        };
        for item in items {
            let (id, v) = item?;
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if index.rows.insert(id.clone(), index.ids.len()).is_some() {
                return Err(Error::DuplicateNode(id));
            }
            match vecmath::normalized(v) {
                Some(n) => {
                    index.matrix.extend(n);
                    index.degenerate.push(false);
                }
                None => {
                    index.matrix.extend(std::iter::repeat_n(0.0, dim));
                    index.degenerate.push(true);
                }
            }
            index.ids.push(id);
        }
        if index.ids.is_empty() {
            return Err(Error::EmptyInput("no eligible ids to index".into()));
        }
        Ok(index)
    }

    /// Index restricted to `keep`, preserving the normalized rows.
    pub fn subset(&self, keep: &BTreeSet<String>) -> Result<Self> {
        let dim = self.dim;
        Self::from_vectors(
            dim,
            keep.iter().map(|id| {
                self.row_of(id)
                    .map(|r| (id.clone(), &self.matrix[r * dim..(r + 1) * dim]))
                    .ok_or_else(|| Error::UnknownNode(id.clone()))
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows.get(id).copied()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.matrix[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_degenerate(&self, id: &str) -> Option<bool> {
        self.row_of(id).map(|r| self.degenerate[r])
    }

    /// The `k` nearest other entries by cosine, descending, ties by
    /// ascending id. The query itself is never returned.
    pub fn knn(&self, query_id: &str, k: usize) -> Result<Vec<Neighbor>> {
        let q = self
            .row_of(query_id)
            .ok_or_else(|| Error::UnknownNode(query_id.to_string()))?;
        if k == 0 || k >= self.len() {
            return Err(Error::InsufficientCandidates {
                needed: k.max(1),
                available: self.len() - 1,
            });
        }
        let query = self.row(q);
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&r| r != q)
            .map(|r| (vecmath::dot(query, self.row(r)), r))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.total_cmp(&a.0).then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored
            .into_iter()
            .map(|(cosine, r)| Neighbor {
                id: self.ids[r].clone(),
                cosine,
            })
            .collect())
    }

    /// SHA-256 over ids and row bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (i, id) in self.ids.iter().enumerate() {
            h.update(id.as_bytes());
            h.update([0]);
            for v in self.row(i) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
