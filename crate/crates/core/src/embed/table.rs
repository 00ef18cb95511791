use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeTrainConfig;
use crate::error::{Error, Result};
use crate::gemb;
use crate::kg::{KnowledgeGraph, Relation};
use crate::vecmath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Random,
    TextVectors,
}

/// Per-node vectors plus one translation vector per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    node_ids: Vec<String>,
    rows: HashMap<String, usize>,
    vectors: Vec<f64>,
    relations: [Vec<f64>; 3],
}

impl EmbeddingTable {
    pub fn from_rows(dim: usize, node_ids: Vec<String>, vectors: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("embedding dim must be >= 2, got {dim}")));
        }
        if vectors.len() != node_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: node_ids.len() * dim,
                actual: vectors.len(),
            });
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding row {}", i / dim)));
        }
        let mut rows = HashMap::with_capacity(node_ids.len());
        for (i, id) in node_ids.iter().enumerate() {
            if rows.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateNode(id.clone()));
            }
        }
        Ok(EmbeddingTable {
            dim,
            node_ids,
            rows,
            vectors,
            relations: [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows.get(id).copied()
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.row_of(id).map(|r| self.row(r))
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub fn relation(&self, rel: Relation) -> &[f64] {
        &self.relations[rel.index()]
    }

    pub fn set_relation(&mut self, rel: Relation, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        self.relations[rel.index()] = v;
        Ok(())
    }

    pub(crate) fn relation_mut(&mut self, rel: Relation) -> &mut [f64] {
        &mut self.relations[rel.index()]
    }

    pub fn values(&self) -> &[f64] {
        &self.vectors
    }

    pub fn all_finite(&self) -> bool {
        self.vectors.iter().chain(self.relations.iter().flatten()).all(|v| v.is_finite())
    }

    /// `cos(src + r, dst)`; zero vectors score 0.
    pub fn score_edge(&self, src: &str, rel: Relation, dst: &str) -> Result<f64> {
        let s = self.vector(src).ok_or_else(|| Error::UnknownNode(src.to_string()))?;
        let d = self.vector(dst).ok_or_else(|| Error::UnknownNode(dst.to_string()))?;
        Ok(self.score_rows(s, rel, d))
    }

    pub(crate) fn score_rows(&self, src: &[f64], rel: Relation, dst: &[f64]) -> f64 {
        let translated: Vec<f64> = src.iter().zip(self.relation(rel)).map(|(a, b)| a + b).collect();
        vecmath::cosine(&translated, dst)
    }

    /// Writes `ids.jsonl`, `vectors.gemb` and `relations.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        gemb::write_named(
            &dir.join("ids.jsonl"),
            &dir.join("vectors.gemb"),
            &self.node_ids,
            self.dim,
            &self.vectors,
        )?;
        let rel: BTreeMap<String, Vec<f32>> = Relation::ALL
            .iter()
            .map(|&r| (r.to_string(), self.relation(r).iter().map(|&v| v as f32).collect()))
            .collect();
        let json = serde_json::to_vec_pretty(&rel).map_err(|e| Error::Format(e.to_string()))?;
        let path = dir.join("relations.json");
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (ids, dim, values) = gemb::read_named(&dir.join("ids.jsonl"), &dir.join("vectors.gemb"))?;
        let mut table = Self::from_rows(dim, ids, values)?;
        let path = dir.join("relations.json");
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let rel: BTreeMap<String, Vec<f32>> =
            serde_json::from_slice(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for r in Relation::ALL {
            if let Some(v) = rel.get(&r.to_string()) {
                table.set_relation(r, v.iter().map(|&x| x as f64).collect())?;
            }
        }
        Ok(table)
    }
}

/// Initial table over the graph's nodes in id order.
///
/// `Random`: i.i.d. uniform in `[-1/dim, 1/dim]` from `cfg.rng_seed`.
/// `TextVectors`: rows copied from `text_vectors`, which must cover every
/// node at `cfg.dim`. Relation translations start at zero in both modes.
pub fn init_embeddings(
    graph: &KnowledgeGraph,
    cfg: &GeTrainConfig,
    text_vectors: Option<&HashMap<String, Vec<f64>>>,
) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let ids: Vec<String> = graph.nodes().map(|n| n.id.clone()).collect();
    let dim = cfg.dim;
    let mut values = Vec::with_capacity(ids.len() * dim);
    match cfg.init_mode {
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let bound = 1.0 / dim as f64;
            values.extend((0..ids.len() * dim).map(|_| rng.gen_range(-bound..=bound)));
        }
        InitMode::TextVectors => {
            let tv = text_vectors.ok_or_else(|| Error::Config("text_vectors init without vectors".into()))?;
            for id in &ids {
                let v = tv.get(id).ok_or_else(|| Error::MissingVector(id.clone()))?;
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                values.extend_from_slice(v);
            }
        }
    }
    EmbeddingTable::from_rows(dim, ids, values)
}
