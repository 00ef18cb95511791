use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, InitMode};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, NodeKind};
use crate::vecmath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub ranking_margin: f64,
    pub negatives_per_edge: usize,
    pub rng_seed: u64,
    pub init_mode: InitMode,
}

impl Default for GeTrainConfig {
    fn default() -> Self {
        GeTrainConfig {
            dim: 64,
            epochs: 30,
            learning_rate: 0.1,
            ranking_margin: 0.1,
            negatives_per_edge: 10,
            rng_seed: 0,
            init_mode: InitMode::Random,
        }
    }
}

impl GeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config("dim must be >= 2".into()));
        }
        if self.negatives_per_edge == 0 {
            return Err(Error::Config("negatives_per_edge must be >= 1".into()));
        }
        if !(self.ranking_margin > 0.0) {
            return Err(Error::Config("ranking_margin must be > 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Loss and gradients of `sum_j max(0, margin - cos(s + r, d) + cos(s + r, n_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingGrad {
    pub loss: f64,
    pub src: Vec<f64>,
    pub rel: Vec<f64>,
    pub dst: Vec<f64>,
    pub negs: Vec<Vec<f64>>,
}

pub fn ranking_loss_grad(src: &[f64], rel: &[f64], dst: &[f64], negs: &[&[f64]], margin: f64) -> RankingGrad {
    let dim = src.len();
    let u: Vec<f64> = src.iter().zip(rel).map(|(a, b)| a + b).collect();
    let mut out = RankingGrad {
        loss: 0.0,
        src: vec![0.0; dim],
        rel: vec![0.0; dim],
        dst: vec![0.0; dim],
        negs: vec![vec![0.0; dim]; negs.len()],
    };
    let degenerate = |v: &[f64]| vecmath::norm(v) == 0.0;
    if degenerate(&u) || degenerate(dst) {
        // Scores are 0 by convention and carry no gradient.
        for neg in negs {
            let s_neg = if degenerate(neg) { 0.0 } else { vecmath::cosine(&u, neg) };
            out.loss += (margin + s_neg).max(0.0);
        }
        return out;
    }
    let (s_pos, gu_pos, gd_pos) = vecmath::cosine_grad(&u, dst);
    let mut gu = vec![0.0; dim];
    for (j, neg) in negs.iter().enumerate() {
        if degenerate(neg) {
            let l = margin - s_pos;
            if l > 0.0 {
                out.loss += l;
                vecmath::add_scaled(&mut gu, &gu_pos, -1.0);
                vecmath::add_scaled(&mut out.dst, &gd_pos, -1.0);
            }
            continue;
        }
        let (s_neg, gu_neg, gn) = vecmath::cosine_grad(&u, neg);
        let l = margin - s_pos + s_neg;
        if l > 0.0 {
            out.loss += l;
            vecmath::add_scaled(&mut gu, &gu_pos, -1.0);
            vecmath::add_scaled(&mut gu, &gu_neg, 1.0);
            vecmath::add_scaled(&mut out.dst, &gd_pos, -1.0);
            out.negs[j] = gn;
        }
    }
    out.src.clone_from(&gu);
    out.rel = gu;
    out
}

/// Margin-ranking SGD over the graph's edges.
///
/// Each epoch visits edges in a seeded shuffle and corrupts the destination
/// with `negatives_per_edge` nodes of the kind the relation requires,
/// excluding the source and its true neighbours. `epochs == 0` returns the
/// input unchanged.
pub fn train_graph_embeddings(
    graph: &KnowledgeGraph,
    emb: &EmbeddingTable,
    cfg: &GeTrainConfig,
) -> Result<EmbeddingTable> {
    cfg.validate()?;
    if graph.node_count() == 0 {
        return Err(Error::EmptyInput("graph has no nodes".into()));
    }
    if graph.edge_count() == 0 {
        return Err(Error::EmptyInput("graph has no edges".into()));
    }
    if emb.dim() != cfg.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim,
            actual: emb.dim(),
        });
    }
    let mut out = emb.clone();
    if cfg.epochs == 0 {
        return Ok(out);
    }

    let row = |id: &str| out_row(emb, id);
    let mut by_kind: HashMap<NodeKind, Vec<usize>> = HashMap::new();
    for n in graph.nodes() {
        by_kind.entry(n.kind).or_default().push(row(&n.id)?);
    }
    let mut edges = Vec::with_capacity(graph.edge_count());
    let mut neighbors: HashMap<(usize, usize), HashSet<usize>> = HashMap::new();
    for e in graph.edges() {
        let (s, d) = (row(&e.src)?, row(&e.dst)?);
        neighbors.entry((s, e.rel.index())).or_default().insert(d);
        edges.push((s, e.rel, d));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x6765_5f74_7261_696e);
    let lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        edges.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &(s, rel, d) in &edges {
            let pool = &by_kind[&rel.endpoint_kinds().1];
            let excluded = &neighbors[&(s, rel.index())];
            let mut negs = Vec::with_capacity(cfg.negatives_per_edge);
            for _ in 0..cfg.negatives_per_edge {
                for _ in 0..64 {
                    let c = pool[rng.gen_range(0..pool.len())];
                    if c != s && !excluded.contains(&c) {
                        negs.push(c);
                        break;
                    }
                }
            }
            if negs.is_empty() {
                continue;
            }
            let neg_rows: Vec<Vec<f64>> = negs.iter().map(|&n| out.row(n).to_vec()).collect();
            let neg_refs: Vec<&[f64]> = neg_rows.iter().map(Vec::as_slice).collect();
            let g = ranking_loss_grad(out.row(s), out.relation(rel), out.row(d), &neg_refs, cfg.ranking_margin);
            if !g.loss.is_finite() {
                return Err(Error::NonFinite(format!("graph embedding loss at epoch {epoch}")));
            }
            epoch_loss += g.loss;
            if g.loss == 0.0 {
                continue;
            }
            vecmath::add_scaled(out.row_mut(s), &g.src, -lr);
            vecmath::add_scaled(out.relation_mut(rel), &g.rel, -lr);
            vecmath::add_scaled(out.row_mut(d), &g.dst, -lr);
            for (&n, gn) in negs.iter().zip(&g.negs) {
                vecmath::add_scaled(out.row_mut(n), gn, -lr);
            }
        }
        log::debug!("ge epoch {epoch}: loss {:.4}", epoch_loss / edges.len() as f64);
    }
    if !out.all_finite() {
        return Err(Error::NonFinite("graph embedding table after training".into()));
    }
    Ok(out)
}

fn out_row(emb: &EmbeddingTable, id: &str) -> Result<usize> {
    emb.row_of(id).ok_or_else(|| Error::MissingVector(id.to_string()))
}
