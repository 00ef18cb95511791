use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::kg::{Edge, KnowledgeGraph, NodeKind};

/// Link-prediction metrics, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub auc: f64,
    pub test_edges: usize,
}

impl LpReport {
    /// Values on the 0-100 scale used for tables.
    pub fn percent(&self) -> [f64; 4] {
        [self.mrr, self.hits_at_1, self.hits_at_10, self.auc].map(|v| v * 100.0)
    }
}

/// Corruption candidates grouped by node kind, each list in id order.
#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    by_kind: BTreeMap<NodeKind, Vec<String>>,
}

impl CandidatePool {
    pub fn new<I, S>(nodes: I) -> Self
    where
        I: IntoIterator<Item = (S, NodeKind)>,
        S: Into<String>,
    {
        let mut by_kind: BTreeMap<NodeKind, Vec<String>> = BTreeMap::new();
        for (id, kind) in nodes {
            by_kind.entry(kind).or_default().push(id.into());
        }
        for ids in by_kind.values_mut() {
            ids.sort();
            ids.dedup();
        }
        CandidatePool { by_kind }
    }

    pub fn from_graph(graph: &KnowledgeGraph) -> Self {
        Self::new(graph.nodes().map(|n| (n.id.clone(), n.kind)))
    }

    pub fn of_kind(&self, kind: NodeKind) -> &[String] {
        self.by_kind.get(&kind).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.by_kind.values().all(Vec::is_empty)
    }
}

/// Ranks each test edge's true destination against every type-valid pool
/// node other than the true destination and the source.
///
/// Ties rank pessimistically: the true edge goes after every corruption with
/// an equal score. AUC counts ties as one half. When `train_edges` is given,
/// overlap with the test set is an error.
pub fn eval_link_prediction(
    emb: &EmbeddingTable,
    test_edges: &[Edge],
    pool: &CandidatePool,
    train_edges: Option<&[Edge]>,
) -> Result<LpReport> {
    if test_edges.is_empty() {
        return Err(Error::EmptyInput("no test edges".into()));
    }
    if pool.is_empty() {
        return Err(Error::EmptyInput("empty candidate pool".into()));
    }
    if let Some(train) = train_edges {
        let train: HashSet<&Edge> = train.iter().collect();
        if let Some(e) = test_edges.iter().find(|e| train.contains(e)) {
            return Err(Error::LeakedTestEdge(e.to_string()));
        }
    }
    let (mut rr, mut h1, mut h10, mut auc) = (0.0, 0.0, 0.0, 0.0);
    for edge in test_edges {
        let truth = emb.score_edge(&edge.src, edge.rel, &edge.dst)?;
        let src = emb
            .vector(&edge.src)
            .ok_or_else(|| Error::UnknownNode(edge.src.clone()))?;
        let (mut above, mut equal, mut below) = (0usize, 0usize, 0usize);
        for cand in pool.of_kind(edge.rel.endpoint_kinds().1) {
            if cand == &edge.dst || cand == &edge.src {
                continue;
            }
            let v = emb.vector(cand).ok_or_else(|| Error::UnknownNode(cand.clone()))?;
            let s = emb.score_rows(src, edge.rel, v);
            match s.partial_cmp(&truth) {
                Some(std::cmp::Ordering::Greater) => above += 1,
                Some(std::cmp::Ordering::Less) => below += 1,
                _ => equal += 1,
            }
        }
        let rank = 1 + above + equal;
        rr += 1.0 / rank as f64;
        h1 += f64::from(u8::from(rank <= 1));
        h10 += f64::from(u8::from(rank <= 10));
        let corruptions = above + equal + below;
        auc += if corruptions == 0 {
            1.0
        } else {
            (below as f64 + 0.5 * equal as f64) / corruptions as f64
        };
    }
    let n = test_edges.len() as f64;
    Ok(LpReport {
        mrr: rr / n,
        hits_at_1: h1 / n,
        hits_at_10: h10 / n,
        auc: auc / n,
        test_edges: test_edges.len(),
    })
}

/// Seeded exact partition into `(train, test)` with
/// `|test| == round(fraction * |edges|)`. Both halves keep graph edge order.
pub fn split_edges(graph: &KnowledgeGraph, test_fraction: f64, seed: u64) -> Result<(Vec<Edge>, Vec<Edge>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let edges = graph.edges();
    if edges.is_empty() {
        return Err(Error::EmptyInput("graph has no edges to split".into()));
    }
    let n_test = (test_fraction * edges.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; edges.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = edges.iter().cloned().zip(is_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(e, _)| e).collect(),
        test.into_iter().map(|(e, _)| e).collect(),
    ))
}
