//! Document triplets from the graph-embedding neighbourhood: kNN band
//! sampling for positives and hard negatives, filtered random sampling for
//! easy negatives.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann::FlatIndex;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::kg::{KnowledgeGraph, NodeKind};
use crate::text::char_len;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub k_pos: usize,
    pub c_pos: usize,
    pub k_hard: usize,
    pub c_hard: usize,
    pub c_easy: usize,
    /// Minimum log length in Unicode scalar values.
    pub min_text_chars: usize,
    pub rng_seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            k_pos: 2,
            c_pos: 2,
            k_hard: 50,
            c_hard: 1,
            c_easy: 1,
            min_text_chars: 100,
            rng_seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.c_pos == 0 || self.c_pos > self.k_pos {
            return fail("need 1 <= c_pos <= k_pos");
        }
        if self.c_hard == 0 || self.c_hard > self.k_hard {
            return fail("need 1 <= c_hard <= k_hard");
        }
        if self.k_hard <= self.k_pos {
            return fail("need k_hard > k_pos");
        }
        if self.k_hard - self.c_hard < self.k_pos {
            return fail("hard-negative band overlaps the positive band");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegKind {
    Easy,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    #[serde(rename = "q")]
    pub query_id: String,
    #[serde(rename = "pos")]
    pub pos_id: String,
    #[serde(rename = "neg")]
    pub neg_id: String,
    pub neg_kind: NegKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub params: SamplingParams,
    pub index_fingerprint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub provenance: Option<Provenance>,
    /// Eligible queries that produced no triplets.
    pub skipped: usize,
}

impl TripletSet {
    pub fn from_triplets(triplets: Vec<Triplet>) -> Self {
        TripletSet {
            triplets,
            provenance: None,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Triplets grouped by query id, in query-id order.
    pub fn by_query(&self) -> BTreeMap<&str, Vec<&Triplet>> {
        let mut out: BTreeMap<&str, Vec<&Triplet>> = BTreeMap::new();
        for t in &self.triplets {
            out.entry(&t.query_id).or_default().push(t);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.triplets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_triplets(jsonl::read(path)?))
    }
}

/// Entries at 1-based neighbour positions `k-c+1 ..= k`, order preserved.
pub fn band_sample<T: Clone>(neighbors: &[T], k: usize, c: usize) -> Result<Vec<T>> {
    if c == 0 || c > k {
        return Err(Error::Config(format!("band needs 1 <= c <= k, got c={c}, k={k}")));
    }
    if neighbors.len() < k {
        return Err(Error::InsufficientCandidates {
            needed: k,
            available: neighbors.len(),
        });
    }
    Ok(neighbors[k - c..k].to_vec())
}

/// `c` distinct ids drawn uniformly without replacement from
/// `corpus \ excluded`.
pub fn filtered_random_sample<R: Rng + ?Sized>(
    corpus: &[String],
    excluded: &HashSet<&str>,
    c: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    let support: Vec<&String> = corpus.iter().filter(|id| !excluded.contains(id.as_str())).collect();
    if support.len() < c {
        return Err(Error::InsufficientCandidates {
            needed: c,
            available: support.len(),
        });
    }
    Ok(support.choose_multiple(rng, c).map(|s| (*s).clone()).collect())
}

/// Samples triplets for every eligible text log of `index`.
///
/// Eligibility is the minimum text length; ineligible logs are removed from
/// the index before any kNN query. Each query emits one triplet per sampled
/// negative (easy negatives first, then hard), cycling through the positive
/// band. Queries with fewer than `k_hard` eligible neighbours are skipped.
pub fn sample_triplets(index: &FlatIndex, graph: &KnowledgeGraph, params: &SamplingParams) -> Result<TripletSet> {
    params.validate()?;
    let mut eligible = BTreeSet::new();
    for id in index.ids() {
        let node = graph.node(id).ok_or_else(|| Error::UnknownNode(id.clone()))?;
        if node.kind != NodeKind::TextLog {
            return Err(Error::NotATextLog(id.clone()));
        }
        if char_len(&node.text) >= params.min_text_chars {
            eligible.insert(id.clone());
        }
    }
    let provenance = Some(Provenance {
        params: params.clone(),
        index_fingerprint: index.fingerprint(),
    });
    if eligible.is_empty() {
        return Ok(TripletSet {
            triplets: Vec::new(),
            provenance,
            skipped: index.len(),
        });
    }
    let skipped_short = index.len() - eligible.len();
    let sub = index.subset(&eligible)?;
    let corpus: Vec<String> = eligible.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut triplets = Vec::new();
    let mut skipped = skipped_short;

    for query in &corpus {
        if sub.len() <= params.k_hard {
            skipped += 1;
            continue;
        }
        let neighbors: Vec<String> = sub.knn(query, params.k_hard)?.into_iter().map(|n| n.id).collect();
        let positives = band_sample(&neighbors, params.k_pos, params.c_pos)?;
        let hard = band_sample(&neighbors, params.k_hard, params.c_hard)?;
        let mut excluded: HashSet<&str> = neighbors.iter().map(String::as_str).collect();
        excluded.insert(query);
        let easy = match filtered_random_sample(&corpus, &excluded, params.c_easy, &mut rng) {
            Ok(e) => e,
            Err(Error::InsufficientCandidates { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let negatives = easy
            .into_iter()
            .map(|n| (n, NegKind::Easy))
            .chain(hard.into_iter().map(|n| (n, NegKind::Hard)));
        for (i, (neg_id, neg_kind)) in negatives.enumerate() {
            triplets.push(Triplet {
                query_id: query.clone(),
                pos_id: positives[i % positives.len()].clone(),
                neg_id,
                neg_kind,
            });
        }
    }
    Ok(TripletSet {
        triplets,
        provenance,
        skipped,
    })
}
