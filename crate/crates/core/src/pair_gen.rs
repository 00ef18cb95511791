//! Query-document pairs for bi-encoder training: extractive query
//! generation, GE triplets turned into pairs, score-based filtering and
//! dataset composition.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::triplets::TripletSet;
use crate::{jsonl, text, vecmath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Negative,
    Positive,
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "SID")]
    Sid,
    #[serde(rename = "DRMM")]
    Drmm,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Get => "GET",
            Source::Sid => "SID",
            Source::Drmm => "DRMM",
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDocPair {
    pub query: String,
    pub doc_id: String,
    pub label: Label,
    pub source: Source,
}

pub fn read_pairs(path: &Path) -> Result<Vec<QueryDocPair>> {
    let pairs: Vec<QueryDocPair> = jsonl::read(path)?;
    for (i, p) in pairs.iter().enumerate() {
        if p.query.trim().is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty query".into(),
            });
        }
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[QueryDocPair]) -> Result<()> {
    jsonl::write(path, pairs)
}

/// Document frequencies over a corpus, for smoothed idf
/// `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn from_texts<S: AsRef<str>>(texts: impl IntoIterator<Item = S>) -> Self {
        let mut stats = CorpusStats::default();
        for t in texts {
            stats.n_docs += 1;
            let uniq: HashSet<String> = text::words(t.as_ref()).into_iter().collect();
            for w in uniq {
                *stats.df.entry(w).or_default() += 1;
            }
        }
        stats
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df(term) as f64)).ln() + 1.0
    }
}

/// The `m` highest TF-IDF terms of `doc`, ties by first occurrence.
pub fn generate_query(doc: &str, m: usize, stats: &CorpusStats) -> Result<String> {
    if m == 0 {
        return Err(Error::Config("query length m must be >= 1".into()));
    }
    let words = text::words(doc);
    if words.is_empty() {
        return Err(Error::EmptyInput("document has no terms".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for w in &words {
        let c = tf.entry(w).or_default();
        if *c == 0 {
            order.push(w);
        }
        *c += 1;
    }
    let mut scored: Vec<(f64, &str)> = order.iter().map(|w| (tf[w] as f64 * stats.idf(w), *w)).collect();
    // stable sort keeps first-occurrence order among equal scores
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(scored.iter().take(m).map(|s| s.1).collect::<Vec<_>>().join(" "))
}

/// GET pairs: the generated query of each query document is positive for
/// that document and negative for every other document in its triplets.
/// Output is ordered by (query doc id, label desc, doc id).
pub fn triplets_to_pairs(set: &TripletSet, queries: &HashMap<String, String>) -> Result<Vec<QueryDocPair>> {
    let mut out = Vec::new();
    for (qid, triplets) in set.by_query() {
        let query = queries
            .get(qid)
            .ok_or_else(|| Error::UnknownNode(format!("no generated query for {qid}")))?;
        out.push(QueryDocPair {
            query: query.clone(),
            doc_id: qid.to_string(),
            label: Label::Positive,
            source: Source::Get,
        });
        let negatives: BTreeSet<&str> = triplets
            .iter()
            .flat_map(|t| [t.pos_id.as_str(), t.neg_id.as_str()])
            .filter(|d| *d != qid)
            .collect();
        out.extend(negatives.into_iter().map(|d| QueryDocPair {
            query: query.clone(),
            doc_id: d.to_string(),
            label: Label::Negative,
            source: Source::Get,
        }));
    }
    Ok(out)
}

/// Scores a (query-or-document, document) text pair.
pub trait PairScorer: Sync {
    fn score(&self, a: &str, b: &str) -> f64;

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Vec<f64> {
        pairs.par_iter().map(|(a, b)| self.score(a, b)).collect()
    }
}

/// Frozen-encoder cosine times 10, so scores live in [-10, 10] like the
/// cross-encoder scale the default thresholds were chosen for.
pub struct EncoderScorer<'a> {
    params: &'a EncoderParams,
}

pub const ENCODER_SCORE_SCALE: f64 = 10.0;

impl<'a> EncoderScorer<'a> {
    pub fn new(params: &'a EncoderParams) -> Self {
        Self { params }
    }
}

impl PairScorer for EncoderScorer<'_> {
    fn score(&self, a: &str, b: &str) -> f64 {
        ENCODER_SCORE_SCALE * vecmath::cosine(&self.params.encode(a), &self.params.encode(b))
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Vec<f64> {
        let uniq: Vec<&str> = pairs
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let vecs: HashMap<&str, Vec<f64>> = uniq.iter().copied().zip(self.params.encode_batch(&uniq)).collect();
        pairs
            .iter()
            .map(|(a, b)| ENCODER_SCORE_SCALE * vecmath::cosine(&vecs[a], &vecs[b]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub t_pos: f64,
    pub t_margin: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            t_pos: 5.0,
            t_margin: 3.0,
        }
    }
}

/// Keeps a triplet iff `s(q, pos) >= t_pos` and `s(q, pos) - s(q, neg) >= t_margin`.
pub fn quality_filter(
    set: &TripletSet,
    texts: &HashMap<String, String>,
    scorer: &dyn PairScorer,
    th: FilterThresholds,
) -> Result<TripletSet> {
    let lookup = |id: &str| {
        texts
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownNode(id.to_string()))
    };
    let mut pairs = Vec::with_capacity(set.len() * 2);
    for t in &set.triplets {
        let q = lookup(&t.query_id)?;
        pairs.push((q, lookup(&t.pos_id)?));
        pairs.push((q, lookup(&t.neg_id)?));
    }
    let scores = scorer.score_batch(&pairs);
    let triplets = set
        .triplets
        .iter()
        .zip(scores.chunks(2))
        .filter(|(_, s)| s[0] >= th.t_pos && s[0] - s[1] >= th.t_margin)
        .map(|(t, _)| t.clone())
        .collect();
    Ok(TripletSet {
        triplets,
        provenance: set.provenance.clone(),
        skipped: set.skipped,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
}

impl LabelCounts {
    fn add(&mut self, label: Label) {
        self.total += 1;
        match label {
            Label::Positive => self.positive += 1,
            Label::Negative => self.negative += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub per_source: BTreeMap<Source, LabelCounts>,
    pub overall: LabelCounts,
    /// Rows whose (query, doc) already appeared in an earlier component.
    pub overlap: usize,
}

/// Concatenates components in order, keeping every row and its source tag.
pub fn compose_pairs(components: Vec<Vec<QueryDocPair>>) -> (Vec<QueryDocPair>, CompositionReport) {
    let mut report = CompositionReport::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::new();
    for component in components {
        let mut local = Vec::new();
        for p in component {
            report.per_source.entry(p.source).or_default().add(p.label);
            report.overall.add(p.label);
            let key = (p.query.clone(), p.doc_id.clone());
            if seen.contains(&key) {
                report.overlap += 1;
            }
            local.push(key);
            out.push(p);
        }
        seen.extend(local);
    }
    (out, report)
}

pub fn compose_dataset(paths: &[PathBuf]) -> Result<(Vec<QueryDocPair>, CompositionReport)> {
    let components = paths.iter().map(|p| read_pairs(p)).collect::<Result<Vec<_>>>()?;
    Ok(compose_pairs(components))
}
