//! Retrieval evaluation: MAP@10, MRR@10 and nDCG@10 per plant, macro-averaged
//! over plants.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::{jsonl, vecmath};

pub const DEFAULT_K: usize = 10;
pub const AP_NORMALIZER: &str = "min(|relevant|, k)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub plant: String,
}

/// query id -> doc id -> grade
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub plant_id: String,
    pub corpus: BTreeMap<String, String>,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    /// Plants whose logs feed training; the others are held out.
    pub training: bool,
}

impl Plant {
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::EmptyInput(format!("plant {} has no queries", self.plant_id)));
        }
        for q in &self.queries {
            let rels = self
                .qrels
                .get(&q.query_id)
                .ok_or_else(|| Error::InvalidNode { id: q.query_id.clone(), reason: "query has no qrels".into() })?;
            if !rels.values().any(|&g| g > 0) {
                return Err(Error::InvalidNode { id: q.query_id.clone(), reason: "query has no relevant doc".into() });
            }
        }
        for (qid, rels) in &self.qrels {
            if let Some(doc) = rels.keys().find(|d| !self.corpus.contains_key(*d)) {
                return Err(Error::InvalidNode {
                    id: qid.clone(),
                    reason: format!("qrel doc {doc} not in corpus of plant {}", self.plant_id),
                });
            }
        }
        Ok(())
    }

    pub fn relevant(&self, query_id: &str) -> HashSet<String> {
        self.qrels
            .get(query_id)
            .map(|r| r.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d.clone()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Benchmark {
    pub plants: Vec<Plant>,
}

impl Benchmark {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.plants {
            if !seen.insert(&p.plant_id) {
                return Err(Error::IdCollision(format!("plant {}", p.plant_id)));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn plant(&self, id: &str) -> Option<&Plant> {
        self.plants.iter().find(|p| p.plant_id == id)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("cutoff k must be >= 1".into()));
    }
    Ok(())
}

/// Doc ids by descending cosine to the query, ties by ascending id.
pub fn rank_corpus(p: &EncoderParams, query: &str, corpus: &BTreeMap<String, String>) -> Vec<String> {
    let ids: Vec<&String> = corpus.keys().collect();
    let texts: Vec<&str> = corpus.values().map(String::as_str).collect();
    rank_vectors(&p.encode(query), &ids, &p.encode_batch(&texts))
}

fn rank_vectors(q: &[f64], ids: &[&String], docs: &[Vec<f64>]) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = docs.iter().zip(ids).map(|(d, id)| (vecmath::cosine(q, d), *id)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.clone()).collect()
}

pub fn ap_at_k<S: AsRef<str>>(ranked: &[S], relevant: &HashSet<String>, k: usize) -> Result<f64> {
    check_k(k)?;
    if relevant.is_empty() {
        return Err(Error::EmptyInput("relevant set is empty".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().take(k).enumerate() {
        if relevant.contains(d.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len().min(k) as f64)
}

pub fn rr_at_k<S: AsRef<str>>(ranked: &[S], relevant: &HashSet<String>, k: usize) -> Result<f64> {
    check_k(k)?;
    if relevant.is_empty() {
        return Err(Error::EmptyInput("relevant set is empty".into()));
    }
    Ok(ranked
        .iter()
        .take(k)
        .position(|d| relevant.contains(d.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// Linear-gain nDCG; 0 when no doc has a positive grade.
pub fn ndcg_at_k<S: AsRef<str>>(ranked: &[S], grades: &HashMap<String, u32>, k: usize) -> Result<f64> {
    check_k(k)?;
    let disc = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| f64::from(grades.get(d.as_ref()).copied().unwrap_or(0)) * disc(i))
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| f64::from(g) * disc(i)).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map10: f64,
    pub mrr10: f64,
    pub ndcg10: f64,
}

impl Metrics {
    /// Arithmetic mean of the three metrics.
    pub fn mean(&self) -> f64 {
        (self.map10 + self.mrr10 + self.ndcg10) / 3.0
    }

    fn average<'a>(items: impl ExactSizeIterator<Item = &'a Metrics>) -> Metrics {
        let n = items.len().max(1) as f64;
        let mut m = Metrics::default();
        for x in items {
            m.map10 += x.map10;
            m.mrr10 += x.mrr10;
            m.ndcg10 += x.ndcg10;
        }
        Metrics {
            map10: m.map10 / n,
            mrr10: m.mrr10 / n,
            ndcg10: m.ndcg10 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantScores {
    pub plant_id: String,
    pub training: bool,
    pub n_queries: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub ap_normalizer: String,
    pub plants: Vec<PlantScores>,
    /// Unweighted mean over plants.
    pub mean: Metrics,
    /// Mean of the three entries of `mean`.
    pub overall: f64,
}

impl EvalReport {
    /// Aligned text table, values ×100.
    pub fn to_table(&self) -> String {
        let mut s = format!("# k={}, AP normalizer {}\n", self.k, self.ap_normalizer);
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8} {:>8}", "plant", "MAP@10", "MRR@10", "nDCG@10", "Mean");
        let row = |s: &mut String, name: &str, m: &Metrics| {
            let _ = writeln!(
                s,
                "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                name,
                100.0 * m.map10,
                100.0 * m.mrr10,
                100.0 * m.ndcg10,
                100.0 * m.mean()
            );
        };
        for p in &self.plants {
            let name = if p.training { p.plant_id.clone() } else { format!("{}*", p.plant_id) };
            row(&mut s, &name, &p.metrics);
        }
        row(&mut s, "mean", &self.mean);
        s.push_str("* held out from training\n");
        s
    }
}

/// One row per labelled report, values ×100.
pub fn comparison_table(rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
    let mut s = format!("{:<width$} {:>8} {:>8} {:>8} {:>8}\n", "model", "MAP@10", "MRR@10", "nDCG@10", "Mean");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{:<width$} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            label,
            100.0 * r.mean.map10,
            100.0 * r.mean.mrr10,
            100.0 * r.mean.ndcg10,
            100.0 * r.overall
        );
    }
    s
}

/// Evaluates externally produced rankings: `rank(plant, query)` returns doc
/// ids best first.
pub fn evaluate_rankings<F>(b: &Benchmark, k: usize, rank: F) -> Result<EvalReport>
where
    F: Fn(&Plant, &Query) -> Vec<String> + Sync,
{
    check_k(k)?;
    b.validate()?;
    let mut plants = Vec::with_capacity(b.plants.len());
    for plant in &b.plants {
        let per_query = plant
            .queries
            .par_iter()
            .map(|q| {
                let ranked = rank(plant, q);
                let relevant = plant.relevant(&q.query_id);
                let grades: HashMap<String, u32> = plant.qrels[&q.query_id].iter().map(|(d, g)| (d.clone(), *g)).collect();
                Ok(Metrics {
                    map10: ap_at_k(&ranked, &relevant, k)?,
                    mrr10: rr_at_k(&ranked, &relevant, k)?,
                    ndcg10: ndcg_at_k(&ranked, &grades, k)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        plants.push(PlantScores {
            plant_id: plant.plant_id.clone(),
            training: plant.training,
            n_queries: per_query.len(),
            metrics: Metrics::average(per_query.iter()),
        });
    }
    let mean = Metrics::average(plants.iter().map(|p| &p.metrics));
    Ok(EvalReport {
        k,
        ap_normalizer: AP_NORMALIZER.to_string(),
        plants,
        overall: mean.mean(),
        mean,
    })
}

pub fn evaluate_run(p: &EncoderParams, b: &Benchmark) -> Result<EvalReport> {
    let encoded: HashMap<&str, (Vec<&String>, Vec<Vec<f64>>)> = b
        .plants
        .iter()
        .map(|plant| {
            let texts: Vec<&str> = plant.corpus.values().map(String::as_str).collect();
            (plant.plant_id.as_str(), (plant.corpus.keys().collect(), p.encode_batch(&texts)))
        })
        .collect();
    evaluate_rankings(b, DEFAULT_K, |plant, q| {
        let (ids, docs) = &encoded[plant.plant_id.as_str()];
        rank_vectors(&p.encode(&q.text), ids, docs)
    })
}

/// TREC qrels: `query_id 0 doc_id grade` per line.
pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Qrels::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, got {}", cols.len())));
        }
        let grade: u32 = cols[3].parse().map_err(|e| bad(format!("grade: {e}")))?;
        out.entry(cols[0].to_string()).or_default().insert(cols[2].to_string(), grade);
    }
    Ok(out)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut buf = Vec::new();
    for (q, rels) in qrels {
        for (d, g) in rels {
            writeln!(buf, "{q} 0 {d} {g}").expect("write to vec");
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    jsonl::read(path)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<()> {
    jsonl::write(path, queries)
}
