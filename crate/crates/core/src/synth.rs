//! Synthetic plant data: an FL hierarchy, shift-book style text logs with
//! jargon and abbreviation structure, typed edges, retrieval queries and
//! qrels, plus topic vectors for embedding initialization.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir_eval::{self, Benchmark, Plant, Qrels, Query};
use crate::kg::{self, Edge, KnowledgeGraph, Node, NodeKind, Relation};
use crate::pair_gen::{self, CorpusStats, Label, QueryDocPair, Source};
use crate::{gemb, jsonl, vecmath};

const EQUIPMENT: &[&str] = &[
    "Pumpe", "Ventil", "Motor", "Rührwerk", "Filter", "Behälter", "Verdichter", "Kessel", "Gebläse", "Förderband",
    "Schieber", "Trockner", "Kolonne", "Reaktor", "Mühle", "Waage", "Abscheider", "Getriebe", "Leitung", "Brenner",
];

const JARGON: &[(&str, &str)] = &[
    ("Lömi", "Lösungsmittel"),
    ("KW", "Kühlwasser"),
    ("N2", "Stickstoff"),
    ("Zentri", "Zentrifuge"),
    ("WT", "Wärmetauscher"),
    ("DL", "Druckluft"),
    ("HD-Dampf", "Hochdruckdampf"),
    ("Kondi", "Kondensat"),
    ("Kat", "Katalysator"),
    ("FU", "Frequenzumrichter"),
    ("Thermo", "Thermoelement"),
    ("AWÄ", "Abluftwäscher"),
    ("Natron", "Natronlauge"),
    ("VE-Wasser", "Deionat"),
];

const PROBLEMS: &[&str] = &[
    "leckt",
    "undicht",
    "läuft heiß",
    "macht Geräusche",
    "vibriert stark",
    "Druck zu hoch",
    "Druck zu niedrig",
    "Störung gemeldet",
    "ausgefallen",
    "Temperatur schwankt",
    "verstopft",
    "Alarm ausgelöst",
    "klemmt",
    "Durchfluss gering",
];

const ACTIONS: &[&str] = &[
    "Schlosser informiert",
    "Dichtung getauscht",
    "Instandhaltung beauftragt",
    "Schrauben nachgezogen",
    "Leitung gespült",
    "Sieb gereinigt",
    "neu gestartet",
    "Schichtleiter informiert",
    "Auftrag angelegt",
    "weiter beobachten",
    "Ersatzteil bestellt",
    "Messung geprüft",
];

const FOLLOW_UPS: &[&str] = &[
    "Nachtrag",
    "Rückmeldung",
    "erledigt",
    "behoben",
    "Stand",
    "wieder in Ordnung",
];

const FILLER: &[&str] = &[
    "bitte", "heute", "Nachtschicht", "Frühschicht", "Spätschicht", "Rundgang", "erneut", "kurzzeitig", "wieder",
    "im", "Betrieb", "vor", "Ort", "ok", "siehe", "Vorschicht", "Info", "laut", "nochmals", "gegen",
];

const POOL: &[&str] = &[
    "Flansch", "Lager", "Dichtung", "Welle", "Sieb", "Düse", "Stutzen", "Armatur", "Gleitring", "Laufrad",
    "Stopfbuchse", "Kompensator", "Manometer", "Schauglas", "Rohrbogen", "Keilriemen", "Antrieb", "Kugelhahn",
    "Rückschlagklappe", "Entlüftung", "Heizregister", "Sicherheitsventil", "Füllstand", "Wicklung", "Klemmkasten",
    "Kabel", "Isolierung", "Schelle", "Sensor", "Grenzschalter", "Ablauf", "Zulauf", "Bypass", "Überlauf",
    "Kupplung", "Schmierung", "Ölstand", "Kondensatableiter", "Magnetventil", "Stellantrieb",
];

const TS_ORIGIN: i64 = 1_700_000_000;
const YEAR_SECS: i64 = 365 * 24 * 3600;
const MIN_LONG_CHARS: usize = 100;

/// The jargon/textbook synonym pairs used by default, shared by all plants.
pub fn default_jargon_pairs() -> Vec<(String, String)> {
    JARGON.iter().map(|(j, t)| (j.to_string(), t.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Id namespace; `generate_multi_plant` fills in A, B, ... when unset.
    pub name: Option<String>,
    pub seed: u64,
    pub n_fl: usize,
    pub tree_branching: usize,
    pub n_logs: usize,
    pub jargon_pairs: Vec<(String, String)>,
    /// Share of a leaf's logs written with the jargon form.
    pub jargon_rate: f64,
    /// Logs that name their FL by code instead of carrying the edge.
    pub abbreviation_rate: f64,
    /// Follow-up logs per base log.
    pub related_rate: f64,
    /// Share of follow-up `related_to` edges present in the raw records.
    pub related_recorded_rate: f64,
    /// Logs written under the 100 character minimum.
    pub short_fraction: f64,
    pub n_queries: usize,
    /// Topic word pools; one is assigned per FL whose children are leaves.
    pub vocab: Vec<Vec<String>>,
    pub text_vector_dim: usize,
    pub text_vector_noise: f64,
    /// Logs feed the triplet sources when set.
    pub training: bool,
    /// Number of synthetic in-domain query/doc pairs to emit, 0 for none.
    pub sid_queries: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            name: None,
            seed: 0,
            n_fl: 40,
            tree_branching: 3,
            n_logs: 500,
            jargon_pairs: default_jargon_pairs(),
            jargon_rate: 0.5,
            abbreviation_rate: 0.3,
            related_rate: 0.1,
            related_recorded_rate: 0.3,
            short_fraction: 0.2,
            n_queries: 20,
            vocab: default_vocab(),
            text_vector_dim: 64,
            text_vector_noise: 4.0,
            training: true,
            sid_queries: 0,
        }
    }
}

fn default_vocab() -> Vec<Vec<String>> {
    POOL.chunks(4).map(|c| c.iter().map(|w| w.to_string()).collect()).collect()
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("plant config: {m}")));
        if self.n_fl == 0 {
            return bad("n_fl must be >= 1");
        }
        if self.tree_branching == 0 && self.n_fl > 1 {
            return bad("tree_branching must be >= 1");
        }
        for (name, r) in [
            ("jargon_rate", self.jargon_rate),
            ("abbreviation_rate", self.abbreviation_rate),
            ("related_rate", self.related_rate),
            ("related_recorded_rate", self.related_recorded_rate),
            ("short_fraction", self.short_fraction),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must be in [0, 1]"));
            }
        }
        if self.jargon_pairs.is_empty() {
            return bad("at least one jargon pair is required");
        }
        if self.vocab.is_empty() || self.vocab.iter().any(Vec::is_empty) {
            return bad("vocab needs at least one non-empty pool");
        }
        if self.text_vector_dim < 2 {
            return bad("text_vector_dim must be >= 2");
        }
        if !(self.text_vector_noise >= 0.0) {
            return bad("text_vector_noise must be >= 0");
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(char::is_whitespace) || name.contains(':') {
                return bad("name must be non-empty without whitespace or ':'");
            }
        }
        Ok(())
    }

    fn n_follow_ups(&self) -> usize {
        (self.n_logs as f64 * self.related_rate / (1.0 + self.related_rate)).round() as usize
    }
}

/// Generation facts about one log, kept for analysis and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogMeta {
    pub id: String,
    pub leaf: String,
    pub concept: usize,
    pub jargon: bool,
    pub abbreviated: bool,
    /// Index of the reported problem; follow-ups report none.
    pub problem: Option<usize>,
    pub follow_up_of: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SynthPlant {
    pub name: String,
    /// Raw records: some `reports_about` and `related_to` edges are missing.
    pub graph: KnowledgeGraph,
    pub plant: Plant,
    pub text_vectors: HashMap<String, Vec<f64>>,
    pub logs: Vec<LogMeta>,
    pub sid_pairs: Vec<QueryDocPair>,
}

struct Leaf {
    id: String,
    code: String,
    equipment: &'static str,
    concept: usize,
    pool: usize,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [&'a str]) -> &'a str {
    items[rng.gen_range(0..items.len())]
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if let Some(u) = vecmath::normalized(&v) {
            return u;
        }
    }
}

pub fn generate_plant(cfg: &PlantConfig) -> Result<SynthPlant> {
    cfg.validate()?;
    let name = cfg.name.clone().unwrap_or_else(|| "A".to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // FL tree in breadth-first order: "FL 1", "FL 1-1", ...
    let mut paths: Vec<Vec<usize>> = vec![vec![1]];
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut head = 0;
    while paths.len() < cfg.n_fl {
        for c in 1..=cfg.tree_branching {
            if paths.len() == cfg.n_fl {
                break;
            }
            let mut p = paths[head].clone();
            p.push(c);
            paths.push(p);
            parent.push(Some(head));
        }
        head += 1;
    }
    let join = |p: &[usize]| p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-");
    let fl_id = |i: usize| format!("{name}:fl{}", join(&paths[i]));
    let fl_code = |i: usize| format!("FL {}", join(&paths[i]));
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_fl];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    let leaf_idx: Vec<usize> = (0..cfg.n_fl).filter(|&i| children[i].is_empty()).collect();

    let n_concepts = cfg.jargon_pairs.len();
    let mut combos: Vec<(usize, usize)> = (0..EQUIPMENT.len())
        .flat_map(|e| (0..n_concepts).map(move |c| (e, c)))
        .collect();
    if combos.len() < leaf_idx.len() {
        return Err(Error::Config(format!(
            "{} leaves need distinct topics but only {} exist",
            leaf_idx.len(),
            combos.len()
        )));
    }
    combos.shuffle(&mut rng);
    let mut pool_of_parent: HashMap<usize, usize> = HashMap::new();
    let mut leaves = Vec::with_capacity(leaf_idx.len());
    for (n, &i) in leaf_idx.iter().enumerate() {
        let key = parent[i].unwrap_or(i);
        let next = pool_of_parent.len();
        let pool = *pool_of_parent.entry(key).or_insert(next % cfg.vocab.len());
        leaves.push(Leaf {
            id: fl_id(i),
            code: fl_code(i),
            equipment: EQUIPMENT[combos[n].0],
            concept: combos[n].1,
            pool,
        });
    }

    let n_follow = cfg.n_follow_ups();
    let n_base = cfg.n_logs - n_follow;
    if cfg.n_queries > leaves.len() || cfg.n_queries > n_base {
        return Err(Error::Config(format!(
            "{} queries requested but only {} leaf topics with logs are possible",
            cfg.n_queries,
            leaves.len().min(n_base)
        )));
    }

    // every leaf gets a log before any gets a second one
    let mut base_leaf: Vec<usize> = (0..n_base)
        .map(|i| if i < leaves.len() { i } else { rng.gen_range(0..leaves.len()) })
        .collect();
    base_leaf.shuffle(&mut rng);

    // jargon form for a fixed share of each leaf's logs, at least one of each
    // form when the leaf has two or more logs
    let mut per_leaf: Vec<Vec<usize>> = vec![Vec::new(); leaves.len()];
    for (i, &l) in base_leaf.iter().enumerate() {
        per_leaf[l].push(i);
    }
    let mut jargon = vec![false; n_base];
    for logs in &per_leaf {
        let n = logs.len();
        if n == 0 {
            continue;
        }
        let mut k = (cfg.jargon_rate * n as f64).round() as usize;
        if n >= 2 && cfg.jargon_rate > 0.0 && cfg.jargon_rate < 1.0 {
            k = k.clamp(1, n - 1);
        }
        let mut order = logs.clone();
        order.shuffle(&mut rng);
        for &i in order.iter().take(k) {
            jargon[i] = true;
        }
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    for i in 0..cfg.n_fl {
        let desc = match leaves.iter().find(|l| l.id == fl_id(i)) {
            Some(l) => format!("{} {}", l.equipment, cfg.jargon_pairs[l.concept].1),
            None => format!("Teilanlage {}", join(&paths[i])),
        };
        nodes.push(Node::functional_location(fl_id(i), fl_code(i), desc));
        if let Some(p) = parent[i] {
            edges.push(Edge::new(fl_id(i), Relation::PartOf, fl_id(p)));
        }
    }

    let mut logs: Vec<LogMeta> = Vec::with_capacity(cfg.n_logs);
    let mut log_ts: Vec<i64> = Vec::with_capacity(cfg.n_logs);
    let mut log_text: Vec<String> = Vec::with_capacity(cfg.n_logs);
    let log_id = |i: usize| format!("{name}:tl{i:04}");

    for i in 0..n_base {
        let leaf = &leaves[base_leaf[i]];
        let abbreviated = rng.gen_bool(cfg.abbreviation_rate);
        let short = rng.gen_bool(cfg.short_fraction);
        let problem = rng.gen_range(0..PROBLEMS.len());
        let text = compose(&mut rng, cfg, leaf, jargon[i], abbreviated, short, Some(problem));
        logs.push(LogMeta {
            id: log_id(i),
            leaf: leaf.id.clone(),
            concept: leaf.concept,
            jargon: jargon[i],
            abbreviated,
            problem: Some(problem),
            follow_up_of: None,
        });
        log_ts.push(TS_ORIGIN + rng.gen_range(0..YEAR_SECS));
        log_text.push(text);
    }
    for j in 0..n_follow {
        let i = n_base + j;
        let src = rng.gen_range(0..n_base);
        let leaf = &leaves[base_leaf[src]];
        let abbreviated = rng.gen_bool(cfg.abbreviation_rate);
        let short = rng.gen_bool(cfg.short_fraction);
        let text = compose(&mut rng, cfg, leaf, jargon[src], abbreviated, short, None);
        logs.push(LogMeta {
            id: log_id(i),
            leaf: leaf.id.clone(),
            concept: leaf.concept,
            jargon: jargon[src],
            abbreviated,
            problem: None,
            follow_up_of: Some(log_id(src)),
        });
        log_ts.push(log_ts[src] + rng.gen_range(3600..=36 * 3600));
        log_text.push(text);
        if rng.gen_bool(cfg.related_recorded_rate) {
            edges.push(Edge::new(log_id(src), Relation::RelatedTo, log_id(i)));
        }
    }
    for (i, meta) in logs.iter().enumerate() {
        nodes.push(Node::text_log(meta.id.clone(), log_text[i].clone()).with_ts(log_ts[i]));
        if !meta.abbreviated {
            edges.push(Edge::new(meta.id.clone(), Relation::ReportsAbout, meta.leaf.clone()));
        }
    }
    let (graph, _) = KnowledgeGraph::new(nodes, edges)?;

    // topic vectors: leaves random, inner FLs the mean of their children,
    // logs their leaf plus noise, follow-ups close to their origin
    let dim = cfg.text_vector_dim;
    let mut fl_vec: Vec<Vec<f64>> = vec![Vec::new(); cfg.n_fl];
    for &i in &leaf_idx {
        fl_vec[i] = random_unit(&mut rng, dim);
    }
    for i in (0..cfg.n_fl).rev() {
        if !children[i].is_empty() {
            let mut m = vec![0.0; dim];
            for &c in &children[i] {
                vecmath::add_scaled(&mut m, &fl_vec[c], 1.0 / children[i].len() as f64);
            }
            fl_vec[i] = vecmath::normalized(&m).unwrap_or(m);
        }
    }
    let leaf_vec: HashMap<&str, &Vec<f64>> = leaf_idx
        .iter()
        .zip(&leaves)
        .map(|(&i, l)| (l.id.as_str(), &fl_vec[i]))
        .collect();
    let mut text_vectors: HashMap<String, Vec<f64>> = (0..cfg.n_fl).map(|i| (fl_id(i), fl_vec[i].clone())).collect();
    let mut log_vecs: Vec<Vec<f64>> = Vec::with_capacity(logs.len());
    for meta in &logs {
        let (anchor, noise) = match &meta.follow_up_of {
            Some(src) => {
                let s: usize = src.rsplit("tl").next().and_then(|n| n.parse().ok()).expect("own id format");
                (log_vecs[s].clone(), cfg.text_vector_noise * 0.3)
            }
            None => (leaf_vec[meta.leaf.as_str()].clone(), cfg.text_vector_noise),
        };
        let mut v = anchor;
        vecmath::add_scaled(&mut v, &random_unit(&mut rng, dim), noise);
        log_vecs.push(v.clone());
        text_vectors.insert(meta.id.clone(), v);
    }

    // queries: textbook phrasing of a problem at a leaf; logs reporting that
    // problem there are grade 2, the leaf's other logs grade 1
    let mut with_logs: Vec<usize> = (0..leaves.len()).filter(|&l| !per_leaf[l].is_empty()).collect();
    with_logs.shuffle(&mut rng);
    let mut chosen: Vec<usize> = with_logs.into_iter().take(cfg.n_queries).collect();
    chosen.sort_unstable();
    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    for (n, &l) in chosen.iter().enumerate() {
        let leaf = &leaves[l];
        let anchor = per_leaf[l][rng.gen_range(0..per_leaf[l].len())];
        let problem = logs[anchor].problem.expect("base logs report a problem");
        let qid = format!("{name}:q{n:02}");
        queries.push(Query {
            query_id: qid.clone(),
            text: format!("{} {} {}", cfg.jargon_pairs[leaf.concept].1, leaf.equipment, PROBLEMS[problem]),
            plant: name.clone(),
        });
        let rel: BTreeMap<String, u32> = logs
            .iter()
            .filter(|m| m.leaf == leaf.id)
            .map(|m| (m.id.clone(), if m.problem == Some(problem) { 2 } else { 1 }))
            .collect();
        qrels.insert(qid, rel);
    }
    let corpus: BTreeMap<String, String> = logs.iter().map(|m| m.id.clone()).zip(log_text.iter().cloned()).collect();

    let sid_pairs = sid_pairs(&mut rng, cfg.sid_queries, &logs, &corpus)?;

    Ok(SynthPlant {
        plant: Plant {
            plant_id: name.clone(),
            corpus,
            queries,
            qrels,
            training: cfg.training,
        },
        name,
        graph,
        text_vectors,
        logs,
        sid_pairs,
    })
}

fn compose<R: Rng>(
    rng: &mut R,
    cfg: &PlantConfig,
    leaf: &Leaf,
    jargon: bool,
    abbreviated: bool,
    short: bool,
    problem: Option<usize>,
) -> String {
    let (j, t) = &cfg.jargon_pairs[leaf.concept];
    let concept = if jargon { j.as_str() } else { t.as_str() };
    // an abbreviated log names its FL by code in place of the equipment
    let subject = if abbreviated { leaf.code.as_str() } else { leaf.equipment };
    let pool = &cfg.vocab[leaf.pool];
    let mut words: Vec<String> = Vec::new();
    match problem {
        Some(p) => {
            words.push(format!("{subject} {concept}"));
            words.push(format!("{}.", PROBLEMS[p]));
        }
        None => {
            words.push(pick(rng, FOLLOW_UPS).to_string());
            words.push(format!("{subject} {concept}:"));
            words.push(pick(rng, ACTIONS).to_string());
        }
    }
    if short {
        let text = words.join(" ");
        if text.chars().count() < MIN_LONG_CHARS {
            return text;
        }
        return text.chars().take(MIN_LONG_CHARS - 1).collect::<String>().trim_end().to_string();
    }
    words.push(pool[rng.gen_range(0..pool.len())].clone());
    words.push(pool[rng.gen_range(0..pool.len())].clone());
    words.push(format!("{}.", pick(rng, ACTIONS)));
    let extra = rng.gen_range(2..=6);
    for _ in 0..extra {
        words.push(pick(rng, FILLER).to_string());
    }
    while words.join(" ").chars().count() < MIN_LONG_CHARS {
        if rng.gen_bool(0.5) {
            words.push(pool[rng.gen_range(0..pool.len())].clone());
        } else {
            words.push(pick(rng, FILLER).to_string());
        }
    }
    words.join(" ")
}

/// `text` with every whole-word occurrence of `from` replaced by `to`;
/// punctuation attached to a word is kept.
pub fn substitute_term(text: &str, from: &str, to: &str) -> String {
    text.split(' ')
        .map(|tok| {
            let core = tok.trim_end_matches(|c: char| c.is_ascii_punctuation());
            if core == from {
                format!("{to}{}", &tok[core.len()..])
            } else {
                tok.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// (jargon-form text, textbook twin) for every jargon-form log of `p`.
pub fn jargon_twins(p: &SynthPlant, pairs: &[(String, String)]) -> Vec<(String, String)> {
    p.logs
        .iter()
        .filter(|m| m.jargon)
        .map(|m| {
            let text = &p.plant.corpus[&m.id];
            let (j, t) = &pairs[m.concept];
            (text.clone(), substitute_term(text, j, t))
        })
        .collect()
}

/// Synthetic in-domain pairs: an extractive query per sampled log, the log
/// as positive and the lexically closest log of another topic as negative.
fn sid_pairs<R: Rng>(
    rng: &mut R,
    n: usize,
    logs: &[LogMeta],
    corpus: &BTreeMap<String, String>,
) -> Result<Vec<QueryDocPair>> {
    if n == 0 || logs.is_empty() {
        return Ok(Vec::new());
    }
    let stats = CorpusStats::from_texts(corpus.values());
    let tfidf: Vec<BTreeMap<String, f64>> = logs
        .iter()
        .map(|m| {
            let mut v: BTreeMap<String, f64> = BTreeMap::new();
            for w in crate::text::words(&corpus[&m.id]) {
                *v.entry(w).or_default() += 1.0;
            }
            for (w, x) in v.iter_mut() {
                *x *= stats.idf(w);
            }
            v
        })
        .collect();
    let sparse_cos = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| {
        let dot: f64 = a.iter().filter_map(|(w, x)| b.get(w).map(|y| x * y)).sum();
        let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, logs.len(), n.min(logs.len())).into_vec();
    picks.sort_unstable();
    let mut out = Vec::new();
    for i in picks {
        let Ok(query) = pair_gen::generate_query(&corpus[&logs[i].id], 3, &stats) else {
            continue;
        };
        out.push(QueryDocPair {
            query: query.clone(),
            doc_id: logs[i].id.clone(),
            label: Label::Positive,
            source: Source::Sid,
        });
        let best = (0..logs.len())
            .filter(|&j| logs[j].leaf != logs[i].leaf)
            .map(|j| (sparse_cos(&tfidf[i], &tfidf[j]), j))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, j)) = best {
            out.push(QueryDocPair {
                query,
                doc_id: logs[j].id.clone(),
                label: Label::Negative,
                source: Source::Sid,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MultiPlant {
    pub plants: Vec<SynthPlant>,
}

impl MultiPlant {
    pub fn benchmark(&self) -> Benchmark {
        Benchmark {
            plants: self.plants.iter().map(|p| p.plant.clone()).collect(),
        }
    }
}

/// Plants are named A, B, ... by position unless named explicitly.
pub fn generate_multi_plant(cfgs: &[PlantConfig]) -> Result<MultiPlant> {
    if cfgs.len() < 2 {
        return Err(Error::Config("a multi-plant benchmark needs at least 2 plants".into()));
    }
    let named: Vec<PlantConfig> = cfgs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut c = c.clone();
            if c.name.is_none() {
                c.name = Some(plant_letter(i));
            }
            c
        })
        .collect();
    let mut seen = HashSet::new();
    for c in &named {
        let n = c.name.as_ref().expect("named above");
        if !seen.insert(n.clone()) {
            return Err(Error::IdCollision(format!("plant name {n}")));
        }
    }
    let plants = named.par_iter().map(generate_plant).collect::<Result<Vec<_>>>()?;
    Ok(MultiPlant { plants })
}

fn plant_letter(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("P{i}")
    }
}

/// Seven plants; A, C, D and G feed training, A to F carry in-domain pairs.
pub fn default_benchmark_configs(seed: u64) -> Vec<PlantConfig> {
    (0..7)
        .map(|i| PlantConfig {
            name: Some(plant_letter(i)),
            seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1),
            training: matches!(i, 0 | 2 | 3 | 6),
            sid_queries: if i < 6 { 250 } else { 0 },
            ..Default::default()
        })
        .collect()
}

/// Writes `nodes.jsonl`, `edges.jsonl`, `text_vectors.{ids.jsonl,gemb}`,
/// `queries.jsonl`, `qrels.txt`, `logs.jsonl` and, when present,
/// `sid_pairs.jsonl` into `dir`.
pub fn write_plant(dir: &Path, p: &SynthPlant) -> Result<()> {
    kg::save_graph(&p.graph, &dir.join("nodes.jsonl"), &dir.join("edges.jsonl"))?;
    let ids: Vec<String> = p.text_vectors.keys().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let dim = ids.first().map_or(0, |id| p.text_vectors[id].len());
    let values: Vec<f64> = ids.iter().flat_map(|id| p.text_vectors[id].iter().copied()).collect();
    gemb::write_named(&dir.join("text_vectors.ids.jsonl"), &dir.join("text_vectors.gemb"), &ids, dim, &values)?;
    ir_eval::write_queries(&dir.join("queries.jsonl"), &p.plant.queries)?;
    ir_eval::write_qrels(&dir.join("qrels.txt"), &p.plant.qrels)?;
    jsonl::write(&dir.join("logs.jsonl"), &p.logs)?;
    if !p.sid_pairs.is_empty() {
        pair_gen::write_pairs(&dir.join("sid_pairs.jsonl"), &p.sid_pairs)?;
    }
    Ok(())
}

/// Reads text vectors written by [`write_plant`].
pub fn read_text_vectors(dir: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let (ids, dim, values) = gemb::read_named(&dir.join("text_vectors.ids.jsonl"), &dir.join("text_vectors.gemb"))?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(r, id)| (id, values[r * dim..(r + 1) * dim].to_vec()))
        .collect())
}

/// Count of graph nodes by kind, for quick structural summaries.
pub fn kind_counts(g: &KnowledgeGraph) -> (usize, usize) {
    (
        g.nodes_of_kind(NodeKind::TextLog).count(),
        g.nodes_of_kind(NodeKind::FunctionalLocation).count(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_structure() {
        let p = generate_plant(&PlantConfig::default()).unwrap();
        let counts = p.graph.edge_count_by_relation();
        assert_eq!(counts.get(&Relation::PartOf).copied().unwrap_or(0), 39);
        assert_eq!(kind_counts(&p.graph), (500, 40));
        assert_eq!(p.plant.queries.len(), 20);
        p.plant.validate().unwrap();
        assert_eq!(p.text_vectors.len(), 540);
        // every log reports about a leaf, by edge or by code mention
        let (enriched, _) = kg::predict_links(&p.graph, &kg::LexicalMatcher::default());
        for m in &p.logs {
            assert_eq!(enriched.out_neighbors(&m.id, Relation::ReportsAbout).collect::<Vec<_>>(), vec![m.leaf.as_str()]);
        }
        let short = p.plant.corpus.values().filter(|t| t.chars().count() < 100).count();
        assert!((50..=160).contains(&short), "{short}");
    }

    #[test]
    fn deterministic_and_rate_zero() {
        let cfg = PlantConfig {
            n_logs: 120,
            ..Default::default()
        };
        let a = generate_plant(&cfg).unwrap();
        let b = generate_plant(&cfg).unwrap();
        assert_eq!(a.plant, b.plant);
        assert_eq!(a.graph.edges(), b.graph.edges());
        let none = generate_plant(&PlantConfig {
            related_rate: 0.0,
            ..cfg
        })
        .unwrap();
        assert_eq!(none.graph.edge_count_by_relation().get(&Relation::RelatedTo).copied().unwrap_or(0), 0);
    }

    #[test]
    fn jargon_and_textbook_forms_share_leaves() {
        let p = generate_plant(&PlantConfig::default()).unwrap();
        let mut mixed = 0;
        for leaf in p.logs.iter().map(|m| &m.leaf).collect::<BTreeSet<_>>() {
            let forms: BTreeSet<bool> = p.logs.iter().filter(|m| &m.leaf == leaf).map(|m| m.jargon).collect();
            mixed += usize::from(forms.len() == 2);
        }
        assert!(mixed >= 20, "{mixed}");
    }

    #[test]
    fn twins_swap_only_the_term() {
        assert_eq!(substitute_term("Pumpe Lömi leckt.", "Lömi", "Lösungsmittel"), "Pumpe Lösungsmittel leckt.");
        assert_eq!(substitute_term("Stand FL 1-2 KW: ok", "KW", "Kühlwasser"), "Stand FL 1-2 Kühlwasser: ok");
        assert_eq!(substitute_term("KWh", "KW", "Kühlwasser"), "KWh");
        let p = generate_plant(&PlantConfig::default()).unwrap();
        let twins = jargon_twins(&p, &default_jargon_pairs());
        assert!(!twins.is_empty());
        assert!(twins.iter().all(|(a, b)| a != b));
    }

    #[test]
    fn infeasible_query_count() {
        let cfg = PlantConfig {
            n_queries: 28,
            ..Default::default()
        };
        assert!(matches!(generate_plant(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn multi_plant_namespaces() {
        let cfgs = vec![
            PlantConfig {
                n_logs: 60,
                n_queries: 5,
                seed: 1,
                ..Default::default()
            },
            PlantConfig {
                n_logs: 60,
                n_queries: 5,
                seed: 2,
                ..Default::default()
            },
        ];
        let m = generate_multi_plant(&cfgs).unwrap();
        let b = m.benchmark();
        b.validate().unwrap();
        assert_eq!(b.plants[0].plant_id, "A");
        assert_eq!(b.plants[1].plant_id, "B");
        let a_ids: HashSet<&String> = b.plants[0].corpus.keys().collect();
        assert!(b.plants[1].corpus.keys().all(|id| !a_ids.contains(id)));
        assert_ne!(
            b.plants[0].corpus.values().collect::<Vec<_>>(),
            b.plants[1].corpus.values().collect::<Vec<_>>()
        );
        let mut dup = cfgs.clone();
        dup[0].name = Some("X".into());
        dup[1].name = Some("X".into());
        assert!(matches!(generate_multi_plant(&dup), Err(Error::IdCollision(_))));
    }
}
