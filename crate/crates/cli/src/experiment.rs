//! In-memory form of the pipeline. The file-based stage commands share these
//! helpers; values that the stages persist as float32 are rounded the same
//! way here, so both paths produce identical reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use graphtrip_core::ann::FlatIndex;
use graphtrip_core::contrastive::{train_biencoder, train_docsim, TrainLog};
use graphtrip_core::embed::{
    eval_link_prediction, init_embeddings, split_edges, train_graph_embeddings, CandidatePool, EmbeddingTable,
    GeTrainConfig, LpReport,
};
use graphtrip_core::encoder::EncoderParams;
use graphtrip_core::ir_eval::{evaluate_run, Benchmark, EvalReport};
use graphtrip_core::kg::{self, KnowledgeGraph, LexicalMatcher, LinkReport, NodeKind, Relation};
use graphtrip_core::pair_gen::{
    compose_pairs, generate_query, quality_filter, triplets_to_pairs, CompositionReport, CorpusStats, EncoderScorer,
    QueryDocPair,
};
use graphtrip_core::synth::{generate_multi_plant, generate_plant, MultiPlant, PlantConfig};
use graphtrip_core::triplets::{sample_triplets, SamplingParams, TripletSet};
use serde::{Deserialize, Serialize};

use crate::config::{Composition, PairGenConfig, RunConfig};
use crate::error::{CliError, CliResult};

fn round_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x as f32)).collect()
}

/// `p` as it reads back after a save/load round trip.
pub fn as_stored_encoder(p: &EncoderParams) -> CliResult<EncoderParams> {
    Ok(EncoderParams::from_table(p.dim(), p.vocab_buckets(), round_f32(p.table()))?)
}

pub fn as_stored_table(t: &EmbeddingTable) -> CliResult<EmbeddingTable> {
    let mut out = EmbeddingTable::from_rows(t.dim(), t.node_ids().to_vec(), round_f32(t.values()))?;
    for rel in Relation::ALL {
        out.set_relation(rel, round_f32(t.relation(rel)))?;
    }
    Ok(out)
}

pub fn as_stored_vectors(v: &HashMap<String, Vec<f64>>) -> HashMap<String, Vec<f64>> {
    v.iter().map(|(k, x)| (k.clone(), round_f32(x))).collect()
}

/// Link enrichment (optional) followed by text-log filtering.
pub fn build_plant_graph(raw: &KnowledgeGraph, enrich: bool) -> (KnowledgeGraph, Option<LinkReport>) {
    if enrich {
        let (g, report) = kg::predict_links(raw, &LexicalMatcher::default());
        (kg::build_graph(&g), Some(report))
    } else {
        (kg::build_graph(raw), None)
    }
}

pub fn train_ge(
    graph: &KnowledgeGraph,
    text_vectors: &HashMap<String, Vec<f64>>,
    cfg: &GeTrainConfig,
) -> CliResult<EmbeddingTable> {
    let init = init_embeddings(graph, cfg, Some(text_vectors))?;
    Ok(train_graph_embeddings(graph, &init, cfg)?)
}

/// Triplets over every text log of the graph, using its embedding rows.
pub fn sample_plant_triplets(graph: &KnowledgeGraph, emb: &EmbeddingTable, params: &SamplingParams) -> CliResult<TripletSet> {
    let logs: BTreeSet<String> = graph.nodes_of_kind(NodeKind::TextLog).map(|n| n.id.clone()).collect();
    let index = FlatIndex::build(emb, &logs)?;
    Ok(sample_triplets(&index, graph, params)?)
}

/// Training text per log: context-expanded when the log survived graph
/// building, raw otherwise.
pub fn training_texts(raw: &KnowledgeGraph, built: &KnowledgeGraph) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for n in raw.nodes_of_kind(NodeKind::TextLog) {
        let text = if built.node(&n.id).is_some() {
            kg::expand_context(built, &n.id)?
        } else {
            n.text.clone()
        };
        out.insert(n.id.clone(), text);
    }
    Ok(out)
}

pub fn filter_triplets(
    set: &TripletSet,
    texts: &HashMap<String, String>,
    scorer_params: &EncoderParams,
    cfg: &PairGenConfig,
) -> CliResult<TripletSet> {
    if !cfg.filter {
        return Ok(set.clone());
    }
    Ok(quality_filter(set, texts, &EncoderScorer::new(scorer_params), cfg.thresholds)?)
}

/// GET pairs from the triplets of every training plant; queries are
/// extractive over the statistics of `texts`.
pub fn get_pairs(sets: &[&TripletSet], texts: &HashMap<String, String>, query_terms: usize) -> CliResult<Vec<QueryDocPair>> {
    let ordered: BTreeMap<&String, &String> = texts.iter().collect();
    let stats = CorpusStats::from_texts(ordered.values());
    let mut out = Vec::new();
    for set in sets {
        let mut queries = HashMap::new();
        for qid in set.by_query().keys() {
            let text = texts
                .get(*qid)
                .ok_or_else(|| CliError::Missing(format!("no text for triplet query {qid}")))?;
            queries.insert(qid.to_string(), generate_query(text, query_terms, &stats)?);
        }
        out.extend(triplets_to_pairs(set, &queries)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PlantRun {
    pub name: String,
    pub training: bool,
    pub graph: KnowledgeGraph,
    pub link_report: Option<LinkReport>,
    /// Filtered triplets; training plants only.
    pub triplets: Option<TripletSet>,
    pub sampled: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSources {
    pub drmm: Vec<QueryDocPair>,
    pub sid: Vec<QueryDocPair>,
    pub get: Vec<QueryDocPair>,
}

impl PairSources {
    pub fn compose(&self, comp: &Composition) -> (Vec<QueryDocPair>, CompositionReport) {
        let mut parts = Vec::new();
        for (on, rows) in [(comp.drmm, &self.drmm), (comp.sid, &self.sid), (comp.get, &self.get)] {
            if on {
                parts.push(rows.clone());
            }
        }
        compose_pairs(parts)
    }
}

pub struct Prepared {
    pub config: RunConfig,
    pub synth: MultiPlant,
    pub plants: Vec<PlantRun>,
    pub texts: HashMap<String, String>,
    pub base: EncoderParams,
    pub docsim: Option<(EncoderParams, TrainLog)>,
    pub pairs: PairSources,
}

impl Prepared {
    pub fn benchmark(&self) -> Benchmark {
        self.synth.benchmark()
    }

    pub fn training_triplets(&self) -> TripletSet {
        let mut all = TripletSet::default();
        for p in &self.plants {
            if let Some(t) = &p.triplets {
                all.triplets.extend(t.triplets.iter().cloned());
                all.skipped += t.skipped;
            }
        }
        all
    }
}

/// Generates the benchmark and runs every stage up to the bi-encoder.
pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let config = cfg.resolved()?;
    let synth = generate_multi_plant(&config.plants)?;
    let base = EncoderParams::new(config.encoder.dim, config.encoder.vocab_buckets, config.encoder_seed())?;

    let mut plants = Vec::new();
    let mut texts = HashMap::new();
    for sp in &synth.plants {
        let (graph, link_report) = build_plant_graph(&sp.graph, config.link_enrichment);
        texts.extend(training_texts(&sp.graph, &graph)?);
        plants.push(PlantRun {
            name: sp.name.clone(),
            training: sp.plant.training,
            graph,
            link_report,
            triplets: None,
            sampled: 0,
        });
    }
    for (pr, sp) in plants.iter_mut().zip(&synth.plants) {
        if !pr.training {
            continue;
        }
        let ge = GeTrainConfig {
            rng_seed: RunConfig::plant_seed(config.ge.rng_seed, &pr.name),
            ..config.ge.clone()
        };
        let emb = as_stored_table(&train_ge(&pr.graph, &as_stored_vectors(&sp.text_vectors), &ge)?)?;
        let params = SamplingParams {
            rng_seed: RunConfig::plant_seed(config.sampling.rng_seed, &pr.name),
            ..config.sampling.clone()
        };
        let sampled = sample_plant_triplets(&pr.graph, &emb, &params)?;
        pr.sampled = sampled.len();
        pr.triplets = Some(filter_triplets(&sampled, &texts, &base, &config.pairs)?);
    }

    let sets: Vec<&TripletSet> = plants.iter().filter_map(|p| p.triplets.as_ref()).collect();
    let get = get_pairs(&sets, &texts, config.pairs.query_terms)?;
    let sid: Vec<QueryDocPair> = synth.plants.iter().flat_map(|p| p.sid_pairs.iter().cloned()).collect();
    let drmm = match &config.drmm_pairs {
        Some(path) => graphtrip_core::pair_gen::read_pairs(path)?,
        None => Vec::new(),
    };

    let mut prepared = Prepared {
        config,
        synth,
        plants,
        texts,
        base,
        docsim: None,
        pairs: PairSources { drmm, sid, get },
    };
    if prepared.config.ablations.iter().any(|a| a.docsim) {
        let triplets = prepared.training_triplets();
        let (enc, log) = train_docsim(&prepared.base, &triplets, &prepared.texts, &prepared.config.docsim)?;
        prepared.docsim = Some((as_stored_encoder(&enc)?, log));
    }
    Ok(prepared)
}

/// Encoder for one ablation row.
pub fn train_composition(p: &Prepared, comp: &Composition) -> CliResult<(EncoderParams, Option<TrainLog>)> {
    let start = if comp.docsim {
        &p.docsim
            .as_ref()
            .ok_or_else(|| CliError::Missing("docsim encoder; run train-docsim first".into()))?
            .0
    } else {
        &p.base
    };
    if !comp.has_pairs() {
        return Ok((as_stored_encoder(start)?, None));
    }
    let (pairs, _) = p.pairs.compose(comp);
    let (enc, log) = train_biencoder(start, &pairs, &p.texts, &p.config.biencoder)?;
    Ok((as_stored_encoder(&enc)?, Some(log)))
}

pub fn evaluate(p: &Prepared, enc: &EncoderParams) -> CliResult<EvalReport> {
    Ok(evaluate_run(enc, &p.benchmark())?)
}

pub fn run_ablation(p: &Prepared, comp: &Composition) -> CliResult<EvalReport> {
    let (enc, _) = train_composition(p, comp)?;
    evaluate(p, &enc)
}

/// Held-out link prediction on one synthetic plant. The GE model sees only
/// the training split; candidates come from the whole graph.
pub fn link_prediction_run(
    plant: &PlantConfig,
    ge: &GeTrainConfig,
    enrich: bool,
    test_fraction: f64,
    split_seed: u64,
) -> CliResult<LpReport> {
    let sp = generate_plant(plant)?;
    let (graph, _) = build_plant_graph(&sp.graph, enrich);
    let (train, test) = split_edges(&graph, test_fraction, split_seed)?;
    let train_graph = graph.with_edges(train.clone())?;
    let emb = train_ge(&train_graph, &sp.text_vectors, ge)?;
    Ok(eval_link_prediction(&emb, &test, &CandidatePool::from_graph(&graph), Some(&train))?)
}
