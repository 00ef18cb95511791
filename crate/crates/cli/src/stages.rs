//! File-based stage commands. Each stage reads the artifacts of earlier
//! stages below the output directory, writes its own into `<out>/<stage>/`
//! and records a manifest there.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use graphtrip_core::contrastive::{train_biencoder, train_docsim, TrainLog};
use graphtrip_core::embed::{EmbeddingTable, GeTrainConfig};
use graphtrip_core::encoder::EncoderParams;
use graphtrip_core::ir_eval::{self, comparison_table, evaluate_run, Benchmark, EvalReport, Plant};
use graphtrip_core::kg::{self, NodeKind};
use graphtrip_core::pair_gen::{self, CompositionReport, QueryDocPair};
use graphtrip_core::synth::{self, generate_multi_plant};
use graphtrip_core::triplets::{SamplingParams, TripletSet};
use graphtrip_core::jsonl;
use serde::{Deserialize, Serialize};

use crate::config::{Composition, RunConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{
    build_plant_graph, filter_triplets, get_pairs, sample_plant_triplets, train_ge, training_texts, PairSources,
};
use crate::manifest::{self, files_below, hash_files, io_err, Manifest};

pub const SYNTH: &str = "synth";
pub const BUILD_GRAPH: &str = "build-graph";
pub const TRAIN_GE: &str = "train-ge";
pub const SAMPLE_TRIPLETS: &str = "sample-triplets";
pub const TRAIN_DOCSIM: &str = "train-docsim";
pub const GEN_PAIRS: &str = "gen-pairs";
pub const TRAIN_BIENCODER: &str = "train-biencoder";
pub const EVALUATE: &str = "evaluate";

/// Stage directory names below the output root.
fn stage_dir_name(stage: &str) -> &'static str {
    match stage {
        SYNTH => "synth",
        BUILD_GRAPH => "graph",
        TRAIN_GE => "ge",
        SAMPLE_TRIPLETS => "triplets",
        TRAIN_DOCSIM => "docsim",
        GEN_PAIRS => "pairs",
        TRAIN_BIENCODER => "biencoder",
        EVALUATE => "eval",
        other => unreachable!("unknown stage {other}"),
    }
}

/// One plant as listed in `synth/plants.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantEntry {
    pub plant_id: String,
    pub training: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TextRecord {
    id: String,
    text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletStats {
    pub sampled: usize,
    pub kept: usize,
    pub skipped_queries: usize,
}

/// One row of the final report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub composition: Composition,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl PipelineReport {
    pub fn row(&self, comp: &Composition) -> Option<&AblationRow> {
        self.rows.iter().find(|r| &r.composition == comp)
    }

    pub fn table(&self) -> String {
        let rows: Vec<(String, &EvalReport)> = self.rows.iter().map(|r| (r.label.clone(), &r.report)).collect();
        comparison_table(&rows)
    }
}

/// Resolved config, output root and provenance mode shared by every stage.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub config: RunConfig,
    pub out: PathBuf,
    pub strict: bool,
}

impl Ctx {
    /// Loads `config` (defaults when absent), applies the seed override and
    /// resolves derived seeds.
    pub fn new(config: Option<&Path>, seed: Option<u64>, out: &Path, strict: bool) -> CliResult<Self> {
        let mut cfg = match config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Self::from_config(&cfg, out, strict)
    }

    pub fn from_config(cfg: &RunConfig, out: &Path, strict: bool) -> CliResult<Self> {
        Ok(Ctx {
            config: cfg.resolved()?,
            out: out.to_path_buf(),
            strict,
        })
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage_dir_name(stage))
    }

    /// Upstream stages must have finished; under `--strict` their outputs
    /// must also still match their manifests.
    fn require(&self, stages: &[&str]) -> CliResult<()> {
        for &stage in stages {
            let dir = self.dir(stage);
            let m = match Manifest::read(&dir) {
                Ok(m) => m,
                Err(CliError::Missing(_)) => {
                    return Err(CliError::Missing(format!("no {stage} output in {}; run {stage} first", self.out.display())))
                }
                Err(e) => return Err(e),
            };
            if self.strict {
                m.verify_outputs(&self.out)?;
            }
        }
        Ok(())
    }

    /// Clears the stage directory so stale files never leak into a manifest.
    fn fresh(&self, stage: &str) -> CliResult<PathBuf> {
        let dir = self.dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }

    fn finish(&self, stage: &str, config: serde_json::Value, inputs: &[PathBuf], started: Instant) -> CliResult<()> {
        let dir = self.dir(stage);
        let m = Manifest {
            stage: stage.to_string(),
            seed: self.config.seed,
            config,
            inputs: hash_files(&self.out, inputs)?,
            outputs: hash_files(&self.out, &files_below(&dir)?)?,
        };
        m.write(&dir)?;
        let secs = started.elapsed().as_secs_f64();
        log::info!("{stage}: done in {secs:.2}s");
        manifest::record_timing(&self.out, stage, secs)
    }

    fn plants(&self) -> CliResult<Vec<PlantEntry>> {
        let path = self.dir(SYNTH).join("plants.json");
        let raw = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    fn training_plants(&self) -> CliResult<Vec<String>> {
        Ok(self.plants()?.into_iter().filter(|p| p.training).map(|p| p.plant_id).collect())
    }

    fn raw_graph_paths(&self, plant: &str) -> (PathBuf, PathBuf) {
        let d = self.dir(SYNTH).join(plant);
        (d.join("nodes.jsonl"), d.join("edges.jsonl"))
    }

    fn graph_paths(&self, plant: &str) -> (PathBuf, PathBuf) {
        let d = self.dir(BUILD_GRAPH).join(plant);
        (d.join("nodes.jsonl"), d.join("edges.jsonl"))
    }

    fn texts_path(&self) -> PathBuf {
        self.dir(BUILD_GRAPH).join("texts.jsonl")
    }

    fn triplets_path(&self, plant: &str) -> PathBuf {
        self.dir(SAMPLE_TRIPLETS).join(format!("{plant}.jsonl"))
    }

    fn docsim_encoder_dir(&self) -> PathBuf {
        self.dir(TRAIN_DOCSIM).join("encoder")
    }

    fn biencoder_dir(&self, comp: &Composition) -> PathBuf {
        self.dir(TRAIN_BIENCODER).join(comp.slug())
    }

    fn load_texts(&self) -> CliResult<HashMap<String, String>> {
        let rows: Vec<TextRecord> = jsonl::read(&self.texts_path())?;
        Ok(rows.into_iter().map(|r| (r.id, r.text)).collect())
    }

    fn base_encoder(&self) -> CliResult<EncoderParams> {
        let e = &self.config.encoder;
        Ok(EncoderParams::new(e.dim, e.vocab_buckets, self.config.encoder_seed())?)
    }

    fn load_benchmark(&self) -> CliResult<(Benchmark, Vec<PathBuf>)> {
        let mut plants = Vec::new();
        let mut inputs = vec![self.dir(SYNTH).join("plants.json")];
        for entry in self.plants()? {
            let dir = self.dir(SYNTH).join(&entry.plant_id);
            let (nodes, edges) = self.raw_graph_paths(&entry.plant_id);
            let raw = kg::load_graph(&nodes, &edges)?;
            let corpus = raw
                .nodes_of_kind(NodeKind::TextLog)
                .map(|n| (n.id.clone(), n.text.clone()))
                .collect();
            let (queries_path, qrels_path) = (dir.join("queries.jsonl"), dir.join("qrels.txt"));
            plants.push(Plant {
                plant_id: entry.plant_id.clone(),
                corpus,
                queries: ir_eval::read_queries(&queries_path)?,
                qrels: ir_eval::read_qrels(&qrels_path)?,
                training: entry.training,
            });
            inputs.extend([nodes, queries_path, qrels_path]);
        }
        let b = Benchmark { plants };
        b.validate()?;
        Ok((b, inputs))
    }
}

fn to_value<T: Serialize>(v: &T) -> CliResult<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(v)?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn cmd_synth(ctx: &Ctx) -> CliResult<()> {
    let started = Instant::now();
    let dir = ctx.fresh(SYNTH)?;
    let synth = generate_multi_plant(&ctx.config.plants)?;
    for p in &synth.plants {
        synth::write_plant(&dir.join(&p.name), p)?;
    }
    let entries: Vec<PlantEntry> = synth
        .plants
        .iter()
        .map(|p| PlantEntry {
            plant_id: p.name.clone(),
            training: p.plant.training,
        })
        .collect();
    write_json(&dir.join("plants.json"), &entries)?;
    ctx.finish(SYNTH, to_value(&ctx.config.plants)?, &[], started)
}

pub fn cmd_build_graph(ctx: &Ctx) -> CliResult<()> {
    ctx.require(&[SYNTH])?;
    let started = Instant::now();
    let dir = ctx.fresh(BUILD_GRAPH)?;
    let mut texts = BTreeMap::new();
    let mut inputs = Vec::new();
    for entry in ctx.plants()? {
        let (nodes, edges) = ctx.raw_graph_paths(&entry.plant_id);
        let raw = kg::load_graph(&nodes, &edges)?;
        let (graph, report) = build_plant_graph(&raw, ctx.config.link_enrichment);
        let (out_nodes, out_edges) = ctx.graph_paths(&entry.plant_id);
        kg::save_graph(&graph, &out_nodes, &out_edges)?;
        if let Some(r) = report {
            write_json(&dir.join(&entry.plant_id).join("link_report.json"), &r)?;
        }
        texts.extend(training_texts(&raw, &graph)?);
        inputs.extend([nodes, edges]);
    }
    let records: Vec<TextRecord> = texts.into_iter().map(|(id, text)| TextRecord { id, text }).collect();
    jsonl::write(&ctx.texts_path(), &records)?;
    let config = serde_json::json!({ "link_enrichment": ctx.config.link_enrichment });
    ctx.finish(BUILD_GRAPH, config, &inputs, started)
}

pub fn cmd_train_ge(ctx: &Ctx) -> CliResult<()> {
    ctx.require(&[SYNTH, BUILD_GRAPH])?;
    let started = Instant::now();
    let dir = ctx.fresh(TRAIN_GE)?;
    let mut inputs = Vec::new();
    for plant in ctx.training_plants()? {
        let (nodes, edges) = ctx.graph_paths(&plant);
        let graph = kg::load_graph(&nodes, &edges)?;
        let synth_dir = ctx.dir(SYNTH).join(&plant);
        let vectors = synth::read_text_vectors(&synth_dir)?;
        let cfg = GeTrainConfig {
            rng_seed: RunConfig::plant_seed(ctx.config.ge.rng_seed, &plant),
            ..ctx.config.ge.clone()
        };
        train_ge(&graph, &vectors, &cfg)?.save(&dir.join(&plant))?;
        inputs.extend([
            nodes,
            edges,
            synth_dir.join("text_vectors.ids.jsonl"),
            synth_dir.join("text_vectors.gemb"),
        ]);
    }
    ctx.finish(TRAIN_GE, to_value(&ctx.config.ge)?, &inputs, started)
}

pub fn cmd_sample_triplets(ctx: &Ctx) -> CliResult<()> {
    ctx.require(&[SYNTH, BUILD_GRAPH, TRAIN_GE])?;
    let started = Instant::now();
    let dir = ctx.fresh(SAMPLE_TRIPLETS)?;
    let texts = ctx.load_texts()?;
    let base = ctx.base_encoder()?;
    let mut inputs = vec![ctx.texts_path()];
    let mut stats = BTreeMap::new();
    for plant in ctx.training_plants()? {
        let (nodes, edges) = ctx.graph_paths(&plant);
        let graph = kg::load_graph(&nodes, &edges)?;
        let ge_dir = ctx.dir(TRAIN_GE).join(&plant);
        let emb = EmbeddingTable::load(&ge_dir)?;
        let params = SamplingParams {
            rng_seed: RunConfig::plant_seed(ctx.config.sampling.rng_seed, &plant),
            ..ctx.config.sampling.clone()
        };
        let sampled = sample_plant_triplets(&graph, &emb, &params)?;
        let kept = filter_triplets(&sampled, &texts, &base, &ctx.config.pairs)?;
        kept.save(&ctx.triplets_path(&plant))?;
        stats.insert(
            plant.clone(),
            TripletStats {
                sampled: sampled.len(),
                kept: kept.len(),
                skipped_queries: sampled.skipped,
            },
        );
        inputs.extend([nodes, edges]);
        inputs.extend(files_below(&ge_dir)?);
    }
    write_json(&dir.join("stats.json"), &stats)?;
    let config = serde_json::json!({
        "sampling": ctx.config.sampling,
        "pairs": ctx.config.pairs,
        "encoder": ctx.config.encoder,
    });
    ctx.finish(SAMPLE_TRIPLETS, config, &inputs, started)
}

fn load_triplets(ctx: &Ctx) -> CliResult<(Vec<TripletSet>, Vec<PathBuf>)> {
    let mut sets = Vec::new();
    let mut paths = Vec::new();
    for plant in ctx.training_plants()? {
        let path = ctx.triplets_path(&plant);
        sets.push(TripletSet::load(&path)?);
        paths.push(path);
    }
    Ok((sets, paths))
}

pub fn cmd_train_docsim(ctx: &Ctx) -> CliResult<TrainLog> {
    ctx.require(&[SYNTH, BUILD_GRAPH, SAMPLE_TRIPLETS])?;
    let started = Instant::now();
    let dir = ctx.fresh(TRAIN_DOCSIM)?;
    let (sets, mut inputs) = load_triplets(ctx)?;
    let all = TripletSet::from_triplets(sets.into_iter().flat_map(|s| s.triplets).collect());
    let texts = ctx.load_texts()?;
    let (enc, log) = train_docsim(&ctx.base_encoder()?, &all, &texts, &ctx.config.docsim)?;
    enc.save(&ctx.docsim_encoder_dir())?;
    write_json(&dir.join("train_log.json"), &log)?;
    inputs.push(ctx.texts_path());
    let config = serde_json::json!({ "docsim": ctx.config.docsim, "encoder": ctx.config.encoder });
    ctx.finish(TRAIN_DOCSIM, config, &inputs, started)?;
    Ok(log)
}

pub fn cmd_gen_pairs(ctx: &Ctx) -> CliResult<()> {
    ctx.require(&[SYNTH, BUILD_GRAPH, SAMPLE_TRIPLETS])?;
    let started = Instant::now();
    let dir = ctx.fresh(GEN_PAIRS)?;
    let (sets, mut inputs) = load_triplets(ctx)?;
    let texts = ctx.load_texts()?;
    inputs.push(ctx.texts_path());
    let refs: Vec<&TripletSet> = sets.iter().collect();
    let get = get_pairs(&refs, &texts, ctx.config.pairs.query_terms)?;

    let mut sid = Vec::new();
    for entry in ctx.plants()? {
        let path = ctx.dir(SYNTH).join(&entry.plant_id).join("sid_pairs.jsonl");
        if path.exists() {
            sid.extend(pair_gen::read_pairs(&path)?);
            inputs.push(path);
        }
    }
    let drmm = match &ctx.config.drmm_pairs {
        Some(path) => {
            inputs.push(path.clone());
            pair_gen::read_pairs(path)?
        }
        None => Vec::new(),
    };
    let sources = PairSources { drmm, sid, get };
    for (name, rows) in [("get", &sources.get), ("sid", &sources.sid), ("drmm", &sources.drmm)] {
        if !rows.is_empty() {
            pair_gen::write_pairs(&dir.join(format!("{name}.jsonl")), rows)?;
        }
    }
    let reports: BTreeMap<String, CompositionReport> = ctx
        .config
        .ablations
        .iter()
        .filter(|c| c.has_pairs())
        .map(|c| (c.label(), sources.compose(c).1))
        .collect();
    write_json(&dir.join("composition.json"), &reports)?;
    let config = serde_json::json!({
        "pairs": ctx.config.pairs,
        "drmm_pairs": ctx.config.drmm_pairs,
    });
    ctx.finish(GEN_PAIRS, config, &inputs, started)
}

fn load_pair_sources(ctx: &Ctx) -> CliResult<(PairSources, Vec<PathBuf>)> {
    let dir = ctx.dir(GEN_PAIRS);
    let mut inputs = Vec::new();
    let mut read = |name: &str| -> CliResult<Vec<QueryDocPair>> {
        let path = dir.join(format!("{name}.jsonl"));
        if !path.exists() {
            return Ok(Vec::new());
        }
        let rows = pair_gen::read_pairs(&path)?;
        inputs.push(path);
        Ok(rows)
    };
    let sources = PairSources {
        get: read("get")?,
        sid: read("sid")?,
        drmm: read("drmm")?,
    };
    Ok((sources, inputs))
}

pub fn cmd_train_biencoder(ctx: &Ctx) -> CliResult<()> {
    let needs_docsim = ctx.config.ablations.iter().any(|a| a.docsim);
    let mut upstream = vec![SYNTH, BUILD_GRAPH, GEN_PAIRS];
    if needs_docsim {
        upstream.push(TRAIN_DOCSIM);
    }
    ctx.require(&upstream)?;
    let started = Instant::now();
    ctx.fresh(TRAIN_BIENCODER)?;
    let texts = ctx.load_texts()?;
    let (sources, mut inputs) = load_pair_sources(ctx)?;
    inputs.push(ctx.texts_path());
    let base = ctx.base_encoder()?;
    let docsim = if needs_docsim {
        let d = ctx.docsim_encoder_dir();
        inputs.extend(files_below(&d)?);
        Some(EncoderParams::load(&d)?)
    } else {
        None
    };
    for comp in &ctx.config.ablations {
        let start = match (&docsim, comp.docsim) {
            (Some(d), true) => d,
            _ => &base,
        };
        let out = ctx.biencoder_dir(comp);
        if comp.has_pairs() {
            let (pairs, _) = sources.compose(comp);
            if pairs.is_empty() {
                return Err(CliError::Missing(format!(
                    "{} has no training pairs; check gen-pairs output",
                    comp.label()
                )));
            }
            let (enc, log) = train_biencoder(start, &pairs, &texts, &ctx.config.biencoder)?;
            enc.save(&out.join("encoder"))?;
            write_json(&out.join("train_log.json"), &log)?;
        } else {
            start.save(&out.join("encoder"))?;
        }
        write_json(&out.join("composition.json"), comp)?;
    }
    let config = serde_json::json!({
        "biencoder": ctx.config.biencoder,
        "encoder": ctx.config.encoder,
        "ablations": ctx.config.ablations,
    });
    ctx.finish(TRAIN_BIENCODER, config, &inputs, started)
}

pub fn cmd_evaluate(ctx: &Ctx) -> CliResult<PipelineReport> {
    if Manifest::read(&ctx.dir(TRAIN_BIENCODER)).is_err() {
        return Err(CliError::Missing("no trained encoder; run train-biencoder first".into()));
    }
    ctx.require(&[SYNTH, TRAIN_BIENCODER])?;
    let started = Instant::now();
    let dir = ctx.fresh(EVALUATE)?;
    let (bench, mut inputs) = ctx.load_benchmark()?;
    let mut rows = Vec::new();
    for comp in &ctx.config.ablations {
        let enc_dir = ctx.biencoder_dir(comp).join("encoder");
        if !enc_dir.exists() {
            return Err(CliError::Missing(format!(
                "no encoder for {}; run train-biencoder first",
                comp.label()
            )));
        }
        let enc = EncoderParams::load(&enc_dir)?;
        inputs.extend(files_below(&enc_dir)?);
        rows.push(AblationRow {
            label: comp.label(),
            composition: *comp,
            report: evaluate_run(&enc, &bench)?,
        });
    }
    let report = PipelineReport {
        seed: ctx.config.seed,
        rows,
    };
    write_json(&dir.join("report.json"), &report)?;
    std::fs::write(dir.join("table.txt"), report.table()).map_err(|e| io_err(&dir.join("table.txt"), e))?;
    let config = serde_json::json!({ "ablations": ctx.config.ablations, "k": ir_eval::DEFAULT_K });
    ctx.finish(EVALUATE, config, &inputs, started)?;
    Ok(report)
}

/// Every stage in order. `train-docsim` runs only when an ablation needs it.
pub fn cmd_pipeline(ctx: &Ctx) -> CliResult<PipelineReport> {
    cmd_synth(ctx)?;
    cmd_build_graph(ctx)?;
    cmd_train_ge(ctx)?;
    cmd_sample_triplets(ctx)?;
    if ctx.config.ablations.iter().any(|a| a.docsim) {
        cmd_train_docsim(ctx)?;
    }
    cmd_gen_pairs(ctx)?;
    cmd_train_biencoder(ctx)?;
    cmd_evaluate(ctx)
}

/// Reads a report written by `evaluate`.
pub fn read_report(out: &Path) -> CliResult<PipelineReport> {
    let path = out.join(stage_dir_name(EVALUATE)).join("report.json");
    let raw = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&raw).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
