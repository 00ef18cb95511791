use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::mnr_loss_grad;
use super::optim::{Optimizer, OptimizerConfig};
use super::TrainLog;
use crate::encoder::{EncoderParams, SparseGrad, TokenFeatures};
use crate::error::{Error, Result};
use crate::pair_gen::{Label, QueryDocPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiEncoderConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub scale: f64,
    pub learning_rate: f64,
    pub rng_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for BiEncoderConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            warmup_steps: 1000,
            scale: 20.0,
            learning_rate: 0.5,
            rng_seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl BiEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("biencoder batch_size must be >= 1".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Config("biencoder similarity scale must be > 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("biencoder learning_rate must be > 0".into()));
        }
        self.optimizer.validate()
    }
}

/// Linear warmup over the first `warmup` steps (1-based), constant after.
pub fn warmup_lr(base: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

/// Splits positives into batches of at most `size` with no query twice in
/// a batch. A duplicate is deferred to a later batch, keeping the
/// relative order of everything else.
pub fn assemble_batches(positives: &[usize], queries: &[&str], size: usize) -> Vec<Vec<usize>> {
    let mut queue: VecDeque<usize> = positives.iter().copied().collect();
    let mut batches = Vec::new();
    while !queue.is_empty() {
        let mut batch = Vec::with_capacity(size);
        let mut seen = HashSet::new();
        let mut deferred = Vec::new();
        while batch.len() < size {
            let Some(i) = queue.pop_front() else { break };
            if seen.insert(queries[i]) {
                batch.push(i);
            } else {
                deferred.push(i);
            }
        }
        for i in deferred.into_iter().rev() {
            queue.push_front(i);
        }
        batches.push(batch);
    }
    batches
}

struct Prepared<'a> {
    queries: Vec<&'a str>,
    docs: Vec<&'a str>,
    positives: Vec<usize>,
    negatives: HashMap<&'a str, Vec<&'a str>>,
    feats: HashMap<&'a str, TokenFeatures>,
    doc_feats: HashMap<&'a str, TokenFeatures>,
}

fn prepare<'a>(p: &EncoderParams, pairs: &'a [QueryDocPair], texts: &'a HashMap<String, String>) -> Result<Prepared<'a>> {
    let mut doc_text: BTreeMap<&str, &str> = BTreeMap::new();
    for pair in pairs {
        let t = texts
            .get(&pair.doc_id)
            .ok_or_else(|| Error::UnknownNode(pair.doc_id.clone()))?;
        doc_text.insert(&pair.doc_id, t);
    }
    let doc_list: Vec<(&str, &str)> = doc_text.into_iter().collect();
    let doc_feats: HashMap<&str, TokenFeatures> = doc_list.par_iter().map(|(id, t)| (*id, p.featurize(t))).collect();
    let mut qset: Vec<&str> = pairs.iter().map(|x| x.query.as_str()).collect();
    qset.sort_unstable();
    qset.dedup();
    let feats: HashMap<&str, TokenFeatures> = qset.par_iter().map(|q| (*q, p.featurize(q))).collect();

    let mut prep = Prepared {
        queries: Vec::new(),
        docs: Vec::new(),
        positives: Vec::new(),
        negatives: HashMap::new(),
        feats,
        doc_feats,
    };
    let mut dropped = 0usize;
    for pair in pairs {
        if prep.feats[pair.query.as_str()].is_empty() || prep.doc_feats[pair.doc_id.as_str()].is_empty() {
            dropped += 1;
            continue;
        }
        match pair.label {
            Label::Positive => {
                prep.positives.push(prep.queries.len());
                prep.queries.push(&pair.query);
                prep.docs.push(&pair.doc_id);
            }
            Label::Negative => {
                let list = prep.negatives.entry(&pair.query).or_default();
                if !list.contains(&pair.doc_id.as_str()) {
                    list.push(&pair.doc_id);
                }
            }
        }
    }
    if dropped > 0 {
        log::warn!("biencoder: {dropped} pairs without any features dropped");
    }
    if prep.positives.is_empty() {
        return Err(Error::EmptyInput("no positive query-document pairs".into()));
    }
    Ok(prep)
}

/// Loss and gradients for one batch. Candidates are the batch's positive
/// docs followed by the explicit negatives of its queries, deduplicated by id.
fn batch_step(p: &EncoderParams, prep: &Prepared, batch: &[usize], scale: f64, grads: Option<&mut SparseGrad>) -> Result<f64> {
    let mut cand: Vec<&str> = Vec::new();
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut targets = Vec::with_capacity(batch.len());
    for &i in batch {
        let d = prep.docs[i];
        let at = *slot.entry(d).or_insert(cand.len());
        if at == cand.len() {
            cand.push(d);
        }
        targets.push(at);
    }
    for &i in batch {
        for &d in prep.negatives.get(prep.queries[i]).into_iter().flatten() {
            if !slot.contains_key(d) {
                slot.insert(d, cand.len());
                cand.push(d);
            }
        }
    }
    let qv: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&i| p.encode_features(&prep.feats[prep.queries[i]]))
        .collect();
    let dv: Vec<Vec<f64>> = cand.par_iter().map(|d| p.encode_features(&prep.doc_feats[d])).collect();
    let g = mnr_loss_grad(&qv, &dv, &targets, scale)?;
    if let Some(sink) = grads {
        for (&i, gq) in batch.iter().zip(&g.queries) {
            p.backprop(&prep.feats[prep.queries[i]], gq, sink);
        }
        for (d, gd) in cand.iter().zip(&g.docs) {
            p.backprop(&prep.doc_feats[d], gd, sink);
        }
    }
    Ok(g.loss)
}

fn mean_batch_loss(p: &EncoderParams, prep: &Prepared, batches: &[Vec<usize>], scale: f64) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        total += batch_step(p, prep, b, scale, None)?;
    }
    Ok(total / batches.len() as f64)
}

/// Trains the encoder on (query, positive doc) pairs with the multiple
/// negatives ranking loss. `texts` maps doc ids to text.
pub fn train_biencoder(
    p: &EncoderParams,
    pairs: &[QueryDocPair],
    texts: &HashMap<String, String>,
    cfg: &BiEncoderConfig,
) -> Result<(EncoderParams, TrainLog)> {
    cfg.validate()?;
    let prep = prepare(p, pairs, texts)?;
    // loss reported before and after training uses one fixed batching
    let probe = assemble_batches(&prep.positives, &prep.queries, cfg.batch_size);
    let mut params = p.clone();
    let initial = mean_batch_loss(&params, &prep, &probe, cfg.scale)?;
    let mut log = TrainLog {
        initial_loss: initial,
        final_loss: initial,
        ..Default::default()
    };
    if cfg.epochs == 0 {
        return Ok((params, log));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut order = prep.positives.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batches = assemble_batches(&order, &prep.queries, cfg.batch_size);
        let mut total = 0.0;
        for b in &batches {
            let mut grads = SparseGrad::new();
            total += batch_step(&params, &prep, b, cfg.scale, Some(&mut grads))?;
            log.steps += 1;
            opt.step(&mut params, &grads, warmup_lr(cfg.learning_rate, log.steps, cfg.warmup_steps));
        }
        let mean = total / batches.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("biencoder loss in epoch {epoch}")));
        }
        log::debug!("biencoder epoch {epoch}: mean loss {mean:.6}");
        log.epoch_losses.push(mean);
    }
    log.final_loss = mean_batch_loss(&params, &prep, &probe, cfg.scale)?;
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair_gen::Source;
    use crate::vecmath;

    fn pos(q: &str, d: &str) -> QueryDocPair {
        QueryDocPair {
            query: q.into(),
            doc_id: d.into(),
            label: Label::Positive,
            source: Source::Sid,
        }
    }

    #[test]
    fn warmup_is_linear() {
        assert_eq!(warmup_lr(0.2, 500, 1000), 0.1);
        assert_eq!(warmup_lr(0.2, 1000, 1000), 0.2);
        assert_eq!(warmup_lr(0.2, 5000, 1000), 0.2);
        assert_eq!(warmup_lr(0.2, 1, 0), 0.2);
    }

    #[test]
    fn duplicate_queries_are_spread() {
        let queries = ["a", "a", "b", "a", "c"];
        let batches = assemble_batches(&[0, 1, 2, 3, 4], &queries, 2);
        for b in &batches {
            let uniq: HashSet<_> = b.iter().map(|&i| queries[i]).collect();
            assert_eq!(uniq.len(), b.len());
        }
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn no_positives_errors() {
        let p = EncoderParams::new(8, 64, 0).unwrap();
        let mut neg = pos("q", "d");
        neg.label = Label::Negative;
        let texts = HashMap::from([("d".to_string(), "text".to_string())]);
        assert!(train_biencoder(&p, &[neg], &texts, &BiEncoderConfig::default()).is_err());
    }

    type Toy = (Vec<QueryDocPair>, HashMap<String, String>, Vec<(String, String)>);

    fn toy() -> Toy {
        let topics = [
            ("pumpe leckt", "die pumpe leckt am flansch öl tritt aus"),
            ("ventil klemmt", "ventil klemmt beim schließen hängt fest"),
            ("motor heiß", "motor wird sehr heiß lager prüfen"),
            ("filter verstopft", "filter verstopft druck steigt an"),
            ("kühlwasser fehlt", "kühlwasser durchfluss fehlt alarm"),
            ("rührer steht", "rührer steht still antrieb defekt"),
            ("sensor ausfall", "sensor ausfall signal fehlt messung"),
            ("dichtung tauschen", "dichtung undicht tauschen angeordnet"),
            ("tank voll", "tank voll stand hoch abpumpen"),
            ("zentrifuge vibriert", "zentrifuge vibriert unwucht prüfen"),
        ];
        let mut texts = HashMap::new();
        let mut pairs = Vec::new();
        let mut gold = Vec::new();
        for (i, (q, d)) in topics.iter().enumerate() {
            let id = format!("d{i}");
            texts.insert(id.clone(), d.to_string());
            pairs.push(pos(q, &id));
            gold.push((q.to_string(), id));
        }
        (pairs, texts, gold)
    }

    fn mrr(p: &EncoderParams, texts: &HashMap<String, String>, gold: &[(String, String)]) -> f64 {
        let mut ids: Vec<&String> = texts.keys().collect();
        ids.sort();
        let dv: Vec<Vec<f64>> = ids.iter().map(|id| p.encode(&texts[*id])).collect();
        let mut total = 0.0;
        for (q, want) in gold {
            let qv = p.encode(q);
            let mut scored: Vec<(f64, &String)> = ids.iter().zip(&dv).map(|(id, d)| (vecmath::cosine(&qv, d), *id)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
            let rank = scored.iter().position(|s| s.1 == want).unwrap() + 1;
            if rank <= 10 {
                total += 1.0 / rank as f64;
            }
        }
        total / gold.len() as f64
    }

    #[test]
    fn toy_retrieval_improves() {
        let (pairs, texts, gold) = toy();
        let p = EncoderParams::new(16, 4096, 7).unwrap();
        let cfg = BiEncoderConfig {
            epochs: 30,
            batch_size: 4,
            warmup_steps: 10,
            ..Default::default()
        };
        let (trained, log) = train_biencoder(&p, &pairs, &texts, &cfg).unwrap();
        let (before, after) = (mrr(&p, &texts, &gold), mrr(&trained, &texts, &gold));
        assert!(after > before, "{before} -> {after}");
        assert!(log.final_loss < log.initial_loss);
    }

    #[test]
    fn zero_epochs_identity_and_determinism() {
        let (pairs, texts, _) = toy();
        let p = EncoderParams::new(8, 256, 1).unwrap();
        let zero = BiEncoderConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(train_biencoder(&p, &pairs, &texts, &zero).unwrap().0, p);
        let cfg = BiEncoderConfig {
            epochs: 2,
            batch_size: 3,
            ..Default::default()
        };
        let a = train_biencoder(&p, &pairs, &texts, &cfg).unwrap();
        let b = train_biencoder(&p, &pairs, &texts, &cfg).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn explicit_negatives_join_candidates() {
        let (mut pairs, texts, _) = toy();
        pairs.push(QueryDocPair {
            query: "pumpe leckt".into(),
            doc_id: "d3".into(),
            label: Label::Negative,
            source: Source::Get,
        });
        let p = EncoderParams::new(8, 256, 1).unwrap();
        let prep = prepare(&p, &pairs, &texts).unwrap();
        assert_eq!(prep.negatives["pumpe leckt"], vec!["d3"]);
        // a lone query still has a negative to compete against
        let loss = batch_step(&p, &prep, &[0], 20.0, None).unwrap();
        assert!(loss > 0.0);
    }
}
