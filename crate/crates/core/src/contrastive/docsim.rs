use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::triplet_loss_grad;
use super::optim::{Optimizer, OptimizerConfig};
use super::TrainLog;
use crate::encoder::{EncoderParams, SparseGrad, TokenFeatures};
use crate::error::{Error, Result};
use crate::triplets::TripletSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocSimConfig {
    pub margin: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for DocSimConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            epochs: 3,
            learning_rate: 2.0,
            batch_size: 16,
            rng_seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl DocSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config("docsim margin must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("docsim batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("docsim learning_rate must be > 0".into()));
        }
        self.optimizer.validate()
    }
}

/// Features for every id in `ids`, failing on the first id without text.
pub(crate) fn featurize_ids<'a>(
    p: &EncoderParams,
    ids: impl IntoIterator<Item = &'a str>,
    texts: &HashMap<String, String>,
) -> Result<HashMap<String, TokenFeatures>> {
    let ids: BTreeSet<&str> = ids.into_iter().collect();
    let resolved = ids
        .into_iter()
        .map(|id| {
            texts
                .get(id)
                .map(|t| (id, t.as_str()))
                .ok_or_else(|| Error::UnknownNode(id.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(resolved
        .par_iter()
        .map(|(id, t)| (id.to_string(), p.featurize(t)))
        .collect())
}

fn mean_loss(p: &EncoderParams, set: &TripletSet, feats: &HashMap<String, TokenFeatures>, margin: f64) -> Result<f64> {
    let losses = set
        .triplets
        .par_iter()
        .map(|t| {
            let enc = |id: &str| p.encode_features(&feats[id]);
            triplet_loss_grad(&enc(&t.query_id), &enc(&t.pos_id), &enc(&t.neg_id), margin).map(|g| g.loss)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Fine-tunes the encoder on document triplets with the triplet margin loss.
pub fn train_docsim(
    p: &EncoderParams,
    set: &TripletSet,
    texts: &HashMap<String, String>,
    cfg: &DocSimConfig,
) -> Result<(EncoderParams, TrainLog)> {
    cfg.validate()?;
    let feats = featurize_ids(
        p,
        set.triplets
            .iter()
            .flat_map(|t| [t.query_id.as_str(), t.pos_id.as_str(), t.neg_id.as_str()]),
        texts,
    )?;
    let mut params = p.clone();
    let initial = mean_loss(&params, set, &feats, cfg.margin)?;
    let mut log = TrainLog {
        initial_loss: initial,
        final_loss: initial,
        ..Default::default()
    };
    if cfg.epochs == 0 || set.is_empty() {
        return Ok((params, log));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // per-item terms in parallel, reduced in batch order
            let terms = batch
                .par_iter()
                .map(|&i| {
                    let t = &set.triplets[i];
                    let enc = |id: &str| params.encode_features(&feats[id]);
                    triplet_loss_grad(&enc(&t.query_id), &enc(&t.pos_id), &enc(&t.neg_id), cfg.margin)
                })
                .collect::<Result<Vec<_>>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut grads = SparseGrad::new();
            for (&i, g) in batch.iter().zip(&terms) {
                total += g.loss;
                if g.loss == 0.0 {
                    continue;
                }
                let t = &set.triplets[i];
                for (id, v) in [(&t.query_id, &g.query), (&t.pos_id, &g.positive), (&t.neg_id, &g.negative)] {
                    let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
                    params.backprop(&feats[id.as_str()], &scaled, &mut grads);
                }
            }
            opt.step(&mut params, &grads, cfg.learning_rate);
            log.steps += 1;
        }
        let mean = total / set.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("docsim loss in epoch {epoch}")));
        }
        log::debug!("docsim epoch {epoch}: mean loss {mean:.6}");
        log.epoch_losses.push(mean);
    }
    log.final_loss = mean_loss(&params, set, &feats, cfg.margin)?;
    Ok((params, log))
}
