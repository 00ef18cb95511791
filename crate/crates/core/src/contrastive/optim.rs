use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, SparseGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    /// Lazy Adam: moments are kept only for rows that received gradient.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Decoupled decay, applied to the rows touched by a step.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if self.kind == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return Err(Error::Config("adam needs betas in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    t: i32,
    moments: HashMap<u32, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// Applies one update. Rows are visited in feature-id order.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &SparseGrad, lr: f64) {
        self.t = self.t.saturating_add(1);
        let wd = self.cfg.weight_decay;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (&f, g) in grads {
                    for (w, g) in params.row_mut(f).iter_mut().zip(g) {
                        *w -= lr * (g + wd * *w);
                    }
                }
            }
            OptimizerKind::Adam => {
                let OptimizerConfig { beta1, beta2, eps, .. } = self.cfg;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (&f, g) in grads {
                    let (m, v) = self
                        .moments
                        .entry(f)
                        .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
                    let row = params.row_mut(f);
                    for i in 0..g.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                        row[i] -= lr * (update + wd * row[i]);
                    }
                }
            }
        }
    }
}
