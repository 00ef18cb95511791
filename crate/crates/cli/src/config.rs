use std::path::{Path, PathBuf};

use graphtrip_core::contrastive::{BiEncoderConfig, DocSimConfig};
use graphtrip_core::embed::{GeTrainConfig, InitMode};
use graphtrip_core::encoder::{DEFAULT_BUCKETS, DEFAULT_DIM};
use graphtrip_core::pair_gen::FilterThresholds;
use graphtrip_core::synth::{self, PlantConfig};
use graphtrip_core::triplets::SamplingParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub vocab_buckets: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            vocab_buckets: DEFAULT_BUCKETS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairGenConfig {
    /// Terms per extractive query.
    pub query_terms: usize,
    pub filter: bool,
    pub thresholds: FilterThresholds,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        Self {
            query_terms: 4,
            filter: false,
            thresholds: FilterThresholds::default(),
        }
    }
}

/// Which training stages and pair sources a bi-encoder run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(default)]
pub struct Composition {
    pub docsim: bool,
    pub drmm: bool,
    pub sid: bool,
    pub get: bool,
}

impl Default for Composition {
    fn default() -> Self {
        Self {
            docsim: false,
            drmm: false,
            sid: true,
            get: true,
        }
    }
}

impl Composition {
    pub const fn new(docsim: bool, sid: bool, get: bool) -> Self {
        Self {
            docsim,
            drmm: false,
            sid,
            get,
        }
    }

    pub fn has_pairs(&self) -> bool {
        self.drmm || self.sid || self.get
    }

    /// e.g. `SID+GET`, `docsim + DRMM+SID+GET`, `untrained`.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [(self.drmm, "DRMM"), (self.sid, "SID"), (self.get, "GET")]
            .iter()
            .filter(|p| p.0)
            .map(|p| p.1)
            .collect();
        match (self.docsim, parts.is_empty()) {
            (false, true) => "untrained".to_string(),
            (true, true) => "docsim".to_string(),
            (false, false) => parts.join("+"),
            (true, false) => format!("docsim + {}", parts.join("+")),
        }
    }

    /// File-system safe form of the label.
    pub fn slug(&self) -> String {
        self.label().replace(" + ", "_").replace('+', "-")
    }
}

/// Per-stage seeds that bypass derivation from the global seed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedOverrides {
    pub synth: Option<u64>,
    pub ge: Option<u64>,
    pub sampling: Option<u64>,
    pub encoder: Option<u64>,
    pub docsim: Option<u64>,
    pub biencoder: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Empty means the default seven-plant benchmark.
    pub plants: Vec<PlantConfig>,
    pub link_enrichment: bool,
    pub ge: GeTrainConfig,
    pub sampling: SamplingParams,
    pub encoder: EncoderConfig,
    pub docsim: DocSimConfig,
    pub pairs: PairGenConfig,
    pub biencoder: BiEncoderConfig,
    /// Optional external DRMM pair file.
    pub drmm_pairs: Option<PathBuf>,
    pub ablations: Vec<Composition>,
    pub seed_overrides: SeedOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            plants: Vec::new(),
            link_enrichment: true,
            // a wider margin than the library default keeps training until
            // logs cluster around their FL, which the samplers rely on
            ge: GeTrainConfig {
                init_mode: InitMode::TextVectors,
                ranking_margin: 0.6,
                ..Default::default()
            },
            sampling: SamplingParams::default(),
            encoder: EncoderConfig::default(),
            docsim: DocSimConfig::default(),
            pairs: PairGenConfig::default(),
            biencoder: BiEncoderConfig {
                warmup_steps: 100,
                ..Default::default()
            },
            drmm_pairs: None,
            ablations: vec![
                Composition::new(false, false, false),
                Composition::new(false, true, false),
                Composition::new(false, true, true),
                Composition::new(true, true, true),
            ],
            seed_overrides: SeedOverrides::default(),
        }
    }
}

/// Deterministic per-stage seed from a base seed and a tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Fills in default plants and replaces every stage seed by one derived
    /// from the global seed, unless overridden.
    pub fn resolved(&self) -> CliResult<Self> {
        let mut c = self.clone();
        let seed_for = |over: Option<u64>, tag: &str| over.unwrap_or_else(|| derive_seed(c.seed, tag));
        let synth_seed = seed_for(c.seed_overrides.synth, "synth");
        if c.plants.is_empty() {
            c.plants = synth::default_benchmark_configs(synth_seed);
        }
        for (i, p) in c.plants.iter_mut().enumerate() {
            p.seed = derive_seed(synth_seed, &format!("plant{i}"));
        }
        c.ge.rng_seed = seed_for(c.seed_overrides.ge, "ge");
        c.sampling.rng_seed = seed_for(c.seed_overrides.sampling, "sampling");
        c.docsim.rng_seed = seed_for(c.seed_overrides.docsim, "docsim");
        c.biencoder.rng_seed = seed_for(c.seed_overrides.biencoder, "biencoder");
        c.validate()?;
        Ok(c)
    }

    pub fn encoder_seed(&self) -> u64 {
        self.seed_overrides
            .encoder
            .unwrap_or_else(|| derive_seed(self.seed, "encoder"))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.ge.validate()?;
        self.sampling.validate()?;
        self.docsim.validate()?;
        self.biencoder.validate()?;
        for p in &self.plants {
            p.validate()?;
        }
        if self.encoder.dim < 2 || self.encoder.vocab_buckets == 0 {
            return Err(CliError::Config("encoder needs dim >= 2 and at least one bucket".into()));
        }
        if self.pairs.query_terms == 0 {
            return Err(CliError::Config("pairs.query_terms must be >= 1".into()));
        }
        if self.ablations.is_empty() {
            return Err(CliError::Config("at least one ablation is required".into()));
        }
        let mut labels: Vec<String> = self.ablations.iter().map(Composition::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("duplicate ablation".into()));
        }
        if self.ablations.iter().any(|a| a.drmm) && self.drmm_pairs.is_none() {
            return Err(CliError::Config("an ablation uses DRMM but drmm_pairs is not set".into()));
        }
        Ok(())
    }

    /// Seed for a per-plant stage.
    pub fn plant_seed(stage_seed: u64, plant: &str) -> u64 {
        derive_seed(stage_seed, plant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_composition() {
        assert_eq!(Composition::new(false, false, false).label(), "untrained");
        assert_eq!(Composition::new(false, true, false).label(), "SID");
        assert_eq!(Composition::new(false, true, true).label(), "SID+GET");
        assert_eq!(Composition::new(true, true, true).label(), "docsim + SID+GET");
        assert_eq!(Composition::new(true, true, true).slug(), "docsim_SID-GET");
        let all = Composition {
            docsim: false,
            drmm: true,
            sid: true,
            get: true,
        };
        assert_eq!(all.label(), "DRMM+SID+GET");
    }

    #[test]
    fn seeds_propagate_unless_overridden() {
        let a = RunConfig::default().resolved().unwrap();
        let b = RunConfig {
            seed: 1,
            ..Default::default()
        }
        .resolved()
        .unwrap();
        assert_ne!(a.ge.rng_seed, b.ge.rng_seed);
        assert_ne!(a.plants[0].seed, b.plants[0].seed);
        let pinned = RunConfig {
            seed: 1,
            seed_overrides: SeedOverrides {
                ge: Some(a.ge.rng_seed),
                ..Default::default()
            },
            ..Default::default()
        }
        .resolved()
        .unwrap();
        assert_eq!(pinned.ge.rng_seed, a.ge.rng_seed);
        assert_eq!(a, RunConfig::default().resolved().unwrap());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        let partial: RunConfig = serde_json::from_str("{\"seed\": 5}").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.ablations.len(), 4);
    }

    #[test]
    fn drmm_needs_a_file() {
        let mut c = RunConfig::default();
        c.ablations.push(Composition {
            drmm: true,
            ..Default::default()
        });
        assert!(matches!(c.resolved(), Err(CliError::Config(_))));
    }
}
