//! Hashed bag-of-features text encoder: lowercased word unigrams plus
//! boundary-marked character 3-grams, mean-pooled over a trainable table.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemb;
use crate::text;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_BUCKETS: usize = 1 << 16;
pub const HASH_ALGO: &str = "fnv1a-64";

pub fn fnv1a64(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Multiset of hashed feature ids, in text order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenFeatures {
    pub ids: Vec<u32>,
}

impl TokenFeatures {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature id -> multiplicity.
    pub fn counts(&self) -> BTreeMap<u32, usize> {
        let mut c = BTreeMap::new();
        for &id in &self.ids {
            *c.entry(id).or_default() += 1;
        }
        c
    }
}

pub fn featurize(text: &str, vocab_buckets: usize) -> TokenFeatures {
    let bucket = |tag: &[u8], s: &str| (fnv1a64(&[tag, s.as_bytes()]) % vocab_buckets as u64) as u32;
    let mut ids = Vec::new();
    for word in text::words(text) {
        ids.push(bucket(b"w:", &word));
        let marked: Vec<char> = std::iter::once('<')
            .chain(word.chars())
            .chain(std::iter::once('>'))
            .collect();
        for gram in marked.windows(3) {
            ids.push(bucket(b"g:", &gram.iter().collect::<String>()));
        }
    }
    TokenFeatures { ids }
}

/// Sparse per-row gradient accumulator keyed by feature id.
pub type SparseGrad = BTreeMap<u32, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    dim: usize,
    vocab_buckets: usize,
    table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderHeader {
    pub dim: usize,
    pub vocab_buckets: usize,
    pub hash_algo: String,
}

impl EncoderParams {
    /// Seeded Gaussian initialization with standard deviation `1/sqrt(dim)`.
    pub fn new(dim: usize, vocab_buckets: usize, seed: u64) -> Result<Self> {
        if dim == 0 || vocab_buckets == 0 {
            return Err(Error::Config("encoder dim and vocab_buckets must be positive".into()));
        }
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("positive std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..dim * vocab_buckets).map(|_| normal.sample(&mut rng)).collect();
        Ok(EncoderParams {
            dim,
            vocab_buckets,
            table,
        })
    }

    pub fn from_table(dim: usize, vocab_buckets: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != dim * vocab_buckets {
            return Err(Error::DimensionMismatch {
                expected: dim * vocab_buckets,
                actual: table.len(),
            });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder table".into()));
        }
        Ok(EncoderParams {
            dim,
            vocab_buckets,
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_buckets(&self) -> usize {
        self.vocab_buckets
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row(&self, f: u32) -> &[f64] {
        let f = f as usize;
        &self.table[f * self.dim..(f + 1) * self.dim]
    }

    pub fn row_mut(&mut self, f: u32) -> &mut [f64] {
        let f = f as usize;
        &mut self.table[f * self.dim..(f + 1) * self.dim]
    }

    pub fn featurize(&self, text: &str) -> TokenFeatures {
        featurize(text, self.vocab_buckets)
    }

    /// Mean of the feature rows with multiplicity; zero for no features.
    pub fn encode_features(&self, features: &TokenFeatures) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if features.is_empty() {
            return out;
        }
        for &f in &features.ids {
            for (o, v) in out.iter_mut().zip(self.row(f)) {
                *o += v;
            }
        }
        let n = features.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_features(&self.featurize(text))
    }

    /// Row `i` equals `encode(texts[i])`.
    pub fn encode_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Vec<Vec<f64>> {
        texts.par_iter().map(|t| self.encode(t.as_ref())).collect()
    }

    /// Pushes `d loss / d vector` back onto the rows of `features`.
    pub fn backprop(&self, features: &TokenFeatures, grad: &[f64], sink: &mut SparseGrad) {
        if features.is_empty() {
            return;
        }
        let n = features.len() as f64;
        for (f, count) in features.counts() {
            let scale = count as f64 / n;
            let row = sink.entry(f).or_insert_with(|| vec![0.0; self.dim]);
            for (r, g) in row.iter_mut().zip(grad) {
                *r += scale * g;
            }
        }
    }

    pub fn header(&self) -> EncoderHeader {
        EncoderHeader {
            dim: self.dim,
            vocab_buckets: self.vocab_buckets,
            hash_algo: HASH_ALGO.to_string(),
        }
    }

    /// Writes `encoder.json` and `encoder.gemb` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("encoder.json");
        let json = serde_json::to_vec_pretty(&self.header()).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        gemb::write(&dir.join("encoder.gemb"), self.vocab_buckets, self.dim, &self.table)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("encoder.json");
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let header: EncoderHeader =
            serde_json::from_slice(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if header.hash_algo != HASH_ALGO {
            return Err(Error::Format(format!("unsupported hash {}", header.hash_algo)));
        }
        let (rows, dim, table) = gemb::read(&dir.join("encoder.gemb"))?;
        if rows != header.vocab_buckets || dim != header.dim {
            return Err(Error::Format("encoder header and matrix disagree".into()));
        }
        Self::from_table(dim, rows, table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(&[b""]), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(&[b"a"]), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(&[b"foo", b"bar"]), fnv1a64(&[b"foobar"]));
    }

    #[test]
    fn empty_text_has_no_features() {
        assert!(featurize("", 1024).is_empty());
        assert!(featurize(" ,; ", 1024).is_empty());
    }

    #[test]
    fn case_folding() {
        assert_eq!(featurize("Pumpe", 1 << 16), featurize("pumpe", 1 << 16));
    }

    #[test]
    fn hand_counted_features() {
        // lömi: 1 word + <lö löm ömi mi> = 5; leckt: 1 + <le lec eck ckt kt> = 6
        let f = featurize("Lömi leckt", 1 << 16);
        assert_eq!(f.len(), 11);
        let word = (fnv1a64(&[b"w:", "lömi".as_bytes()]) % (1 << 16)) as u32;
        let gram = (fnv1a64(&[b"g:", "<lö".as_bytes()]) % (1 << 16)) as u32;
        assert_eq!(&f.ids[..2], &[word, gram]);
    }

    #[test]
    fn mean_pooling() {
        let p = EncoderParams::from_table(2, 4, vec![1.0, 0.0, 0.0, 1.0, 5.0, 5.0, 7.0, 7.0]).unwrap();
        assert_eq!(p.encode(""), vec![0.0, 0.0]);
        assert_eq!(p.encode_features(&TokenFeatures { ids: vec![2] }), vec![5.0, 5.0]);
        assert_eq!(p.encode_features(&TokenFeatures { ids: vec![0, 1] }), vec![0.5, 0.5]);
    }

    #[test]
    fn batch_matches_loop() {
        let p = EncoderParams::new(8, 256, 1).unwrap();
        let texts = ["Pumpe undicht", "Lömi Leitung", "", "Pumpe undicht"];
        let batch = p.encode_batch(&texts);
        let looped: Vec<Vec<f64>> = texts.iter().map(|t| p.encode(t)).collect();
        assert_eq!(batch, looped);
        assert_eq!(batch[0], batch[3]);
        assert!(p.encode_batch::<&str>(&[]).is_empty());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(EncoderParams::new(4, 16, 9).unwrap(), EncoderParams::new(4, 16, 9).unwrap());
        assert_ne!(EncoderParams::new(4, 16, 9).unwrap(), EncoderParams::new(4, 16, 10).unwrap());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = EncoderParams::from_table(2, 3, vec![0.5, 1.0, -2.0, 0.25, 0.0, 8.0]).unwrap();
        p.save(dir.path()).unwrap();
        assert_eq!(EncoderParams::load(dir.path()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn perturbing_one_row_is_lipschitz(
            text in "[a-zäöü ]{0,40}",
            pick in 0usize..1000,
            delta in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let mut p = EncoderParams::new(4, 64, 3).unwrap();
            let feats = p.featurize(&text);
            prop_assume!(!feats.is_empty());
            let row = feats.ids[pick % feats.len()];
            let mult = feats.ids.iter().filter(|&&f| f == row).count() as f64;
            let before = p.encode(&text);
            crate::vecmath::add_scaled(p.row_mut(row), &delta, 1.0);
            let after = p.encode(&text);
            let moved = crate::vecmath::l2_distance(&before, &after);
            let bound = crate::vecmath::norm(&delta) * mult / feats.len() as f64;
            prop_assert!(moved <= bound + 1e-12);
        }
    }
}
