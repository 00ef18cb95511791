// `!(x > 0.0)` is how config validation rejects NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ann;
pub mod contrastive;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod gemb;
pub mod ir_eval;
pub mod jsonl;
pub mod kg;
pub mod pair_gen;
pub mod synth;
pub mod text;
pub mod triplets;
pub mod vecmath;

pub use error::{Error, Result};
