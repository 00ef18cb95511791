//! Contrastive fine-tuning of the text encoder: document-similarity
//! training with the triplet margin loss, then bi-encoder training with the
//! multiple negatives ranking loss.

mod biencoder;
mod docsim;
mod gradcheck;
mod loss;
mod optim;

use serde::{Deserialize, Serialize};

pub use biencoder::{assemble_batches, train_biencoder, warmup_lr, BiEncoderConfig};
pub use docsim::{train_docsim, DocSimConfig};
pub use gradcheck::{finite_diff_check, REL_FLOOR};
pub use loss::{mnr_loss, mnr_loss_grad, triplet_loss, triplet_loss_grad, MnrGrad, TripletGrad};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub steps: usize,
}
