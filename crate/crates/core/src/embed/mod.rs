//! Shallow graph embeddings trained by margin ranking, and their
//! link-prediction evaluation.

mod eval;
mod table;
mod train;

pub use eval::{eval_link_prediction, split_edges, CandidatePool, LpReport};
pub use table::{init_embeddings, EmbeddingTable, InitMode};
pub use train::{ranking_loss_grad, train_graph_embeddings, GeTrainConfig, RankingGrad};

#[cfg(test)]
mod tests;
