//! Heterogeneous plant knowledge graph: text logs and functional locations
//! joined by `related_to`, `reports_about` and `part_of` edges.

mod expand;
mod graph;
mod io;
mod links;

pub use expand::expand_context;
pub use graph::{build_graph, Edge, KnowledgeGraph, Node, NodeKind, Relation};
pub use io::{load_graph, save_graph};
pub use links::{predict_links, LexicalMatcher, LinkMatcher, LinkReport, NoopMatcher, RejectedEdge};
