use std::path::PathBuf;

use crate::kg::{NodeKind, Relation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),

    #[error("invalid node `{id}`: {reason}")]
    InvalidNode { id: String, reason: String },

    #[error("edge {src} -[{rel}]-> {dst}: dangling endpoint `{missing}`")]
    DanglingEndpoint {
        src: String,
        dst: String,
        rel: Relation,
        missing: String,
    },

    #[error("relation/kind mismatch: {rel} cannot connect {src_kind} -> {dst_kind} ({src} -> {dst})")]
    RelationKindMismatch {
        src: String,
        dst: String,
        rel: Relation,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },

    #[error("self-loop on `{0}`")]
    SelfLoop(String),

    #[error("part_of edges do not form a forest at `{0}`")]
    PartOfNotForest(String),

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("node `{0}` is not a text log")]
    NotATextLog(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("missing vector for node `{0}`")]
    MissingVector(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient candidates: need {needed}, have {available}")]
    InsufficientCandidates { needed: usize, available: usize },

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("zero-norm row {0}: cosine undefined")]
    ZeroNorm(usize),

    #[error("test edge {0} also appears in the training edges")]
    LeakedTestEdge(String),

    #[error("id collision: {0}")]
    IdCollision(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
