pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;
pub mod stages;

pub use config::{Composition, RunConfig};
pub use error::{CliError, CliResult};
pub use stages::{Ctx, PipelineReport};
