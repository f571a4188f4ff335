//! Command-line pipeline: configuration, artifact I/O and the mesh,
//! zeroregion, fit, predict, synthesize and verify commands.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod verify;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
