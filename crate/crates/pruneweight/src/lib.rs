//! File formats, configuration and the command-line pipeline around
//! [`pruneweight_core`].

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod tables;

pub use error::{CliError, CliResult, FormatError};
pub use pruneweight_core as core;
