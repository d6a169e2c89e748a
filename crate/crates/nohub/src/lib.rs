//! File formats, an episode-parallel benchmark runner and the `nohub`
//! command-line front end built on [`nohub_core`].

pub mod cli;
mod error;
pub mod formats;
pub mod parallel;

pub use error::{CliError, FormatError};
