//! Command-line front end for the decoder designer: decoder files,
//! heatmaps and the `design`, `evaluate`, `compare` and `pan-grid` commands.

pub mod cli;
pub mod commands;
pub mod decoder_file;
pub mod error;
pub mod plot;

pub use cli::run;
pub use decoder_file::DecoderFile;
pub use error::{CliError, CliResult};
