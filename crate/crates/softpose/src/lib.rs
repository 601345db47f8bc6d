//! File formats, run configuration and subcommands around `softpose-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod frame;
pub mod obj;
pub mod png_io;
pub mod pose_io;
pub mod svg;

pub use config::RunConfig;
pub use error::{ConfigError, FormatError};
