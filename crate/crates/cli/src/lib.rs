//! Library side of the `sg-tomo` command-line tool.

pub mod cache;
pub mod config;
pub mod error;
pub mod run;

pub use cache::MapCache;
pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
