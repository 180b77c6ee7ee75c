//! Configuration, gain files and subcommands behind the `dapi` binary.

pub mod commands;
pub mod config;
pub mod gains;
pub mod report;

pub use commands::{Failure, Overrides, Scheme};
pub use config::Config;
pub use gains::GainFile;
