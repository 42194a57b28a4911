//! Disk formats, pipeline orchestration and figures for `tempseg-core`.
//!
//! The `tempseg` binary exposes each stage as a subcommand. All outputs go to
//! one directory under fixed names, and every stage is deterministic for a
//! given seed regardless of `--threads`.

pub mod artifacts;
pub mod checkpoint;
pub mod config;
mod error;
pub mod formats;
pub mod parallel;
pub mod pipeline;
pub mod svg;

pub use error::{CliError, Result};
