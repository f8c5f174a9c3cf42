//! Experiment drivers, CSV ingestion, and result formatting behind the
//! `gphodlr` binary. The pieces live in a library so the test suite can run
//! the same experiments the binary exposes.

pub mod error;
pub mod experiments;
pub mod io;
pub mod reporting;

pub use error::{CliError, CliResult};
