//! Command-line pipeline around `sicerp-core`: dataset ingestion, seeded
//! synthetic data, representations, cross-validated experiments and the
//! file formats they read and write.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod formats;
pub mod represent;
pub mod synth;

pub use error::{CliError, Result};
