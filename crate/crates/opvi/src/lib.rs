//! Experiments, file formats and the command-line interface for operator
//! variational inference, on top of the `no_std` [`opvi_core`] crate.
//!
//! - [`config`]: the JSON experiment configuration.
//! - [`format`]: `OPVI` image matrices and `OPVC` checkpoints.
//! - [`experiments`]: the mixture fit and the logistic factor analysis
//!   completion benchmark, with their CSV outputs.

pub mod config;
pub mod error;
pub mod experiments;
pub mod format;

pub use error::{Error, Result};
