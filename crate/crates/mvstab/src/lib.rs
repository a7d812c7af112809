//! Command-line front end for the `mvstab-core` pipeline.
//!
//! An experiment is a single JSON document ([`config::ExperimentConfig`]);
//! [`experiments::run`] dispatches it, writes CSV tables and JSON sidecars,
//! and records everything it emitted in a checksummed [`output::RunManifest`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod law;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{compare_files, run};
pub use output::RunManifest;
