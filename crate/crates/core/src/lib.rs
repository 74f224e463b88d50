//! Per-participant ridge probing of frozen word representations.
//!
//! Word vectors from one model layer are reduced with PCA, and each
//! participant's word-level targets get their own ridge probe. One pooled
//! population probe is fit alongside them. Both are scored with Spearman
//! correlation under sentence-level cross-validation.

pub mod analyses;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod pca;
pub mod probes;
pub mod report;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
