//! Linear knowledge-graph embedding models (TransE, MuRE_I, DistMult,
//! TuckER, MuRE) with per-relation ranking evaluation, independent
//! prediction statistics, and relation-structure diagnostics joined against
//! an R/S/C relation taxonomy.

pub mod analyze;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod parallel;
pub mod report;
pub mod train;

pub use error::{KgError, Result};

/// Relation taxonomy for the WN18RR dataset, shipped as data.
pub const WN18RR_TAXONOMY: &str = include_str!("../data/wn18rr-taxonomy.tsv");

/// Relation taxonomy for the NELL-995 subsample, shipped as data.
pub const NELL995_TAXONOMY: &str = include_str!("../data/nell995-taxonomy.tsv");
