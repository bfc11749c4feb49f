//! Pathway-constrained autoencoders for gene-expression data.
//!
//! The crate bundles dense numerics ([`ndcore`]), the model families and their
//! training loop ([`models`]), data ingestion ([`dataio`]), downstream
//! classifiers ([`classifiers`]), evaluation statistics ([`metrics`]),
//! interpretability and survival tools ([`interpret`]), and the experiment
//! protocol ([`pipeline`]). The `paae` binary wires these together.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cli;
pub mod dataio;
mod error;
pub mod interpret;
pub mod metrics;
pub mod models;
pub mod ndcore;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
