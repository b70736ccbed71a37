//! Membership-inference evaluation for language models.
//!
//! Attack scores are computed from externally supplied per-token
//! log-probabilities ([`attacks`]), evaluated with bootstrap ROC metrics
//! ([`metrics`]), and complemented by corpus n-gram overlap analysis
//! ([`ngram`], [`benchmark`]), lexical edits of members ([`perturb`]), and a
//! smoothed n-gram language model for desk-scale experiments ([`toylm`]).

pub mod attacks;
pub mod benchmark;
pub mod datamodel;
pub mod error;
pub mod metrics;
pub mod ngram;
pub mod perturb;
pub mod rng;
pub mod stats;
pub mod toylm;

pub use error::{Error, Result};
