//! Hubness-reducing embeddings on the hypersphere for transductive few-shot
//! episodes.
//!
//! The crate is `no_std` (it needs `alloc`) and purely computational: every
//! operation is a deterministic function of its inputs and an explicit seed.
//! File formats, the CLI and parallel benchmarking live in the companion
//! `nohub` crate.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`geometry`] | row normalization, cosine / inner-product Gram matrices, uniform sphere sampling, PCA |
//! | [`affinity`] | per-point κ calibration to a perplexity, conditional and joint affinities, label-informed similarities |
//! | [`nohub`] | the LSP / uniformity losses, analytic gradients, Adam, and the full [`nohub::embed`] loop |
//! | [`hubness`] | k-occurrence, skewness and hub occurrence |
//! | [`fslbench`] | episodes, synthetic data, baseline embeddings, nearest-centroid classification, aggregation |
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod affinity;
mod error;
pub mod fslbench;
pub mod geometry;
pub mod hubness;
pub(crate) mod math;
mod matrix;
pub mod nohub;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
