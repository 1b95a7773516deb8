//! Algorithms for data-efficient training of small diffusion models.
//!
//! The pipeline is: embed a labeled dataset, score and prune it to a coreset,
//! learn class weights against a frozen reference model, train a
//! class-conditional denoiser on the weighted coreset, then compare generated
//! samples with real ones.
//!
//! Everything here is `no_std` + `alloc` and deterministic given its seeds.
//! File formats, configuration and the command line live in the companion
//! `pruneweight` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read more clearly in the dense linear algebra kernels.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod accounting;
pub mod dataset;
pub mod diffusion;
pub mod encoder;
mod error;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod pruning;
pub mod reweighting;
pub mod rng;

pub use error::{Error, Result};
