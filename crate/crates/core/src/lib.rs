//! Training-free per-token dynamic-depth inference for next-scale-prediction
//! transformers.
//!
//! The pipeline at a single scale looks like this:
//!
//! 1. [`schedule`] turns the previous scale's per-layer deltas into a decision
//!    rank map, normalizes it into strict-greater percentiles, and maps those
//!    through a cyclically rotated schedule function to depth scores in `[0, 1]`.
//! 2. [`mask`] floors the scores into integer depths and spreads each token's
//!    depth over the layer stack with a bit-reversal permutation, producing a
//!    layer-major binary mask.
//! 3. [`dynamic`] runs the masked layer stack on a [`model::ToyVarModel`],
//!    filling skipped `(layer, token)` pairs from the cached previous-scale
//!    deltas, restores fully skipped tokens by neighbourhood similarity, and
//!    blends the looked-up codes by depth score before accumulating them into
//!    the running feature map.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line harness live in the companion `depthvar` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dynamic;
pub mod error;
pub mod grid;
pub mod mask;
pub mod model;
pub mod schedule;

pub use error::{Error, Result};
