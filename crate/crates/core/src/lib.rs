//! Point-cloud neural operators built around the group relation aggregator
//! (GRA): geometric and semantic relations between a centroid and its
//! neighbors drive a cross-channel attention over bottlenecked neighbor
//! features.
//!
//! Everything is 64-bit and every differentiable piece has a hand-written
//! backward pass that is certified against central finite differences
//! (see [`tensor::gradcheck`]).
//!
//! Data-parallel loops (per-query neighbor search, per-cloud batch
//! evaluation, per-sample gradients) go through [`par`], which uses rayon
//! when the `parallel` feature is enabled and falls back to plain iterators
//! otherwise. Results are identical either way.

pub mod data;
pub mod error;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod par;
pub mod relation;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Indices, Parameter, Tensor};
