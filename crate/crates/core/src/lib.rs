//! Multi-label classification of artworks into Biophilic categories from
//! precomputed CLIP image embeddings.
//!
//! A small decoder (512 → 256 → 128 → L with batch normalization, ReLU,
//! dropout and a sigmoid head) is trained with binary cross-entropy, scored
//! with multi-label precision/recall/F1, and used to tag artworks, pick a
//! dominant label, set a Biophilic flag and group a gallery. Predictions are
//! explained with a LIME-style superpixel surrogate.
//!
//! Runnable walkthroughs live in `examples/`; the `biophilic` binary exposes
//! the same pipeline over files.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod decoder;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod numerics;
pub mod synthetic;
pub mod tagging;
pub mod training;

pub use error::{Error, Result};
