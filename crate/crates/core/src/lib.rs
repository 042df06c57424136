//! Memory-augmented sequence-to-sequence summarization with Neural Semantic
//! Encoders: a small reverse-mode autodiff engine, vanilla, improved and
//! hierarchical NSE models with pointer-generator decoding, ROUGE, and
//! teacher-forced and self-critical training.

pub mod data;
pub mod error;
pub mod hier;
pub mod layers;
pub mod model;
pub mod nse;
pub mod rouge;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

/// Seeded generator used for initialization, shuffling and sampling.
pub type Rng = rand_chacha::ChaCha8Rng;
