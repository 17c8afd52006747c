//! Discrete-latent teacher / bi-encoder student action selection for
//! text-game transcripts, with knowledge distillation between the two.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod models;
pub mod numcore;
pub mod pipeline;

pub use error::{Error, Result};
