//! Detoxification of transformer text generation via sparse-autoencoder
//! feature steering.
//!
//! The pipeline: decompose residual-stream activations with a pre-trained
//! SAE ([`sae`]), harvest per-feature statistics over paired toxic/neutral
//! corpora and rank toxicity-associated features ([`features`]), apply
//! causal interventions at a chosen layer ([`steering`]) inside a hooked
//! transformer ([`model`]), and score the results ([`eval`]).

pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod sae;
pub mod steering;
pub mod tensorfile;
pub mod tokenizer;

pub use error::{Error, Result};
pub use sae::{ActivationBatch, ActivationFn, LatentVector, SparseAutoencoder};
