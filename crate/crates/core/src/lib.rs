//! Entity-centric identity embeddings.
//!
//! Identities that people apply to themselves in short biographies are treated
//! as co-applied labels of one person. This crate extracts those identities,
//! builds vocabularies and held-out prediction problems from them, trains
//! skip-gram/CBOW embeddings where each bio is one context window, prepares
//! contrastive and masked datasets for external encoder fine-tuning, and
//! evaluates any embedding source by held-out identity prediction and by
//! projection onto social dimensions.

pub mod corpus;
pub mod dimension;
pub mod embed;
pub mod extraction;
pub mod finetune;
pub mod io;
pub mod pipeline;
pub mod predict;
mod scalar;
pub mod store;

pub use scalar::Scalar;

pub type EmbeddingTable32 = embed::EmbeddingTable<f32>;
pub type EmbeddingTable64 = embed::EmbeddingTable<f64>;
pub type Provider32 = store::EmbeddingProvider<f32>;
pub type Provider64 = store::EmbeddingProvider<f64>;
