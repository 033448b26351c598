//! Sentiment classification for Persian movie reviews.
//!
//! The crate covers the whole pipeline: dataset ingestion and seeded
//! splitting ([`corpus`]), normalisation/tokenisation/stemming
//! ([`preprocess`]), word-vector lookup ([`embed`]), a small dense-tensor
//! network kernel with reverse-mode gradients ([`nn`]), the three classifier
//! architectures with training and a binary model format ([`models`]), and
//! confusion-matrix metrics with text and JSON reports ([`eval`]).

pub mod corpus;
pub mod preprocess;
pub mod rng;
pub mod embed;
pub mod nn;
pub mod models;
pub mod eval;
