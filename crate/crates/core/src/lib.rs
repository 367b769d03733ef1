//! Core library for listwise reranking over compressed document
//! representations: a small decoder backbone with tape-based autodiff, a
//! document compressor, first-stage retrieval, training, evaluation, and the
//! on-disk formats that tie them together.

pub mod bench;
pub mod compress;
pub mod corpus;
pub mod cost;
pub mod error;
pub mod fileio;
pub mod index;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod rerank;
pub mod retrieve;
pub mod rng;
pub mod teacher;
pub mod tensor;
pub mod tokenizer;
pub mod train;
pub mod trec;

pub use error::{Error, Result};
