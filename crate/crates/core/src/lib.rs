//! Long-document classification by attention pooling over frozen sentence
//! embeddings.
//!
//! The pipeline is: [`segmenter`] splits cleaned text into bounded
//! sentences, an encoder (the deterministic [`embeddings::toy_encode`] or an
//! external exporter) maps each sentence to a unit vector, [`attention_pool`]
//! combines the vectors of a document into one representation and
//! [`classifier_trainer`] fits the pooling head plus a linear classifier.
//! [`eval_stats`] reports length-stratified accuracy and [`cost_model`]
//! evaluates attention-cost formulas for several long-document
//! architectures.

pub mod attention_pool;
pub mod classifier_trainer;
pub mod cli;
pub mod cost_model;
pub mod embeddings;
pub mod error;
pub mod eval_stats;
pub mod numerics;
pub mod segmenter;

pub use error::{Error, Result};
