//! Detection and knowledge-based replacement of bias-sensitive words (BSWs)
//! for short-text hate-speech classifiers, plus the metrics used to measure
//! stereotypical bias before and after de-biasing.

pub mod classifier;
pub mod corpus;
pub mod detection;
pub mod embeddings;
pub mod metrics;
pub mod replacement;
pub mod tagging;
pub mod wordnet;
