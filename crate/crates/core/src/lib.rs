//! Multi-label classification toolkit for short crisis posts.
//!
//! The pipeline encodes each tweet as a vector, builds a corpus-wide graph
//! over words, entities and labels, refines label representations with two
//! graph attention layers, and scores tweet/label relevance with a learnable
//! relation head. Evaluation covers weighted F1, Hamming loss, Jaccard index
//! and the alert-worth score used for priority-aware benchmarking.

pub mod codec;
pub mod corpusgraph;
pub mod dataset;
pub mod diffcore;
pub mod embeddings;
pub mod encoder;
pub mod error;
pub mod gat;
pub mod metrics;
pub mod preprocess;
pub mod relnet;
pub mod train;

pub use error::{Error, ErrorClass, Result};
