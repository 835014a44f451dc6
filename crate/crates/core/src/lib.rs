//! Attention-based text clustering.
//!
//! A hierarchical attention network is trained as a classifier on a labeled
//! fraction of a corpus; its learned weights then encode the remaining
//! documents as vectors, which are clustered by seven standard algorithms and
//! scored with external and internal validation metrics. A paragraph-vector
//! baseline provides the "plain clustering" comparison.
//!
//! Module map:
//!
//! - [`corpus`]: loading, class filtering, stratified splitting, tokenization.
//! - [`embeddings`]: random, skip-gram and pretrained word vectors.
//! - [`neural`]: LSTM, bidirectional encoder, attention pooling, softmax head,
//!   and a finite-difference gradient checker.
//! - [`han`]: the hierarchical attention network, its trainer and checkpoints.
//! - [`baseline`]: distributed-bag-of-words paragraph vectors.
//! - [`clustering`]: k-means, mini-batch k-means, agglomerative, DBSCAN,
//!   mean shift, BIRCH and affinity propagation.
//! - [`metrics`]: homogeneity, completeness, V-measure, ARI, AMI, silhouette
//!   and the six-way average.
//! - [`harness`]: experiment orchestration, result tables and charts.

pub mod baseline;
pub mod clustering;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod han;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod util;

pub use error::{Error, Result};
