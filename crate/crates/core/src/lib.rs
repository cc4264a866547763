//! Content-based retrieval of experiments by their MAP gene clusterings.
//!
//! Each experiment (a genes x samples matrix) is summarized by the clustering
//! of its genes that maximizes a Gaussian product partition model posterior.
//! A query experiment is clustered the same way and stored experiments are
//! ranked by the normalized information distance between clusterings.
//! Likelihood-based and differential-expression correlation rankings are
//! provided as baselines, along with a leave-one-out evaluation harness.

pub mod data_model;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod par;
pub mod partitions;
pub mod pipeline;
pub mod ppm;
pub mod retrieval;
pub mod search;

pub use data_model::{
    relevance_matrix, Clustering, ExpressionMatrix, FitMetadata, GroundTruth, Hyperparameters,
    ModelIndex, ModelIndexEntry, RelevanceMatrix,
};
pub use error::{Error, Result};
