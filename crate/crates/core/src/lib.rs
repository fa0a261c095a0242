//! Shapley-value feature attribution for two-party vertically federated models.
//!
//! A Host party owns the labels and part of the feature space; a Guest party
//! owns the remaining features. The host explains individual predictions by
//! exact coalition enumeration: host features get individual attributions,
//! while all guest features are toggled together as one "federated" player,
//! so the guest never reveals per-feature values.
//!
//! The crate is organized as:
//!
//! * [`dataset`] — CSV ingestion, ordinal encoding, min-max normalization,
//!   deterministic train/test splits, per-column median reference values.
//! * [`knn`] — KNN classifier with a KD-tree index and the partial-distance
//!   primitive that makes vertical decomposition possible.
//! * [`shapley`] — exact Shapley attribution over a black-box value function,
//!   with a permutation brute-force oracle.
//! * [`federation`] — host/guest state machines, the framed wire protocol,
//!   in-process and TCP channel bindings.
//! * [`explain`] — full-space and federated explanation procedures, batch
//!   runs, rank agreement between reports.
//! * [`report`] — CSV serialization for reports and datasets.
//! * [`synth`] — deterministic generator for a census-shaped sample dataset.

pub mod dataset;
pub mod error;
pub mod explain;
pub mod federation;
pub mod knn;
pub mod report;
pub mod rng;
pub mod schema;
pub mod shapley;
pub mod synth;

pub use dataset::{Matrix, NumericDataset, RawDataset};
pub use error::{Error, Result};
pub use knn::KnnModel;
pub use schema::{Feature, FeatureKind, FeaturePartition, FeatureSchema};
pub use shapley::{CoalitionMask, ShapleyGame, ShapleyReport, WeightingMode};
