//! Toolkit for associating HD lane centerlines with SD roads.
//!
//! The crate covers the whole desk-scale pipeline: a deterministic synthetic
//! scene generator with ground truth, KNN and HMM baselines, a forward pass of
//! the map association transformer (path-aware and spatial attention), a
//! topology-constrained beam-search decoder, and the Association P-R and
//! Reachability P-R evaluation metrics.

pub mod error;
pub mod geom;
pub mod curves;
pub mod decoder;
pub mod map;
pub mod assoc;
pub mod baselines;
pub mod paths;
pub mod scene_gen;
pub mod metrics;
pub mod mat;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
