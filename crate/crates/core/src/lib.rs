//! Byzantine-robust federated learning simulation.
//!
//! The centerpiece is the FedCut defense: client updates are treated as nodes
//! of a Gaussian-kernel similarity graph, the kernel scale and number of
//! clusters are chosen from the eigengap of the normalized adjacency, and the
//! benign clients are taken to be the largest cluster of a normalized cut on a
//! running average of the per-round graphs.
//!
//! Modules:
//!
//! - [`numerics`]: dense symmetric matrices, eigensolvers and k-means.
//! - [`spectral`]: kernel graphs, normalization and eigengap summaries.
//! - [`fedcut`]: scale selection, mimic masking and the temporal normalized cut.
//! - [`aggregators`]: mean, coordinate median, trimmed mean, Krum, geometric
//!   median and a two-cluster k-means defense.
//! - [`attacks`]: Byzantine update crafting plus the toy and planted cohorts
//!   used in the experiments.
//! - [`fl`]: datasets, partitioning, a softmax model and the training loop.

pub mod aggregators;
pub mod attacks;
mod error;
pub mod fedcut;
pub mod fl;
pub mod numerics;
pub mod rng;
pub mod spectral;
mod update;

pub use error::{Error, Result};
pub use update::UpdateVector;
