//! Test-risk estimation for spatial predictive methods.
//!
//! Given per-site losses of a predictive method on held-out validation data,
//! estimate its risk at a fixed set of test sites. Three estimators are
//! provided: the holdout average, k-nearest-neighbor reweighting, and spatial
//! nearest neighbors (SNN), which chooses k by minimising an error bound built
//! from the k-th order fill distance and the norm of the neighbor weights.
//!
//! The crate also carries the simulation machinery used to study the
//! estimators: Gaussian-process data generators, the predictive methods being
//! validated, and a seeded Monte Carlo harness.

pub mod dgp;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod harness;
pub mod index;
pub mod kernels;
pub mod linalg;
pub mod par;
pub mod predictors;

pub use error::{Error, Result};
pub use geometry::{Metric, SiteSet};
pub use index::{NeighborIndex, NeighborSet};
