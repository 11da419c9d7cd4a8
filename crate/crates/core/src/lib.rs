//! Semi-supervised label interpolation on point clouds.
//!
//! Points are connected by an exact k-nearest-neighbor graph with self-tuned
//! Gaussian weights. Labels known on a template subset are extended to the
//! remaining points by solving the weighted nonlocal Laplacian (WNLL) system,
//! a reweighted harmonic extension that stays accurate when labels are scarce.
//!
//! On top of the interpolator the crate provides a softmax-regression
//! baseline, template mini-batching with majority voting, a small dense
//! network whose output head can be swapped for WNLL, and the alternating
//! training loop that trains it. [`coverage`] holds the coupon-collector
//! estimate of how many labeled samples are needed to see every class.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command-line driver live in the `wnll` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod coverage;
pub mod data;
pub mod error;
pub mod knn;
pub mod net;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod train;

mod linalg;

pub use data::{DataMatrix, DatasetSplit, LabelVector};
pub use error::{Error, Result};
pub use knn::{GraphParams, NeighborLists, SparseWeightGraph};
pub use solver::{HarmonicSolution, InterpolationProblem, LinearSystem};
