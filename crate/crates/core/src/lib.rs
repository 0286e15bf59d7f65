//! Personalized PageRank estimation.
//!
//! Push algorithms, geometric random walks and their combination into
//! single-pair, many-pair and submatrix estimators, together with the
//! clustering quantities that govern their cost and a simulated multi-machine
//! walk-sampling setting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributed;
pub mod error;
pub mod estimators;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod push;
pub mod rng;
pub mod sparse;
pub mod walks;

pub use error::{PprError, Result};
pub use graph::{DenseDistribution, Graph, NodeSet};
pub use push::{MergeStats, PushResult};
pub use sparse::SparseVec;
