//! Minimum s-t cuts on 6-connected voxel grids.
//!
//! [`solve_maxflow`] is a Boykov–Kolmogorov augmenting-path solver with
//! implicit grid adjacency; [`brute_force_mincut`] enumerates every labeling
//! and serves as the reference on small graphs.

mod bk;
mod brute;
mod graph;

pub use bk::solve_maxflow;
pub use brute::{brute_force_mincut, MAX_BRUTE_FORCE_NODES};
pub use graph::GridGraph;

use crate::volume::LabelMask;

/// A maximum flow and the minimum cut read off from it.
#[derive(Clone, Debug)]
pub struct CutResult {
    pub flow: f64,
    /// `1` for nodes on the source (object) side.
    pub labels: LabelMask,
}
