//! Graph-cut refinement of volumetric liver likelihood maps.
//!
//! The crate is organised along the processing chain:
//!
//! * [`volume`]: dense 3D grids, MetaImage I/O, resampling, windowing, phantoms
//! * [`diffusion`]: edge-preserving denoising
//! * [`probmap`]: initial region extraction and liver intensity range
//! * [`features`]: 3D LBP, local variance, cumulative histograms, appearance map
//! * [`energy`]: region score, data and boundary terms, graph construction
//! * [`maxflow`]: Boykov–Kolmogorov min-cut on 6-connected grids
//! * [`metrics`]: overlap and surface-distance measures, scoring, volume statistics
//! * [`cnn`]: a small 3D convolutional forward/backward engine
//! * [`pipeline`]: the refinement stage wired end to end
//!
//! All grids share one memory layout: `x` varies fastest, then `y`, then `z`
//! (`index = x + nx * (y + ny * z)`).

pub mod cnn;
pub mod diffusion;
pub mod energy;
pub mod error;
pub mod features;
pub mod maxflow;
pub mod metrics;
pub mod pipeline;
pub mod probmap;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Dims, Grid, LabelMask, ProbabilityMap, RealGrid, Spacing, Volume};
