//! Volumetric texture features and the local appearance map.
//!
//! Three per-voxel features are combined: intensity, a thresholded 3D local
//! binary pattern and the local variance over the same spherical neighbour
//! set. Their local cumulative histograms are compared with reference
//! histograms fitted on the initial region through the 1D Wasserstein-1
//! distance.

mod appearance;
mod histogram;

pub use appearance::{appearance_map, fit_reference_model, Denominator, FeatureHistogramModel, FeatureReference};
pub use histogram::{cumulative_histogram, wasserstein_l1, CumulativeHistogram};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{Grid, RealGrid, Volume};

/// Parameters of the neighbour set and the LBP noise margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbpParams {
    /// Noise margin `τ`.
    pub tau: f64,
    /// Neighbour count `P`.
    pub p: usize,
    /// Sphere radius in voxels.
    pub r: f64,
}

impl Default for LbpParams {
    fn default() -> Self {
        LbpParams { tau: 1.5, p: 6, r: 1.0 }
    }
}

impl LbpParams {
    pub const MAX_NEIGHBOURS: usize = 26;

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p > Self::MAX_NEIGHBOURS {
            return Err(Error::param(format!("LBP neighbour count must be in 1..=26, got {}", self.p)));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(format!("LBP radius must be positive, got {}", self.r)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::param(format!("LBP tau must be non-negative, got {}", self.tau)));
        }
        Ok(())
    }

    /// Neighbour offsets in voxels.
    ///
    /// `P = 6` uses the axis directions in the order `+x, −x, +y, −y, +z, −z`
    /// scaled by `r`; any other `P` uses a spherical Fibonacci lattice.
    pub fn offsets(&self) -> Vec<[f64; 3]> {
        if self.p == 6 {
            return crate::volume::FACE_OFFSETS
                .iter()
                .map(|o| o.map(|c| c as f64 * self.r))
                .collect();
        }
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..self.p)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / self.p as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                [rho * phi.cos() * self.r, rho * phi.sin() * self.r, z * self.r]
            })
            .collect()
    }
}

/// Samples the neighbour intensities of every voxel, using direct clamped
/// lookups when all offsets are integral and trilinear sampling otherwise.
struct NeighbourSampler<'a> {
    vol: &'a Volume,
    offsets: Vec<[f64; 3]>,
    integral: Option<Vec<[isize; 3]>>,
}

impl<'a> NeighbourSampler<'a> {
    fn new(vol: &'a Volume, params: &LbpParams) -> Self {
        let offsets = params.offsets();
        let integral = offsets
            .iter()
            .all(|o| o.iter().all(|c| c.fract() == 0.0))
            .then(|| offsets.iter().map(|o| o.map(|c| c as isize)).collect());
        NeighbourSampler { vol, offsets, integral }
    }

    fn sample(&self, x: usize, y: usize, z: usize, out: &mut Vec<f64>) {
        out.clear();
        match &self.integral {
            Some(offs) => out.extend(offs.iter().map(|o| {
                self.vol
                    .get_clamped(x as isize + o[0], y as isize + o[1], z as isize + o[2]) as f64
            })),
            None => out.extend(self.offsets.iter().map(|o| {
                self.vol
                    .sample_trilinear([x as f64 + o[0], y as f64 + o[1], z as f64 + o[2]])
            })),
        }
    }
}

fn per_voxel<T: Send + Copy + Default>(
    vol: &Volume,
    params: &LbpParams,
    f: impl Fn(f64, &[f64]) -> T + Sync,
) -> Grid<T> {
    let sampler = NeighbourSampler::new(vol, params);
    let [nx, ny, _] = vol.dims();
    let mut out = vec![T::default(); vol.len()];
    out.par_chunks_mut(nx).enumerate().for_each_init(Vec::new, |buf, (row, chunk)| {
        let y = row % ny;
        let z = row / ny;
        for (x, o) in chunk.iter_mut().enumerate() {
            sampler.sample(x, y, z, buf);
            *o = f(vol.get(x, y, z) as f64, buf);
        }
    });
    vol.with_data(out).expect("same geometry")
}

#[inline]
fn heaviside(t: f64) -> bool {
    t > 0.0
}

#[inline]
fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// LBP code of one centre against its neighbours:
/// `Σ_p H(I_p − I_c − τ·sign(I_p − I_c)) 2^p`, with `H(0) = 0`.
pub fn lbp_code(center: f64, neighbours: &[f64], tau: f64) -> u32 {
    neighbours.iter().enumerate().fold(0u32, |code, (p, &ip)| {
        let d = ip - center;
        code | ((heaviside(d - tau * sign(d)) as u32) << p)
    })
}

/// Population variance of the neighbour intensities.
pub fn neighbour_variance(neighbours: &[f64]) -> f64 {
    let n = neighbours.len() as f64;
    let mean = neighbours.iter().sum::<f64>() / n;
    neighbours.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub fn lbp3d(vol: &Volume, params: &LbpParams) -> Result<Grid<u32>> {
    params.validate()?;
    let tau = params.tau;
    Ok(per_voxel(vol, params, |c, n| lbp_code(c, n, tau)))
}

pub fn var3d(vol: &Volume, params: &LbpParams) -> Result<RealGrid> {
    params.validate()?;
    Ok(per_voxel(vol, params, |_, n| neighbour_variance(n)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Intensity,
    Lbp,
    Variance,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Intensity, FeatureKind::Lbp, FeatureKind::Variance];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Intensity => "intensity",
            FeatureKind::Lbp => "lbp",
            FeatureKind::Variance => "variance",
        }
    }
}

/// Intensity, LBP code and local variance on one grid.
#[derive(Clone, Debug)]
pub struct JointFeatureVolume {
    pub intensity: Volume,
    pub lbp: Grid<u32>,
    pub variance: RealGrid,
    pub lbp_params: LbpParams,
}

impl JointFeatureVolume {
    pub fn compute(vol: &Volume, params: &LbpParams) -> Result<Self> {
        Ok(JointFeatureVolume {
            intensity: vol.clone(),
            lbp: lbp3d(vol, params)?,
            variance: var3d(vol, params)?,
            lbp_params: *params,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.intensity.dims()
    }

    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    #[inline]
    pub fn value(&self, kind: FeatureKind, index: usize) -> f64 {
        match kind {
            FeatureKind::Intensity => self.intensity.data()[index] as f64,
            FeatureKind::Lbp => self.lbp.data()[index] as f64,
            FeatureKind::Variance => self.variance.data()[index],
        }
    }
}
