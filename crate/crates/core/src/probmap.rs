//! From a likelihood map to the initial region and the liver intensity range.

use crate::error::{Error, Result};
use crate::volume::{Grid, LabelMask, ProbabilityMap, Volume, FACE_OFFSETS};

/// Lower/upper multiples of the standard deviation around the region mean.
pub const RANGE_LOWER_SIGMAS: f64 = 3.0;
pub const RANGE_UPPER_SIGMAS: f64 = 3.5;

/// Estimated liver intensity interval `[zeta, eta] = [m − 3σ, m + 3.5σ]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityRange {
    pub zeta: f64,
    pub eta: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl IntensityRange {
    pub fn from_stats(mean: f64, stddev: f64) -> Result<Self> {
        let zeta = mean - RANGE_LOWER_SIGMAS * stddev;
        let eta = mean + RANGE_UPPER_SIGMAS * stddev;
        if zeta.partial_cmp(&eta) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Degenerate(format!(
                "intensity range [{zeta}, {eta}] is empty (stddev {stddev})"
            )));
        }
        Ok(IntensityRange {
            zeta,
            eta,
            mean,
            stddev,
        })
    }
}

/// Voxels with likelihood `>= threshold`.
pub fn threshold_likelihood(map: &ProbabilityMap, threshold: f64) -> Result<LabelMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("likelihood threshold must be in (0, 1), got {threshold}")));
    }
    Ok(map.map(|&p| (p as f64 >= threshold) as u8))
}

/// Label 6-connected foreground components. Returns per-voxel component ids
/// (0 = background, components numbered from 1 in scan order) and the size of
/// each component.
pub fn label_components(mask: &LabelMask) -> (Grid<u32>, Vec<usize>) {
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..mask.len() {
        if mask.data()[seed] == 0 || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels[seed] = id;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            size += 1;
            for off in FACE_OFFSETS {
                if let Some(j) = mask.offset_index(i, off) {
                    if mask.data()[j] != 0 && labels[j] == 0 {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (mask.with_data(labels).expect("same geometry"), sizes)
}

/// Keep only the largest 6-connected component; ties go to the one found
/// first in scan order.
pub fn largest_component(mask: &LabelMask) -> LabelMask {
    let (labels, sizes) = label_components(mask);
    let Some((best, _)) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })
    else {
        return LabelMask::empty_like(mask);
    };
    let keep = best as u32 + 1;
    labels.map(|&l| (l == keep) as u8)
}

/// Mean and standard deviation of intensities over `l0`, expanded to the
/// liver range.
pub fn estimate_intensity_range(vol: &Volume, l0: &LabelMask) -> Result<IntensityRange> {
    vol.ensure_same_shape(l0, "intensity range")?;
    let mut n = 0usize;
    let mut sum = 0.0;
    for (&v, &l) in vol.data().iter().zip(l0.data()) {
        if l != 0 {
            n += 1;
            sum += v as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion("initial region L0 has no voxels".into()));
    }
    let mean = sum / n as f64;
    let var = vol
        .data()
        .iter()
        .zip(l0.data())
        .filter(|(_, &l)| l != 0)
        .map(|(&v, _)| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    IntensityRange::from_stats(mean, var.sqrt())
}
