//! Sliver07-style accuracy measures, scoring, and liver-volume statistics.

mod report;
mod stats;
mod surface;

pub use report::{format_report_table, format_stats_block};
pub use stats::{volume_stats, VolumeStats};
pub use surface::{border_voxels, distance_to_set, surface_distances, SurfaceDistances};

use crate::error::{Error, Result};
use crate::volume::LabelMask;

/// Metric values that a non-expert manual segmentation of average quality
/// achieves: VOE %, |RVD| %, ASD mm, RMSD mm, MSD mm. Each scores 75.
pub const REFERENCE_VALUES: [f64; 5] = [6.4, 4.7, 1.0, 1.8, 19.0];

pub const METRIC_NAMES: [&str; 5] = ["VOE", "RVD", "ASD", "RMSD", "MSD"];

fn overlap_counts(a: &LabelMask, b: &LabelMask) -> Result<(usize, usize)> {
    a.ensure_same_shape(b, "masks")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok((inter, union))
}

/// Volumetric overlap error in percent: `100 (1 − |A∩B| / |A∪B|)`.
pub fn voe(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    let (inter, union) = overlap_counts(a, b)?;
    if union == 0 {
        return Err(Error::EmptyRegion("both masks are empty".into()));
    }
    Ok(100.0 * (1.0 - inter as f64 / union as f64))
}

/// Signed relative volume difference in percent against the reference `b`.
pub fn rvd(a: &LabelMask, b: &LabelMask) -> Result<f64> {
    a.ensure_same_shape(b, "masks")?;
    let nb = b.count();
    if nb == 0 {
        return Err(Error::EmptyRegion("reference mask is empty".into()));
    }
    Ok(100.0 * (a.count() as f64 - nb as f64) / nb as f64)
}

/// Per-metric scores `max(0, 100 − 25 v / ref)` and their mean. RVD is
/// scored by absolute value.
pub fn sliver_score(values: [f64; 5]) -> ([f64; 5], f64) {
    let mut scores = [0.0; 5];
    for k in 0..5 {
        scores[k] = (100.0 - 25.0 * values[k].abs() / REFERENCE_VALUES[k]).max(0.0);
    }
    (scores, scores.iter().sum::<f64>() / 5.0)
}

/// Foreground volume in millilitres.
pub fn mask_volume_ml(mask: &LabelMask) -> f64 {
    mask.count() as f64 * mask.voxel_volume() / 1000.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub voe: f64,
    pub rvd: f64,
    pub asd: f64,
    pub rmsd: f64,
    pub msd: f64,
    pub scores: [f64; 5],
    pub total: f64,
}

impl MetricReport {
    pub fn values(&self) -> [f64; 5] {
        [self.voe, self.rvd, self.asd, self.rmsd, self.msd]
    }
}

/// All five measures of `auto` against the reference `manual`.
///
/// An empty `auto` mask has no surface; its distances are reported as
/// infinite, which scores zero. The reference must not be empty.
pub fn evaluate(auto: &LabelMask, manual: &LabelMask) -> Result<MetricReport> {
    let voe = voe(auto, manual)?;
    let rvd = rvd(auto, manual)?;
    let sd = if auto.count() == 0 {
        SurfaceDistances {
            asd: f64::INFINITY,
            rmsd: f64::INFINITY,
            msd: f64::INFINITY,
        }
    } else {
        surface_distances(auto, manual)?
    };
    let (scores, total) = sliver_score([voe, rvd, sd.asd, sd.rmsd, sd.msd]);
    Ok(MetricReport {
        voe,
        rvd,
        asd: sd.asd,
        rmsd: sd.rmsd,
        msd: sd.msd,
        scores,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn mask(n: usize, on: impl Fn(usize) -> bool) -> LabelMask {
        Grid::new([n, 1, 1], [1.0; 3], (0..n).map(|i| on(i) as u8).collect()).unwrap()
    }

    #[test]
    fn voe_cases() {
        let a = mask(200, |i| i < 100);
        assert_eq!(voe(&a, &a).unwrap(), 0.0);
        let b = mask(200, |i| i >= 100);
        assert_eq!(voe(&a, &b).unwrap(), 100.0);
        let c = mask(200, |i| (50..150).contains(&i));
        let d = mask(200, |i| (50..100).contains(&i));
        // |A∩B| = 50, |A∪B| = 100
        assert_eq!(voe(&c, &d).unwrap(), 50.0);
        assert_eq!(voe(&d, &c).unwrap(), 50.0);
        let e = mask(200, |_| false);
        assert!(voe(&e, &e).is_err());
    }

    #[test]
    fn rvd_cases() {
        let b = mask(200, |i| i < 100);
        assert_eq!(rvd(&b, &b).unwrap(), 0.0);
        assert_eq!(rvd(&mask(200, |i| i < 110), &b).unwrap(), 10.0);
        assert_eq!(rvd(&mask(200, |i| i < 90), &b).unwrap(), -10.0);
        assert!(rvd(&b, &mask(200, |_| false)).is_err());
    }

    #[test]
    fn empty_result_scores_zero() {
        let b = mask(200, |i| i < 100);
        let r = evaluate(&mask(200, |_| false), &b).unwrap();
        assert_eq!((r.voe, r.rvd), (100.0, -100.0));
        assert!(r.asd.is_infinite() && r.msd.is_infinite());
        assert_eq!(r.total, 0.0);
        assert!(evaluate(&b, &mask(200, |_| false)).is_err());
    }

    #[test]
    fn scoring_anchors() {
        let (s, t) = sliver_score([0.0; 5]);
        assert_eq!(s, [100.0; 5]);
        assert_eq!(t, 100.0);
        let (s, t) = sliver_score(REFERENCE_VALUES);
        assert_eq!(s, [75.0; 5]);
        assert_eq!(t, 75.0);
        assert_eq!(sliver_score([12.8, 0.0, 0.0, 0.0, 0.0]).0[0], 50.0);
        assert_eq!(sliver_score([0.0, -4.7, 0.0, 0.0, 0.0]).0[1], 75.0);
        assert_eq!(sliver_score([100.0, 0.0, 0.0, 0.0, 0.0]).0[0], 0.0);
    }

    #[test]
    fn volume_in_ml() {
        let g = Grid::filled([10, 10, 10], [1.0; 3], 1u8).unwrap();
        assert_eq!(mask_volume_ml(&g), 1.0);
        assert_eq!(mask_volume_ml(&LabelMask::empty_like(&g)), 0.0);
    }
}
