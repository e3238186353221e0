use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use super::histogram::{bin_of, check_range, CumulativeHistogram};
use super::{FeatureKind, JointFeatureVolume};
use crate::error::{Error, Result};
use crate::volume::{LabelMask, RealGrid};

/// Bin count above which LBP codes are binned uniformly instead of one bin per code.
const MAX_DIRECT_LBP_BINS: usize = 4096;

/// Normaliser applied to each feature's Wasserstein distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Denominator {
    /// Divide by the feature's variance over the initial region.
    #[default]
    Variance,
    /// Divide by the square of that variance.
    VarianceSquared,
}

impl Denominator {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(Denominator::Variance),
            "variance-squared" => Ok(Denominator::VarianceSquared),
            other => Err(Error::param(format!("unknown appearance denominator `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::Variance => "variance",
            Denominator::VarianceSquared => "variance-squared",
        }
    }
}

/// Reference statistics of one feature over the initial region.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureReference {
    pub kind: FeatureKind,
    pub histogram: CumulativeHistogram,
    pub variance: f64,
    /// `false` when the feature is constant over the region; its term is dropped.
    pub enabled: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureHistogramModel {
    pub features: Vec<FeatureReference>,
    pub denominator: Denominator,
}

impl FeatureHistogramModel {
    pub fn feature(&self, kind: FeatureKind) -> &FeatureReference {
        self.features.iter().find(|f| f.kind == kind).expect("all features present")
    }

    /// `Σ_i σ_i² / 36` over the per-feature variances.
    pub fn default_gamma(&self) -> f64 {
        self.features.iter().map(|f| f.variance).sum::<f64>() / 36.0
    }

    fn weight(&self, f: &FeatureReference) -> f64 {
        match self.denominator {
            Denominator::Variance => 1.0 / f.variance,
            Denominator::VarianceSquared => 1.0 / (f.variance * f.variance),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# feature histogram model\n");
        writeln!(s, "denominator = {}", self.denominator.as_str()).unwrap();
        for f in &self.features {
            writeln!(s, "feature = {}", f.kind.name()).unwrap();
            writeln!(s, "enabled = {}", f.enabled).unwrap();
            writeln!(s, "range = {} {}", f.histogram.lo, f.histogram.hi).unwrap();
            writeln!(s, "variance = {}", f.variance).unwrap();
            let vals: Vec<String> = f.histogram.values.iter().map(|v| v.to_string()).collect();
            writeln!(s, "cumulative = {}", vals.join(" ")).unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::param(format!("feature model: {m}"));
        let mut denominator = Denominator::Variance;
        let mut features: Vec<FeatureReference> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad line `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let nums = || -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}`"))))
                    .collect()
            };
            if k == "denominator" {
                denominator = Denominator::parse(v)?;
                continue;
            }
            if k == "feature" {
                let kind = FeatureKind::ALL
                    .into_iter()
                    .find(|f| f.name() == v)
                    .ok_or_else(|| bad(format!("unknown feature `{v}`")))?;
                features.push(FeatureReference {
                    kind,
                    histogram: CumulativeHistogram {
                        lo: 0.0,
                        hi: 1.0,
                        values: vec![],
                    },
                    variance: 0.0,
                    enabled: false,
                });
                continue;
            }
            let cur = features.last_mut().ok_or_else(|| bad(format!("`{k}` before any feature")))?;
            match k {
                "enabled" => cur.enabled = v == "true",
                "range" => {
                    let r = nums()?;
                    if r.len() != 2 {
                        return Err(bad("range needs two values".into()));
                    }
                    cur.histogram.lo = r[0];
                    cur.histogram.hi = r[1];
                }
                "variance" => cur.variance = v.parse().map_err(|_| bad(format!("bad variance `{v}`")))?,
                "cumulative" => cur.histogram.values = nums()?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        for kind in FeatureKind::ALL {
            if !features.iter().any(|f| f.kind == kind) {
                return Err(bad(format!("missing feature `{}`", kind.name())));
            }
        }
        for f in &features {
            check_range(f.histogram.lo, f.histogram.hi, f.histogram.bins())?;
        }
        Ok(FeatureHistogramModel { features, denominator })
    }
}

fn lbp_binning(p: usize, bins: usize) -> (f64, f64, usize) {
    let codes = 1usize << p;
    let hi = codes as f64 - 0.5;
    if codes <= MAX_DIRECT_LBP_BINS {
        (-0.5, hi, codes)
    } else {
        (-0.5, hi, bins)
    }
}

/// Fit reference cumulative histograms and variances on the voxels of `l0`.
///
/// Intensity and variance ranges are the region's min/max padded by 1% of
/// the span; LBP codes get one bin per code. A feature that is constant over
/// the region is disabled with a warning.
pub fn fit_reference_model(features: &JointFeatureVolume, l0: &LabelMask, bins: usize) -> Result<FeatureHistogramModel> {
    if bins < 2 {
        return Err(Error::param(format!("histogram needs at least 2 bins, got {bins}")));
    }
    features.intensity.ensure_same_shape(l0, "feature model")?;
    let region: Vec<usize> = l0
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| (l != 0).then_some(i))
        .collect();
    if region.is_empty() {
        return Err(Error::EmptyRegion("initial region L0 has no voxels".into()));
    }
    let n = region.len() as f64;
    let mut refs = Vec::with_capacity(3);
    for kind in FeatureKind::ALL {
        let values: Vec<f64> = region.iter().map(|&i| features.value(kind, i)).collect();
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (lo, hi, nb) = match kind {
            FeatureKind::Lbp => lbp_binning(features.lbp_params.p, bins),
            _ => {
                let (mn, mx) = values
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let pad = if mx > mn { 0.01 * (mx - mn) } else { 0.5 };
                (mn - pad, mx + pad, bins)
            }
        };
        let mut counts = vec![0u64; nb];
        for &v in &values {
            counts[bin_of(v, lo, hi, nb)] += 1;
        }
        let histogram = CumulativeHistogram::from_counts(lo, hi, &counts)?;
        let enabled = variance > 0.0;
        if !enabled {
            warn!("feature `{}` is constant over L0; its appearance term is disabled", kind.name());
        }
        refs.push(FeatureReference {
            kind,
            histogram,
            variance,
            enabled,
        });
    }
    Ok(FeatureHistogramModel {
        features: refs,
        denominator: Denominator::default(),
    })
}

/// `P(x) = Σ_i W1(H_x^i, H_0^i) / d_i`, with `H_x^i` the cumulative histogram
/// of feature `i` over the window centred at `x` truncated to the volume,
/// and `d_i` the model's denominator for that feature.
///
/// Window sizes are `(x, y, z)` voxel counts and must be odd.
pub fn appearance_map(features: &JointFeatureVolume, model: &FeatureHistogramModel, window: [usize; 3]) -> Result<RealGrid> {
    let dims = features.dims();
    if window.iter().any(|&w| w == 0 || w % 2 == 0) {
        return Err(Error::param(format!("window sizes must be odd and positive, got {window:?}")));
    }
    if (0..3).any(|a| window[a] > dims[a]) {
        return Err(Error::param(format!("window {window:?} is larger than volume {dims:?}")));
    }

    struct Active {
        bins: usize,
        bin_idx: Vec<u16>,
        reference: Vec<f64>,
        bin_width: f64,
        weight: f64,
    }

    let active: Vec<Active> = model
        .features
        .iter()
        .filter(|f| f.enabled)
        .map(|f| {
            let h = &f.histogram;
            let nb = h.bins();
            let bin_idx = (0..features.len())
                .map(|i| bin_of(features.value(f.kind, i), h.lo, h.hi, nb) as u16)
                .collect();
            Active {
                bins: nb,
                bin_idx,
                reference: h.values.clone(),
                bin_width: h.bin_width(),
                weight: model.weight(f),
            }
        })
        .collect();
    if active.iter().any(|a| a.bins > u16::MAX as usize + 1) {
        return Err(Error::param("too many histogram bins"));
    }

    let [nx, ny, _] = dims;
    let half = window.map(|w| (w / 2) as isize);
    let range = |c: usize, a: usize| -> (usize, usize) {
        let lo = (c as isize - half[a]).max(0) as usize;
        let hi = ((c as isize + half[a]) as usize).min(dims[a] - 1);
        (lo, hi)
    };

    let mut out = vec![0.0f64; features.len()];
    if active.is_empty() {
        return features.intensity.with_data(out);
    }
    out.par_chunks_mut(nx).enumerate().for_each_init(
        || active.iter().map(|a| vec![0u32; a.bins]).collect::<Vec<_>>(),
        |counts, (row, chunk)| {
            let y = row % ny;
            let z = row / ny;
            let (y0, y1) = range(y, 1);
            let (z0, z1) = range(z, 2);
            let column_len = (y1 - y0 + 1) * (z1 - z0 + 1);
            for c in counts.iter_mut() {
                c.iter_mut().for_each(|v| *v = 0);
            }
            let column = |x: usize, counts: &mut [Vec<u32>], add: bool| {
                for zz in z0..=z1 {
                    for yy in y0..=y1 {
                        let i = x + nx * (yy + ny * zz);
                        for (a, c) in active.iter().zip(counts.iter_mut()) {
                            let b = a.bin_idx[i] as usize;
                            if add {
                                c[b] += 1;
                            } else {
                                c[b] -= 1;
                            }
                        }
                    }
                }
            };
            let (_, first_hi) = range(0, 0);
            for xx in 0..=first_hi {
                column(xx, counts, true);
            }
            for (x, o) in chunk.iter_mut().enumerate() {
                if x > 0 {
                    let entering = x as isize + half[0];
                    if entering < nx as isize {
                        column(entering as usize, counts, true);
                    }
                    let leaving = x as isize - half[0] - 1;
                    if leaving >= 0 {
                        column(leaving as usize, counts, false);
                    }
                }
                let (x0, x1) = range(x, 0);
                let n = ((x1 - x0 + 1) * column_len) as f64;
                let mut total = 0.0;
                for (a, c) in active.iter().zip(counts.iter()) {
                    let mut acc = 0u32;
                    let mut w1 = 0.0;
                    for (cnt, r) in c.iter().zip(&a.reference) {
                        acc += cnt;
                        w1 += (acc as f64 / n - r).abs();
                    }
                    total += w1 * a.bin_width * a.weight;
                }
                *o = total;
            }
        },
    );
    features.intensity.with_data(out)
}
