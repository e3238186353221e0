use crate::error::{Error, Result};

/// A normalised cumulative histogram over uniform bins on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeHistogram {
    pub lo: f64,
    pub hi: f64,
    /// `values[b]` is the fraction of samples in bins `0..=b`; the last entry is exactly 1.
    pub values: Vec<f64>,
}

impl CumulativeHistogram {
    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.values.len() as f64
    }

    /// Build from raw per-bin counts.
    pub fn from_counts(lo: f64, hi: f64, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyRegion("histogram of no samples".into()));
        }
        let mut acc = 0u64;
        let values = counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total as f64
            })
            .collect();
        Ok(CumulativeHistogram { lo, hi, values })
    }
}

pub(crate) fn check_range(lo: f64, hi: f64, bins: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param(format!("histogram range [{lo}, {hi}] is invalid")));
    }
    if bins < 2 {
        return Err(Error::param(format!("histogram needs at least 2 bins, got {bins}")));
    }
    Ok(())
}

/// Bin of `v` after clamping into `[lo, hi]`.
#[inline]
pub(crate) fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    if t.is_nan() || t < 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

pub fn cumulative_histogram(values: &[f64], range: (f64, f64), bins: usize) -> Result<CumulativeHistogram> {
    let (lo, hi) = range;
    check_range(lo, hi, bins)?;
    if values.is_empty() {
        return Err(Error::EmptyRegion("histogram of no samples".into()));
    }
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[bin_of(v, lo, hi, bins)] += 1;
    }
    CumulativeHistogram::from_counts(lo, hi, &counts)
}

/// 1D Wasserstein-1 distance from the difference of cumulative distributions:
/// `Σ_b |h1[b] − h2[b]| · bin_width`.
pub fn wasserstein_l1(h1: &CumulativeHistogram, h2: &CumulativeHistogram) -> Result<f64> {
    if h1.bins() != h2.bins() || h1.lo != h2.lo || h1.hi != h2.hi {
        return Err(Error::shape(format!(
            "histogram binning differs: {} bins on [{}, {}] vs {} bins on [{}, {}]",
            h1.bins(),
            h1.lo,
            h1.hi,
            h2.bins(),
            h2.lo,
            h2.hi
        )));
    }
    Ok(h1
        .values
        .iter()
        .zip(&h2.values)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * h1.bin_width())
}
