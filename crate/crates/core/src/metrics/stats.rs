use crate::error::{Error, Result};

/// Agreement between automatic and manual liver volumes (mL).
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeStats {
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares fit `auto = slope · manual + intercept`.
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation coefficient.
    pub r: f64,
    /// Mean of `auto − manual`.
    pub mean_difference: f64,
    /// Sample standard deviation of `auto − manual`.
    pub sd_difference: f64,
    /// `mean ± 1.96 SD` of the differences.
    pub limits_of_agreement: (f64, f64),
    /// SD of the differences over the mean of all volumes, in percent.
    pub cv_percent: f64,
}

fn mean(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    v.sum::<f64>() / n
}

pub fn volume_stats(pairs: &[(f64, f64)]) -> Result<VolumeStats> {
    let n = pairs.len();
    if n < 3 {
        return Err(Error::param(format!("volume statistics need at least 3 cases, got {n}")));
    }
    let autos = pairs.iter().map(|p| p.0);
    let manuals = pairs.iter().map(|p| p.1);
    let (ma, mm) = (mean(autos.clone()), mean(manuals.clone()));
    let sxx: f64 = manuals.clone().map(|m| (m - mm) * (m - mm)).sum();
    let syy: f64 = autos.clone().map(|a| (a - ma) * (a - ma)).sum();
    let sxy: f64 = pairs.iter().map(|&(a, m)| (a - ma) * (m - mm)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("manual volumes are constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = ma - slope * mm;
    let r = if syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        return Err(Error::Degenerate("automatic volumes are constant".into()));
    };

    let diffs = pairs.iter().map(|&(a, m)| a - m);
    let md = mean(diffs.clone());
    let sd = (diffs.map(|d| (d - md) * (d - md)).sum::<f64>() / (n - 1) as f64).sqrt();
    let pooled = (ma + mm) / 2.0;
    if pooled == 0.0 {
        return Err(Error::Degenerate("mean volume is zero".into()));
    }
    Ok(VolumeStats {
        pairs: pairs.to_vec(),
        slope,
        intercept,
        r,
        mean_difference: md,
        sd_difference: sd,
        limits_of_agreement: (md - 1.96 * sd, md + 1.96 * sd),
        cv_percent: 100.0 * sd / pooled,
    })
}
