//! Preprocessing and graph-cut refinement wired end to end.

use std::time::{Duration, Instant};

use log::info;

use crate::diffusion::{anisotropic_diffusion, DiffusionParams};
use crate::energy::{build_graph, total_energy, EnergyField, EnergyParams};
use crate::error::{Error, Result};
use crate::features::{appearance_map, fit_reference_model, FeatureHistogramModel, JointFeatureVolume};
use crate::maxflow::solve_maxflow;
use crate::probmap::{estimate_intensity_range, largest_component, threshold_likelihood, IntensityRange};
use crate::volume::{resample, window_normalize, Dims, LabelMask, ProbabilityMap, Volume};

/// Intensity window as level and width in input units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub level: f64,
    pub width: f64,
}

/// Each stage is skipped when `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreprocessParams {
    pub resample: Option<Dims>,
    pub window: Option<Window>,
    pub diffusion: Option<DiffusionParams>,
}

/// Resample, window, then diffuse.
pub fn preprocess(vol: &Volume, params: &PreprocessParams) -> Result<Volume> {
    let mut v = match params.resample {
        Some(d) if d != vol.dims() => resample(vol, d)?,
        _ => vol.clone(),
    };
    if let Some(w) = params.window {
        v = window_normalize(&v, w.level, w.width)?;
    }
    if let Some(d) = &params.diffusion {
        v = anisotropic_diffusion(&v, d)?;
    }
    Ok(v)
}

/// Wall-clock time of each named stage.
#[derive(Clone, Debug, Default)]
pub struct Timings(pub Vec<(&'static str, Duration)>);

impl Timings {
    fn time<T>(&mut self, name: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        let d = t.elapsed();
        info!("{name}: {:.3} s", d.as_secs_f64());
        self.0.push((name, d));
        out
    }

    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub mask: LabelMask,
    /// Largest connected component of the thresholded likelihood.
    pub l0: LabelMask,
    pub range: IntensityRange,
    pub model: FeatureHistogramModel,
    pub field: EnergyField,
    /// Energy of `l0` and of the returned mask.
    pub initial_energy: f64,
    pub final_energy: f64,
    pub flow: f64,
    pub timings: Timings,
}

/// Refine a likelihood map into a binary mask by minimising the energy on a
/// preprocessed volume.
pub fn refine(vol: &Volume, prob: &ProbabilityMap, params: &EnergyParams) -> Result<Refinement> {
    params.validate()?;
    vol.ensure_same_shape(&**prob, "probability map")?;
    let mut timings = Timings::default();

    let l0 = timings.time("initial region", || -> Result<LabelMask> {
        Ok(largest_component(&threshold_likelihood(prob, params.likelihood_threshold)?))
    })?;
    if l0.count() == 0 {
        return Err(Error::EmptyRegion(format!(
            "no voxel has likelihood >= {}",
            params.likelihood_threshold
        )));
    }
    let range = estimate_intensity_range(vol, &l0)?;
    info!("L0 has {} voxels, intensity range [{:.2}, {:.2}]", l0.count(), range.zeta, range.eta);

    let features = timings.time("features", || JointFeatureVolume::compute(vol, &params.lbp))?;
    let mut model = fit_reference_model(&features, &l0, params.histogram_bins)?;
    model.denominator = params.denominator;
    let gamma = params.gamma.unwrap_or_else(|| model.default_gamma());
    let appearance = timings.time("appearance map", || appearance_map(&features, &model, params.window))?;
    drop(features);

    let field = timings.time("region score", || EnergyField::compute(vol, prob, &range, &appearance, params, gamma))?;
    let graph = timings.time("graph", || build_graph(&field.region, vol, params))?;
    let cut = timings.time("max-flow", || solve_maxflow(&graph));
    drop(graph);
    let mask = vol.with_data(cut.labels.into_data())?;

    let initial_energy = total_energy(vol, &l0, &field.region, params)?;
    let final_energy = total_energy(vol, &mask, &field.region, params)?;
    if !final_energy.is_finite() {
        return Err(Error::Degenerate("energy is not finite".into()));
    }
    info!(
        "gamma {gamma:.4}, energy {initial_energy:.3} -> {final_energy:.3}, {} voxels",
        mask.count()
    );
    Ok(Refinement {
        mask,
        l0,
        range,
        model,
        field,
        initial_energy,
        final_energy,
        flow: cut.flow,
        timings,
    })
}
