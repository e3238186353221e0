//! The refinement energy: thresholding map, boundary weights, region score,
//! data term, and the s-t graph whose cuts evaluate it.
//!
//! `E(l) = λ Σ_x D_x(l_x) + Σ_{x~y} B_xy δ(l_x, l_y)` over unordered
//! 6-neighbour pairs. Positive region scores favour the object label.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{Denominator, LbpParams};
use crate::maxflow::GridGraph;
use crate::probmap::IntensityRange;
use crate::volume::{LabelMask, ProbabilityMap, RealGrid, Volume, FACE_OFFSETS};

/// How the bracket of the region score combines its three cues.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SignMode {
    /// `f + (L − 0.5) + γ𝒫`, as printed.
    Literal,
    /// `−f + (L − 0.5) − γ𝒫`: in-range intensity and reference-like
    /// appearance both push towards the object.
    #[default]
    Corrected,
}

impl SignMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(SignMode::Literal),
            "corrected" => Ok(SignMode::Corrected),
            other => Err(Error::param(format!("unknown sign mode `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignMode::Literal => "literal",
            SignMode::Corrected => "corrected",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    pub lambda: f64,
    pub beta: f64,
    /// Appearance weight. `None` derives it from the reference model
    /// (sum of the feature variances over 36).
    pub gamma: Option<f64>,
    pub lbp: LbpParams,
    /// Appearance window in voxels along x, y, z; each odd.
    pub window: [usize; 3],
    pub likelihood_threshold: f64,
    pub sign_mode: SignMode,
    pub histogram_bins: usize,
    pub denominator: Denominator,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            lambda: 70.0,
            beta: 0.2,
            gamma: None,
            lbp: LbpParams::default(),
            window: [9, 9, 5],
            likelihood_threshold: 0.5,
            sign_mode: SignMode::Corrected,
            histogram_bins: 32,
            denominator: Denominator::Variance,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::param(format!("beta must be positive, got {}", self.beta)));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::param(format!("gamma must be non-negative, got {g}")));
            }
        }
        if self.window.iter().any(|&w| w == 0 || w % 2 == 0) {
            return Err(Error::param(format!("window sizes must be odd, got {:?}", self.window)));
        }
        if !(self.likelihood_threshold > 0.0 && self.likelihood_threshold < 1.0) {
            return Err(Error::param(format!(
                "likelihood threshold must be in (0, 1), got {}",
                self.likelihood_threshold
            )));
        }
        if self.histogram_bins == 0 {
            return Err(Error::param("histogram bin count must be positive"));
        }
        self.lbp.validate()
    }
}

/// `(I − ζ)(I − η) / (η − ζ)²`: negative inside the range, zero on its ends.
pub fn threshold_map(vol: &Volume, range: &IntensityRange) -> Result<RealGrid> {
    let (z, e) = (range.zeta, range.eta);
    if z.partial_cmp(&e) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Degenerate(format!("intensity range [{z}, {e}] is empty")));
    }
    let d2 = (e - z) * (e - z);
    Ok(vol.map(|&i| {
        let i = i as f64;
        (i - z) * (i - e) / d2
    }))
}

#[inline]
pub fn boundary_weight(i1: f64, i2: f64, beta: f64) -> f64 {
    let d = i1 - i2;
    1.0 / (1.0 + beta * d * d)
}

/// Per voxel, the sum of boundary weights to its in-volume 6-neighbours.
pub fn boundary_weight_sums(vol: &Volume, beta: f64) -> RealGrid {
    let data: Vec<f64> = (0..vol.len())
        .into_par_iter()
        .map(|i| {
            let c = vol.data()[i] as f64;
            FACE_OFFSETS
                .iter()
                .filter_map(|&o| vol.offset_index(i, o))
                .map(|j| boundary_weight(c, vol.data()[j] as f64, beta))
                .sum()
        })
        .collect();
    vol.with_data(data).expect("same length")
}

#[inline]
fn bracket(f: f64, l: f64, p: f64, gamma: f64, mode: SignMode) -> f64 {
    match mode {
        SignMode::Literal => f + (l - 0.5) + gamma * p,
        SignMode::Corrected => -f + (l - 0.5) - gamma * p,
    }
}

/// `ℛ(x) = Σ_{y∈N_x} B_xy · bracket(x)` with the appearance weight already resolved.
pub fn region_score(
    vol: &Volume,
    f: &RealGrid,
    likelihood: &ProbabilityMap,
    appearance: &RealGrid,
    params: &EnergyParams,
    gamma: f64,
) -> Result<RealGrid> {
    vol.ensure_same_shape(f, "thresholding map")?;
    vol.ensure_same_shape(&**likelihood, "likelihood map")?;
    vol.ensure_same_shape(appearance, "appearance map")?;
    let sums = boundary_weight_sums(vol, params.beta);
    let data: Vec<f64> = (0..vol.len())
        .into_par_iter()
        .map(|i| {
            let b = bracket(
                f.data()[i],
                likelihood.data()[i] as f64,
                appearance.data()[i],
                gamma,
                params.sign_mode,
            );
            sums.data()[i] * b
        })
        .collect();
    vol.with_data(data)
}

#[inline]
pub fn data_term(r: f64, label: u8) -> f64 {
    if label != 0 {
        (-r).max(0.0)
    } else {
        r.max(0.0)
    }
}

/// Boundary penalty of a labeling: the weight of every cut neighbour pair.
pub fn boundary_energy(vol: &Volume, labels: &LabelMask, beta: f64) -> Result<f64> {
    vol.ensure_same_shape(labels, "label mask")?;
    let v = vol.data();
    let l = labels.data();
    let mut e = 0.0;
    for i in 0..vol.len() {
        for o in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            if let Some(j) = vol.offset_index(i, o) {
                if l[i] != l[j] {
                    e += boundary_weight(v[i] as f64, v[j] as f64, beta);
                }
            }
        }
    }
    Ok(e)
}

pub fn total_energy(vol: &Volume, labels: &LabelMask, r: &RealGrid, params: &EnergyParams) -> Result<f64> {
    vol.ensure_same_shape(r, "region score")?;
    let data: f64 = r.data().iter().zip(labels.data()).map(|(&r, &l)| data_term(r, l)).sum();
    Ok(params.lambda * data + boundary_energy(vol, labels, params.beta)?)
}

/// Graph whose cut under any labeling equals [`total_energy`] of that labeling.
pub fn build_graph(r: &RealGrid, vol: &Volume, params: &EnergyParams) -> Result<GridGraph> {
    vol.ensure_same_shape(r, "region score")?;
    let mut g = GridGraph::new(vol.dims())?;
    let v = vol.data();
    for i in 0..vol.len() {
        let ri = r.data()[i];
        g.set_terminals(i, params.lambda * ri.max(0.0), params.lambda * (-ri).max(0.0))?;
        for axis in 0..3 {
            if let Some(j) = g.forward_neighbour(i, axis) {
                g.set_link(i, axis, boundary_weight(v[i] as f64, v[j] as f64, params.beta))?;
            }
        }
    }
    Ok(g)
}

/// The aligned per-voxel inputs and outputs of the region score.
#[derive(Clone, Debug)]
pub struct EnergyField {
    pub threshold: RealGrid,
    pub likelihood: ProbabilityMap,
    pub appearance: RealGrid,
    pub region: RealGrid,
    pub boundary_sums: RealGrid,
    pub gamma: f64,
}

impl EnergyField {
    pub fn compute(
        vol: &Volume,
        likelihood: &ProbabilityMap,
        range: &IntensityRange,
        appearance: &RealGrid,
        params: &EnergyParams,
        gamma: f64,
    ) -> Result<Self> {
        let threshold = threshold_map(vol, range)?;
        let region = region_score(vol, &threshold, likelihood, appearance, params, gamma)?;
        Ok(EnergyField {
            threshold,
            likelihood: likelihood.clone(),
            appearance: appearance.clone(),
            region,
            boundary_sums: boundary_weight_sums(vol, params.beta),
            gamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Volume {
        Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(0.0f32..10.0)).unwrap()
    }

    #[test]
    fn threshold_map_values() {
        let range = IntensityRange::from_stats(100.0, 10.0).unwrap();
        let (z, e) = (range.zeta, range.eta);
        let vol = Grid::new([4, 1, 1], [1.0; 3], vec![z as f32, e as f32, ((z + e) / 2.0) as f32, (2.0 * e - z) as f32]).unwrap();
        let f = threshold_map(&vol, &range).unwrap();
        assert!(f.data()[0].abs() < 1e-6 && f.data()[1].abs() < 1e-6);
        assert!((f.data()[2] + 0.25).abs() < 1e-6);
        assert!((f.data()[3] - 2.0).abs() < 1e-6);
        let bad = IntensityRange { zeta: 1.0, eta: 1.0, mean: 1.0, stddev: 0.0 };
        assert!(threshold_map(&vol, &bad).is_err());
    }

    #[test]
    fn boundary_weight_values() {
        assert_eq!(boundary_weight(3.0, 3.0, 0.2), 1.0);
        assert!((boundary_weight(0.0, 5.0, 0.2) - 1.0 / 6.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, b) = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            assert_eq!(boundary_weight(a, b, 0.3), boundary_weight(b, a, 0.3));
        }
    }

    #[test]
    fn region_score_literal_example() {
        // centre voxel of a constant 3x3x3 volume has six unit weights
        let vol = Grid::filled([3, 3, 3], [1.0; 3], 5.0f32).unwrap();
        let f = Grid::filled([3, 3, 3], [1.0; 3], -0.25).unwrap();
        let l = ProbabilityMap::new(Grid::filled([3, 3, 3], [1.0; 3], 0.9f32).unwrap()).unwrap();
        let p = Grid::filled([3, 3, 3], [1.0; 3], 0.0).unwrap();
        let params = EnergyParams { sign_mode: SignMode::Literal, ..Default::default() };
        let r = region_score(&vol, &f, &l, &p, &params, 0.0).unwrap();
        assert!((r.get(1, 1, 1) - 0.9).abs() < 1e-6);

        let l = ProbabilityMap::new(Grid::filled([3, 3, 3], [1.0; 3], 0.5f32).unwrap()).unwrap();
        let f0 = Grid::filled([3, 3, 3], [1.0; 3], 0.0).unwrap();
        let r = region_score(&vol, &f0, &l, &p, &params, 3.0).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn region_score_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [SignMode::Literal, SignMode::Corrected] {
            let dims = [4, 3, 5];
            let vol = random_volume(&mut rng, dims);
            let f = Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(-0.3..2.0)).unwrap();
            let l = ProbabilityMap::new(Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(0.0f32..1.0)).unwrap()).unwrap();
            let p = Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(0.0..3.0)).unwrap();
            let params = EnergyParams { sign_mode: mode, beta: 0.05, ..Default::default() };
            let gamma = 0.7;
            let r = region_score(&vol, &f, &l, &p, &params, gamma).unwrap();
            for z in 0..dims[2] as isize {
                for y in 0..dims[1] as isize {
                    for x in 0..dims[0] as isize {
                        let (xu, yu, zu) = (x as usize, y as usize, z as usize);
                        let mut bsum = 0.0;
                        for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                            let (a, b, c) = (x + dx, y + dy, z + dz);
                            if a < 0 || b < 0 || c < 0 || a >= dims[0] as isize || b >= dims[1] as isize || c >= dims[2] as isize {
                                continue;
                            }
                            let d = vol.get(xu, yu, zu) as f64 - vol.get(a as usize, b as usize, c as usize) as f64;
                            bsum += 1.0 / (1.0 + 0.05 * d * d);
                        }
                        let (fv, lv, pv) = (f.get(xu, yu, zu), l.get(xu, yu, zu) as f64, p.get(xu, yu, zu));
                        let br = match mode {
                            SignMode::Literal => fv + lv - 0.5 + gamma * pv,
                            SignMode::Corrected => -fv + lv - 0.5 - gamma * pv,
                        };
                        assert!((r.get(xu, yu, zu) - bsum * br).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn data_term_cases() {
        assert_eq!(data_term(0.9, 1), 0.0);
        assert_eq!(data_term(0.9, 0), 0.9);
        assert_eq!(data_term(-2.0, 1), 2.0);
        assert_eq!(data_term(-2.0, 0), 0.0);
        assert_eq!(data_term(0.0, 0), 0.0);
        assert_eq!(data_term(0.0, 1), 0.0);
    }

    #[test]
    fn flipped_voxel_costs_six() {
        let vol = Grid::filled([3, 3, 3], [1.0; 3], 1.0f32).unwrap();
        let r = Grid::filled([3, 3, 3], [1.0; 3], 0.0).unwrap();
        let mut labels = LabelMask::empty_like(&vol);
        let params = EnergyParams::default();
        assert_eq!(total_energy(&vol, &labels, &r, &params).unwrap(), 0.0);
        labels.set(1, 1, 1, 1);
        assert_eq!(total_energy(&vol, &labels, &r, &params).unwrap(), 6.0);
    }

    #[test]
    fn graph_cut_equals_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [SignMode::Literal, SignMode::Corrected] {
            for _ in 0..10 {
                let dims = [3, 3, 3];
                let vol = random_volume(&mut rng, dims);
                let r = Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(-3.0..3.0)).unwrap();
                let params = EnergyParams { sign_mode: mode, lambda: rng.random_range(0.1..100.0), ..Default::default() };
                let g = build_graph(&r, &vol, &params).unwrap();
                for _ in 0..50 {
                    let labels = Grid::from_fn(dims, [1.0; 3], |_, _, _| rng.random_range(0..2u8)).unwrap();
                    let e = total_energy(&vol, &labels, &r, &params).unwrap();
                    let c = g.cut_cost(labels.data());
                    assert!((e - c).abs() <= 1e-9 * e.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_scores_give_zero_cut() {
        let vol = Grid::filled([2, 2, 2], [1.0; 3], 0.0f32).unwrap();
        let r = Grid::filled([2, 2, 2], [1.0; 3], 0.0).unwrap();
        let g = build_graph(&r, &vol, &EnergyParams::default()).unwrap();
        let cut = crate::maxflow::solve_maxflow(&g);
        assert_eq!(cut.flow, 0.0);
        assert!(cut.labels.count() == 0 || cut.labels.count() == 8);
    }

    #[test]
    fn params_validation() {
        assert!(EnergyParams::default().validate().is_ok());
        assert!(EnergyParams { lambda: 0.0, ..Default::default() }.validate().is_err());
        assert!(EnergyParams { window: [9, 8, 5], ..Default::default() }.validate().is_err());
        assert!(EnergyParams { gamma: Some(-1.0), ..Default::default() }.validate().is_err());
        assert!(SignMode::parse("literal").unwrap() == SignMode::Literal);
    }
}
