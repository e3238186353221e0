//! Perona–Malik style anisotropic diffusion on 6-neighbourhoods.
//!
//! Explicit update in divergence form,
//! `u ← u + dt · Σ_n g(|u_n − u|) (u_n − u)` with `g(d) = exp(−(d/K)²)`,
//! and zero flux across the volume border. With `dt ≤ 1/6` every update is a
//! convex combination of the previous iterate, so the maximum principle
//! holds, and each pairwise flux is antisymmetric so total intensity is
//! conserved.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    pub iterations: usize,
    pub time_step: f64,
    /// Edge threshold `K` in intensity units.
    pub conductance: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            iterations: 5,
            time_step: 1.0 / 6.0,
            conductance: 30.0,
        }
    }
}

impl DiffusionParams {
    pub const MAX_TIME_STEP: f64 = 1.0 / 6.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0 && self.time_step <= Self::MAX_TIME_STEP) {
            return Err(Error::param(format!(
                "diffusion time step must be in (0, 1/6], got {}",
                self.time_step
            )));
        }
        if !(self.conductance > 0.0 && self.conductance.is_finite()) {
            return Err(Error::param(format!(
                "diffusion conductance must be positive, got {}",
                self.conductance
            )));
        }
        Ok(())
    }
}

#[inline]
fn conductance(d: f64, k: f64) -> f64 {
    let r = d / k;
    (-r * r).exp()
}

pub fn anisotropic_diffusion(vol: &Volume, params: &DiffusionParams) -> Result<Volume> {
    params.validate()?;
    if params.iterations == 0 {
        return Ok(vol.clone());
    }
    let [nx, ny, nz] = vol.dims();
    let plane = nx * ny;
    let k = params.conductance;
    let dt = params.time_step;

    let mut cur: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
    let mut next = vec![0.0; cur.len()];
    for _ in 0..params.iterations {
        next.par_chunks_mut(nx).enumerate().for_each(|(row, out)| {
            let y = row % ny;
            let z = row / ny;
            let base = row * nx;
            for (x, o) in out.iter_mut().enumerate() {
                let i = base + x;
                let u = cur[i];
                let mut flux = 0.0;
                let mut add = |j: usize| {
                    let d = cur[j] - u;
                    flux += conductance(d.abs(), k) * d;
                };
                if x + 1 < nx {
                    add(i + 1);
                }
                if x > 0 {
                    add(i - 1);
                }
                if y + 1 < ny {
                    add(i + nx);
                }
                if y > 0 {
                    add(i - nx);
                }
                if z + 1 < nz {
                    add(i + plane);
                }
                if z > 0 {
                    add(i - plane);
                }
                *o = u + dt * flux;
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    vol.with_data(cur.into_iter().map(|v| v as f32).collect())
}
