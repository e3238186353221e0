//! Synthetic liver phantoms: a noisy ellipsoid in a uniform background, an
//! optional touching confounder of the same mean intensity but different
//! texture, and a likelihood map derived from the blurred truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{Dims, Grid, LabelMask, ProbabilityMap, Spacing, Volume};

#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    /// Centre in voxel coordinates.
    pub center: [f64; 3],
    /// Semi-axes in voxels.
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn fits(&self, dims: Dims) -> bool {
        (0..3).all(|a| {
            self.radii[a] > 0.0
                && self.center[a] - self.radii[a] >= 0.0
                && self.center[a] + self.radii[a] <= (dims[a] - 1) as f64
        })
    }

    /// Analytic volume in voxels, `4/3 π abc`.
    pub fn analytic_voxels(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii.iter().product::<f64>()
    }
}

/// A blob with the liver's mean intensity and a checkerboard texture of
/// `texture_amplitude` on top of the noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Confounder {
    pub shape: Ellipsoid,
    pub texture_amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub liver: Ellipsoid,
    pub liver_mean: f64,
    pub background_mean: f64,
    /// Standard deviation of the additive Gaussian noise, applied everywhere.
    pub noise_sigma: f64,
    pub confounder: Option<Confounder>,
    /// Gaussian blur (voxels) used to turn the truth into a likelihood map.
    pub blur_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [128, 128, 128],
            spacing: [1.0, 1.0, 1.0],
            liver: Ellipsoid {
                center: [56.0, 64.0, 64.0],
                radii: [40.0, 30.0, 25.0],
            },
            liver_mean: 120.0,
            background_mean: 40.0,
            noise_sigma: 8.0,
            confounder: Some(Confounder {
                shape: Ellipsoid {
                    center: [107.0, 64.0, 64.0],
                    radii: [12.0, 12.0, 12.0],
                },
                texture_amplitude: 20.0,
            }),
            blur_sigma: 2.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub volume: Volume,
    pub truth: LabelMask,
    pub probability: ProbabilityMap,
}

fn parse_list<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
    let vals: Vec<f64> = v
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::param(format!("{key}: cannot parse `{v}`")))?;
    vals.try_into()
        .map_err(|_| Error::param(format!("{key}: expected {N} values, got `{v}`")))
}

impl PhantomSpec {
    /// Parse a `key = value` text description. Unknown keys are rejected;
    /// missing keys keep their [`Default`] values. `confounder = none`
    /// removes the confounder.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = PhantomSpec::default();
        let mut conf = spec.confounder.clone().unwrap_or(Confounder {
            shape: Ellipsoid {
                center: [0.0; 3],
                radii: [1.0; 3],
            },
            texture_amplitude: 0.0,
        });
        let mut has_conf = spec.confounder.is_some();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::param(format!("phantom spec line without `=`: `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let scalar = || {
                v.parse::<f64>()
                    .map_err(|_| Error::param(format!("{k}: cannot parse `{v}`")))
            };
            match k {
                "dims" => spec.dims = parse_list::<3>(k, v)?.map(|d| d as usize),
                "spacing" => spec.spacing = parse_list::<3>(k, v)?,
                "liver_center" => spec.liver.center = parse_list::<3>(k, v)?,
                "liver_radii" => spec.liver.radii = parse_list::<3>(k, v)?,
                "liver_mean" => spec.liver_mean = scalar()?,
                "background_mean" => spec.background_mean = scalar()?,
                "noise_sigma" => spec.noise_sigma = scalar()?,
                "blur_sigma" => spec.blur_sigma = scalar()?,
                "seed" => {
                    spec.seed = v
                        .parse()
                        .map_err(|_| Error::param(format!("seed: cannot parse `{v}`")))?
                }
                "confounder" if v.eq_ignore_ascii_case("none") => has_conf = false,
                "confounder_center" => {
                    conf.shape.center = parse_list::<3>(k, v)?;
                    has_conf = true;
                }
                "confounder_radii" => {
                    conf.shape.radii = parse_list::<3>(k, v)?;
                    has_conf = true;
                }
                "confounder_texture" => {
                    conf.texture_amplitude = scalar()?;
                    has_conf = true;
                }
                other => return Err(Error::param(format!("unknown phantom key `{other}`"))),
            }
        }
        spec.confounder = has_conf.then_some(conf);
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let l3 = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        let mut s = format!(
            "dims = {} {} {}\nspacing = {}\nliver_center = {}\nliver_radii = {}\n\
             liver_mean = {}\nbackground_mean = {}\nnoise_sigma = {}\nblur_sigma = {}\nseed = {}\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            l3(self.spacing),
            l3(self.liver.center),
            l3(self.liver.radii),
            self.liver_mean,
            self.background_mean,
            self.noise_sigma,
            self.blur_sigma,
            self.seed
        );
        match &self.confounder {
            Some(c) => s.push_str(&format!(
                "confounder_center = {}\nconfounder_radii = {}\nconfounder_texture = {}\n",
                l3(c.shape.center),
                l3(c.shape.radii),
                c.texture_amplitude
            )),
            None => s.push_str("confounder = none\n"),
        }
        s
    }
}

/// Separable Gaussian blur with clamped borders.
pub(crate) fn gaussian_blur(grid: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();

    let dims = grid.dims();
    let mut cur = grid.data().to_vec();
    let mut next = vec![0.0; cur.len()];
    let strides = [1usize, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        for (i, out) in next.iter_mut().enumerate() {
            let c = grid.coords(i)[axis] as isize;
            let base = i - c as usize * strides[axis];
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = (c + k as isize - radius).clamp(0, n - 1) as usize;
                acc += w * cur[base + j * strides[axis]];
            }
            *out = acc;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Grid::new(dims, grid.spacing(), cur).expect("same geometry")
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    if spec.dims.contains(&0) {
        return Err(Error::InvalidDims(spec.dims));
    }
    if !spec.liver.fits(spec.dims) {
        return Err(Error::param(format!(
            "liver ellipsoid {:?} does not fit in grid {:?}",
            spec.liver, spec.dims
        )));
    }
    if let Some(c) = &spec.confounder {
        if !c.shape.fits(spec.dims) {
            return Err(Error::param(format!(
                "confounder ellipsoid {:?} does not fit in grid {:?}",
                c.shape, spec.dims
            )));
        }
    }
    if spec.noise_sigma < 0.0 || spec.blur_sigma < 0.0 {
        return Err(Error::param("noise and blur sigmas must be non-negative"));
    }

    let at = |x: usize, y: usize, z: usize| [x as f64, y as f64, z as f64];
    let truth = Grid::from_fn(spec.dims, spec.spacing, |x, y, z| {
        spec.liver.contains(at(x, y, z)) as u8
    })?;

    let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let volume = Grid::from_fn(spec.dims, spec.spacing, |x, y, z| {
        let p = at(x, y, z);
        let mut v = if spec.liver.contains(p) {
            spec.liver_mean
        } else {
            match &spec.confounder {
                Some(c) if c.shape.contains(p) => {
                    let sign = if (x + y + z) % 2 == 0 { 1.0 } else { -1.0 };
                    spec.liver_mean + sign * c.texture_amplitude
                }
                _ => spec.background_mean,
            }
        };
        if spec.noise_sigma > 0.0 {
            v += normal.sample(&mut rng);
        }
        v as f32
    })?;

    let blurred = gaussian_blur(&truth.map(|&v| v as f64), spec.blur_sigma);
    let (lo, hi) = blurred
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    // rescale to [0, 1], then pin each side of 0.5 so the 0.5-superlevel set is the truth
    let below_half = f32::from_bits(0.5f32.to_bits() - 1);
    let prob: Vec<f32> = blurred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&b, &t)| {
            let p = (((b - lo) / span) as f32).clamp(0.0, 1.0);
            if t == 1 {
                p.max(0.5)
            } else {
                p.min(below_half)
            }
        })
        .collect();
    let probability = ProbabilityMap::new(truth.with_data(prob)?)?;

    Ok(Phantom {
        volume,
        truth,
        probability,
    })
}
