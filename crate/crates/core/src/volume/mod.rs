//! Dense 3D grids and the operations that prepare a CT volume for refinement.
//!
//! Memory layout is fixed for every grid in the crate: `x` fastest, then `y`,
//! then `z`. Spacing is in millimetres per voxel along `(x, y, z)`.

mod io;
mod phantom;
mod resample;

use std::ops::Deref;

pub use io::{load_label_mask, load_probability_map, load_volume, save_grid, save_volume, ElementType, MetaHeader};
pub use phantom::{make_phantom, Confounder, Ellipsoid, Phantom, PhantomSpec};
pub use resample::{pad_crop_axis, resample, window_normalize, WINDOW_HALF_RANGE};

use crate::error::{Error, Result};

pub type Dims = [usize; 3];
pub type Spacing = [f64; 3];

/// Offsets of the six face neighbours, in the order `+x, -x, +y, -y, +z, -z`.
pub const FACE_OFFSETS: [[isize; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// A dense scalar grid with physical spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

/// CT intensities.
pub type Volume = Grid<f32>;
/// Binary labels, `0` background and `1` object.
pub type LabelMask = Grid<u8>;
/// Derived real-valued fields (thresholding map, region score, ...).
pub type RealGrid = Grid<f64>;

fn check_geometry(dims: Dims, spacing: Spacing) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::InvalidDims(dims));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::param(format!("spacing must be positive, got {spacing:?}")));
    }
    Ok(())
}

impl<T> Grid<T> {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Grid { dims, spacing, data })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        check_geometry(dims, spacing)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Ok(Grid { dims, spacing, data })
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Index of the neighbour at `offset`, or `None` outside the grid.
    #[inline]
    pub fn offset_index(&self, index: usize, offset: [isize; 3]) -> Option<usize> {
        let c = self.coords(index);
        let mut n = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + offset[a];
            if v < 0 || v >= self.dims[a] as isize {
                return None;
            }
            n[a] = v as usize;
        }
        Some(self.index(n[0], n[1], n[2]))
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.dims == other.dims
    }

    pub(crate) fn ensure_same_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// A grid with the same geometry holding `data`.
    pub fn with_data<U>(&self, data: Vec<U>) -> Result<Grid<U>> {
        Grid::new(self.dims, self.spacing, data)
    }
}

impl<T: Copy> Grid<T> {
    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Result<Self> {
        check_geometry(dims, spacing)?;
        Ok(Grid {
            dims,
            spacing,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    /// Sample with coordinates clamped to the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, z: isize) -> T {
        let cx = x.clamp(0, self.dims[0] as isize - 1) as usize;
        let cy = y.clamp(0, self.dims[1] as isize - 1) as usize;
        let cz = z.clamp(0, self.dims[2] as isize - 1) as usize;
        self.get(cx, cy, cz)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }
}

impl Grid<f32> {
    /// Trilinear sample at continuous voxel coordinates, clamped at the borders.
    pub fn sample_trilinear(&self, p: [f64; 3]) -> f64 {
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut t = [0f64; 3];
        for a in 0..3 {
            let max = (self.dims[a] - 1) as f64;
            let c = p[a].clamp(0.0, max);
            let f = c.floor();
            i0[a] = f as usize;
            i1[a] = (i0[a] + 1).min(self.dims[a] - 1);
            t[a] = c - f;
        }
        let v = |x: usize, y: usize, z: usize| self.get(x, y, z) as f64;
        let c00 = v(i0[0], i0[1], i0[2]) * (1.0 - t[0]) + v(i1[0], i0[1], i0[2]) * t[0];
        let c10 = v(i0[0], i1[1], i0[2]) * (1.0 - t[0]) + v(i1[0], i1[1], i0[2]) * t[0];
        let c01 = v(i0[0], i0[1], i1[2]) * (1.0 - t[0]) + v(i1[0], i0[1], i1[2]) * t[0];
        let c11 = v(i0[0], i1[1], i1[2]) * (1.0 - t[0]) + v(i1[0], i1[1], i1[2]) * t[0];
        let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
        let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
        c0 * (1.0 - t[2]) + c1 * t[2]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl Grid<u8> {
    /// A label mask; every value must be 0 or 1.
    pub fn new_mask(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::param(format!("label mask value {v} is not 0 or 1")));
        }
        Grid::new(dims, spacing, data)
    }

    pub fn empty_like<U>(grid: &Grid<U>) -> Self {
        Grid {
            dims: grid.dims,
            spacing: grid.spacing,
            data: vec![0; grid.len()],
        }
    }

    /// Number of foreground voxels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }
}

/// Per-voxel liver likelihood, every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap(Grid<f32>);

impl ProbabilityMap {
    pub fn new(grid: Grid<f32>) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("probability {v} outside [0, 1]")));
        }
        Ok(ProbabilityMap(grid))
    }

    pub fn into_inner(self) -> Grid<f32> {
        self.0
    }
}

impl Deref for ProbabilityMap {
    type Target = Grid<f32>;

    fn deref(&self) -> &Grid<f32> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_x_fastest() {
        let g = Grid::from_fn([3, 4, 5], [1.0; 3], |x, y, z| (x, y, z)).unwrap();
        assert_eq!(g.data()[1], (1, 0, 0));
        assert_eq!(g.data()[3], (0, 1, 0));
        assert_eq!(g.data()[12], (0, 0, 1));
        let i = g.index(2, 3, 4);
        assert_eq!(g.coords(i), [2, 3, 4]);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            Grid::<f32>::new([2, 3, 4], [1.0; 3], vec![0.0; 23]),
            Err(Error::LengthMismatch { expected: 24, found: 23 })
        ));
        assert!(Grid::<f32>::filled([0, 3, 4], [1.0; 3], 0.0).is_err());
        assert!(Grid::<f32>::filled([1, 3, 4], [1.0, 0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn offsets_stop_at_border() {
        let g = Grid::<u8>::filled([2, 2, 2], [1.0; 3], 0).unwrap();
        assert_eq!(g.offset_index(0, [-1, 0, 0]), None);
        assert_eq!(g.offset_index(0, [1, 0, 0]), Some(1));
        assert_eq!(g.offset_index(0, [0, 0, 1]), Some(4));
    }

    #[test]
    fn mask_and_probability_invariants() {
        assert!(LabelMask::new_mask([1, 1, 2], [1.0; 3], vec![0, 2]).is_err());
        let g = Grid::new([1, 1, 2], [1.0; 3], vec![0.2f32, 1.5]).unwrap();
        assert!(ProbabilityMap::new(g).is_err());
    }

    #[test]
    fn trilinear_hits_grid_points_and_midpoints() {
        let g = Grid::from_fn([3, 3, 3], [1.0; 3], |x, y, z| (x + 10 * y + 100 * z) as f32).unwrap();
        assert_eq!(g.sample_trilinear([1.0, 2.0, 0.0]), 21.0);
        assert!((g.sample_trilinear([0.5, 0.5, 0.5]) - 55.5).abs() < 1e-12);
        // clamped outside
        assert_eq!(g.sample_trilinear([-3.0, 0.0, 9.0]), 200.0);
    }
}
