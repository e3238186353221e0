use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Spatial dims plus channel count of a 4D activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub dims: [usize; 3],
    pub channels: usize,
}

impl Shape {
    pub fn new(dims: [usize; 3], channels: usize) -> Self {
        Shape { dims, channels }
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.voxels() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.dims;
        write!(f, "{x}×{y}×{z}×{}", self.channels)
    }
}

/// Channel-outermost 4D tensor: `index = x + nx (y + ny (z + nz c))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::LengthMismatch {
                expected: shape.len(),
                found: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, [usize; 3]) -> T) -> Self {
        let [nx, ny, nz] = shape.dims;
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        data.push(f(c, [x, y, z]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, nz] = self.shape.dims;
        x + nx * (y + ny * (z + nz * c))
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(c, x, y, z)]
    }

    /// One channel as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[T] {
        let v = self.shape.voxels();
        &self.data[c * v..(c + 1) * v]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from(v).unwrap()).collect(),
        }
    }
}
