//! Forward and backward passes of the individual layer kinds.

use num_traits::Float;
use rayon::prelude::*;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Kernel/window size, stride and zero padding per axis (x, y, z).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Geometry {
    pub fn new(kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Self {
        Geometry { kernel, stride, pad }
    }

    pub fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    /// `floor((n + 2 pad − k) / stride) + 1` per axis.
    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let span = input[a] + 2 * self.pad[a];
            if self.stride[a] == 0 || self.kernel[a] == 0 || span < self.kernel[a] {
                return Err(Error::shape(format!(
                    "window {:?} with padding {:?} and stride {:?} does not fit input {:?}",
                    self.kernel, self.pad, self.stride, input
                )));
            }
            out[a] = (span - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }
}

/// Valid output range along one axis for kernel tap `d`: outputs `o` with
/// `0 <= o*s − p + d < n`. Returns `(first, end)`.
#[inline]
fn valid_range(n: usize, out: usize, s: usize, p: usize, d: usize) -> (usize, usize) {
    // o*s + d >= p  and  o*s + d < n + p
    let lo = if d >= p { 0 } else { (p - d).div_ceil(s) };
    let hi = if n + p > d { (n + p - d).div_ceil(s).min(out) } else { 0 };
    (lo, hi.max(lo))
}

/// Calls `f(out_index, in_index)` for every output voxel whose kernel tap
/// `tap` falls inside the input, both indices within a single channel plane.
#[inline]
fn for_each_tap(input: [usize; 3], output: [usize; 3], g: &Geometry, tap: [usize; 3], mut f: impl FnMut(usize, usize)) {
    let [nx, ny, _] = input;
    let [ox, oy, _] = output;
    let rx = valid_range(input[0], output[0], g.stride[0], g.pad[0], tap[0]);
    let ry = valid_range(input[1], output[1], g.stride[1], g.pad[1], tap[1]);
    let rz = valid_range(input[2], output[2], g.stride[2], g.pad[2], tap[2]);
    for z in rz.0..rz.1 {
        let iz = z * g.stride[2] + tap[2] - g.pad[2];
        for y in ry.0..ry.1 {
            let iy = y * g.stride[1] + tap[1] - g.pad[1];
            let obase = ox * (y + oy * z);
            let ibase = nx * (iy + ny * iz);
            for x in rx.0..rx.1 {
                let ix = x * g.stride[0] + tap[0] - g.pad[0];
                f(obase + x, ibase + ix);
            }
        }
    }
}

fn taps(g: &Geometry) -> impl Iterator<Item = [usize; 3]> + '_ {
    let [kx, ky, kz] = g.kernel;
    (0..kz).flat_map(move |z| (0..ky).flat_map(move |y| (0..kx).map(move |x| [x, y, z])))
}

/// Number of weights of a convolution: `out · in · kz · ky · kx`.
pub fn conv_weight_count(in_channels: usize, out_channels: usize, g: &Geometry) -> usize {
    out_channels * in_channels * g.taps()
}

/// Multi-channel cross-correlation plus bias. Weights are laid out
/// `[out][in][kz][ky][kx]`.
pub fn conv3d<T: Float + Send + Sync>(
    input: &Tensor<T>,
    weights: &[T],
    bias: &[T],
    out_channels: usize,
    g: &Geometry,
) -> Result<Tensor<T>> {
    let cin = input.shape().channels;
    if weights.len() != conv_weight_count(cin, out_channels, g) || bias.len() != out_channels {
        return Err(Error::shape(format!(
            "convolution expects {} weights and {out_channels} biases for {cin} input channels, got {} and {}",
            conv_weight_count(cin, out_channels, g),
            weights.len(),
            bias.len()
        )));
    }
    let in_dims = input.shape().dims;
    let out_dims = g.output_dims(in_dims)?;
    let shape = Shape::new(out_dims, out_channels);
    let mut out = Tensor::zeros(shape);
    let plane = shape.voxels();
    let ntaps = g.taps();
    out.data_mut().par_chunks_mut(plane).enumerate().for_each(|(o, dst)| {
        dst.fill(bias[o]);
        for i in 0..cin {
            let src = input.channel(i);
            let w = &weights[(o * cin + i) * ntaps..(o * cin + i + 1) * ntaps];
            for (t, tap) in taps(g).enumerate() {
                let wt = w[t];
                if wt == T::zero() {
                    continue;
                }
                for_each_tap(in_dims, out_dims, g, tap, |oi, ii| dst[oi] = dst[oi] + wt * src[ii]);
            }
        }
    });
    Ok(out)
}

/// Gradients of a convolution with respect to its input, weights and biases.
pub fn conv3d_backward<T: Float + Send + Sync>(
    input: &Tensor<T>,
    weights: &[T],
    grad_out: &Tensor<T>,
    g: &Geometry,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let cin = input.shape().channels;
    let cout = grad_out.shape().channels;
    let in_dims = input.shape().dims;
    let out_dims = grad_out.shape().dims;
    let ntaps = g.taps();

    let grad_bias: Vec<T> = (0..cout)
        .map(|o| grad_out.channel(o).iter().fold(T::zero(), |a, &v| a + v))
        .collect();

    let mut grad_w = vec![T::zero(); weights.len()];
    grad_w.par_chunks_mut(cin * ntaps).enumerate().for_each(|(o, gw)| {
        let go = grad_out.channel(o);
        for i in 0..cin {
            let src = input.channel(i);
            for (t, tap) in taps(g).enumerate() {
                let mut acc = T::zero();
                for_each_tap(in_dims, out_dims, g, tap, |oi, ii| acc = acc + go[oi] * src[ii]);
                gw[i * ntaps + t] = acc;
            }
        }
    });

    let mut grad_in = Tensor::zeros(input.shape());
    let plane = input.shape().voxels();
    grad_in.data_mut().par_chunks_mut(plane).enumerate().for_each(|(i, gi)| {
        for o in 0..cout {
            let go = grad_out.channel(o);
            let w = &weights[(o * cin + i) * ntaps..(o * cin + i + 1) * ntaps];
            for (t, tap) in taps(g).enumerate() {
                let wt = w[t];
                for_each_tap(in_dims, out_dims, g, tap, |oi, ii| gi[ii] = gi[ii] + wt * go[oi]);
            }
        }
    });
    (grad_in, grad_w, grad_bias)
}

/// Per output voxel, the number of window taps that land inside the input.
fn pool_counts(in_dims: [usize; 3], out_dims: [usize; 3], g: &Geometry) -> Vec<usize> {
    let mut counts = vec![0usize; out_dims.iter().product()];
    for tap in taps(g) {
        for_each_tap(in_dims, out_dims, g, tap, |oi, _| counts[oi] += 1);
    }
    counts
}

/// Mean over each pooling window. Padded positions are left out of the
/// average, so a constant input stays constant up to the border.
pub fn mean_pool<T: Float + Send + Sync>(input: &Tensor<T>, g: &Geometry) -> Result<Tensor<T>> {
    if (0..3).any(|a| g.pad[a] >= g.kernel[a]) {
        return Err(Error::shape(format!("pool padding {:?} must be smaller than the window {:?}", g.pad, g.kernel)));
    }
    let in_dims = input.shape().dims;
    let out_dims = g.output_dims(in_dims)?;
    let shape = Shape::new(out_dims, input.shape().channels);
    let counts = pool_counts(in_dims, out_dims, g);
    let mut out = Tensor::zeros(shape);
    out.data_mut().par_chunks_mut(shape.voxels()).enumerate().for_each(|(c, dst)| {
        let src = input.channel(c);
        for tap in taps(g) {
            for_each_tap(in_dims, out_dims, g, tap, |oi, ii| dst[oi] = dst[oi] + src[ii]);
        }
        for (d, &n) in dst.iter_mut().zip(&counts) {
            *d = *d / T::from(n).unwrap();
        }
    });
    Ok(out)
}

pub fn mean_pool_backward<T: Float + Send + Sync>(input_shape: Shape, grad_out: &Tensor<T>, g: &Geometry) -> Tensor<T> {
    let in_dims = input_shape.dims;
    let out_dims = grad_out.shape().dims;
    let counts = pool_counts(in_dims, out_dims, g);
    let mut grad_in = Tensor::zeros(input_shape);
    grad_in.data_mut().par_chunks_mut(input_shape.voxels()).enumerate().for_each(|(c, gi)| {
        let go = grad_out.channel(c);
        for tap in taps(g) {
            for_each_tap(in_dims, out_dims, g, tap, |oi, ii| {
                gi[ii] = gi[ii] + go[oi] / T::from(counts[oi]).unwrap()
            });
        }
    });
    grad_in
}

/// Across-channel local response normalisation
/// `b_c = a_c / (k + α Σ_{|c'−c| ≤ depth/2} a_{c'}²)^β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrnParams {
    pub depth: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            depth: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

/// Per element `k + α Σ a²` over the channel neighbourhood.
fn lrn_scale<T: Float + Send + Sync>(input: &Tensor<T>, p: &LrnParams) -> Vec<T> {
    let shape = input.shape();
    let (cn, v) = (shape.channels, shape.voxels());
    let half = p.depth / 2;
    let (k, alpha) = (T::from(p.k).unwrap(), T::from(p.alpha).unwrap());
    let mut s = vec![T::zero(); shape.len()];
    s.par_chunks_mut(v).enumerate().for_each(|(c, dst)| {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(cn - 1);
        dst.fill(T::zero());
        for cc in lo..=hi {
            for (d, &a) in dst.iter_mut().zip(input.channel(cc)) {
                *d = *d + a * a;
            }
        }
        for d in dst.iter_mut() {
            *d = k + alpha * *d;
        }
    });
    s
}

pub fn lrn<T: Float + Send + Sync>(input: &Tensor<T>, p: &LrnParams) -> Result<Tensor<T>> {
    if p.depth.is_multiple_of(2) {
        return Err(Error::param(format!("LRN depth must be odd, got {}", p.depth)));
    }
    let s = lrn_scale(input, p);
    let beta = T::from(p.beta).unwrap();
    let data = input.data().iter().zip(&s).map(|(&a, &s)| a / s.powf(beta)).collect();
    Tensor::from_vec(input.shape(), data)
}

pub fn lrn_backward<T: Float + Send + Sync>(input: &Tensor<T>, grad_out: &Tensor<T>, p: &LrnParams) -> Tensor<T> {
    let shape = input.shape();
    let (cn, v) = (shape.channels, shape.voxels());
    let half = p.depth / 2;
    let s = lrn_scale(input, p);
    let beta = T::from(p.beta).unwrap();
    let coef = T::from(2.0 * p.alpha * p.beta).unwrap();
    let a = input.data();
    let g = grad_out.data();
    // t_c = g_c a_c s_c^(−β−1)
    let t: Vec<T> = (0..a.len()).map(|i| g[i] * a[i] * s[i].powf(-beta - T::one())).collect();
    let mut grad_in = Tensor::zeros(shape);
    grad_in.data_mut().par_chunks_mut(v).enumerate().for_each(|(j, dst)| {
        let lo = j.saturating_sub(half);
        let hi = (j + half).min(cn - 1);
        for (x, d) in dst.iter_mut().enumerate() {
            let i = j * v + x;
            let mut acc = T::zero();
            for c in lo..=hi {
                acc = acc + t[c * v + x];
            }
            *d = g[i] * s[i].powf(-beta) - coef * a[i] * acc;
        }
    });
    grad_in
}

pub fn relu<T: Float>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Float>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&a, &g)| if a > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn logistic<T: Float>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient through the logistic given its output `y`: `g · y (1 − y)`.
pub fn logistic_backward<T: Float>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::from_vec(output.shape(), data).expect("same shape")
}

/// Output shape of [`rearrange_double`]: every spatial dim doubled (or
/// cropped to `crop`), channels divided by 8.
pub fn rearrange_shape(input: Shape, crop: Option<[usize; 3]>) -> Result<Shape> {
    if !input.channels.is_multiple_of(8) {
        return Err(Error::shape(format!(
            "size doubling needs a channel count divisible by 8, got {}",
            input.channels
        )));
    }
    let doubled = input.dims.map(|n| 2 * n);
    let dims = match crop {
        Some(c) if (0..3).any(|a| c[a] > doubled[a] || c[a] == 0) => {
            return Err(Error::shape(format!("crop {c:?} does not fit doubled dims {doubled:?}")))
        }
        Some(c) => c,
        None => doubled,
    };
    Ok(Shape::new(dims, input.channels / 8))
}

/// Visits every input element with its output position, or `None` when the
/// crop drops it. Input channel `8j + o` of group `j`, with
/// `o = 4 dz + 2 dy + dx`, lands at `(2x + dx, 2y + dy, 2z + dz)` of output
/// channel `j`.
fn rearrange_pairs(input: Shape, out: Shape, mut f: impl FnMut(usize, Option<usize>)) {
    let [nx, ny, nz] = input.dims;
    let [ox, oy, oz] = out.dims;
    let start: [usize; 3] = std::array::from_fn(|a| (2 * input.dims[a] - out.dims[a]) / 2);
    let mut i = 0;
    for c in 0..input.channels {
        let (j, o) = (c / 8, c % 8);
        let (dx, dy, dz) = (o & 1, (o >> 1) & 1, o >> 2);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = [2 * x + dx, 2 * y + dy, 2 * z + dz];
                    let inside = (0..3).all(|a| p[a] >= start[a] && p[a] - start[a] < out.dims[a]);
                    let target = inside.then(|| {
                        let [px, py, pz] = [p[0] - start[0], p[1] - start[1], p[2] - start[2]];
                        px + ox * (py + oy * (pz + oz * j))
                    });
                    f(i, target);
                    i += 1;
                }
            }
        }
    }
}

/// Pixel shuffle from 8 channels to a 2×2×2 block, optionally followed by a
/// centred crop.
pub fn rearrange_double<T: Float>(input: &Tensor<T>, crop: Option<[usize; 3]>) -> Result<Tensor<T>> {
    let shape = rearrange_shape(input.shape(), crop)?;
    let mut out = Tensor::zeros(shape);
    let src = input.data();
    let dst = out.data_mut();
    rearrange_pairs(input.shape(), shape, |i, t| {
        if let Some(t) = t {
            dst[t] = src[i];
        }
    });
    Ok(out)
}

pub fn rearrange_double_backward<T: Float>(input_shape: Shape, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad_in = Tensor::zeros(input_shape);
    let go = grad_out.data();
    let gi = grad_in.data_mut();
    rearrange_pairs(input_shape, grad_out.shape(), |i, t| {
        if let Some(t) = t {
            gi[i] = go[t];
        }
    });
    grad_in
}
