//! A small 3D convolutional network engine: forward pass, backpropagation,
//! the logistic cost, and weight files.
//!
//! The layer stack of the liver detector maps a 249×249×279 block to a
//! 248×248×256 likelihood map. At that size one forward pass is several
//! trillion multiply-adds, so [`NetworkSpec::table1`] is mostly used for
//! shape propagation; [`NetworkSpec::scaled`] keeps every layer's geometry
//! with fewer channels and a smaller input for actual computation.

mod layers;
mod loss;
mod tensor;
mod weights;

pub use layers::{
    conv3d, conv3d_backward, conv_weight_count, logistic, lrn, lrn_backward, mean_pool, mean_pool_backward,
    rearrange_double, rearrange_double_backward, rearrange_shape, relu, Geometry, LrnParams,
};
pub use loss::{gradient_check, logistic_loss, logistic_loss_grad, GradientCheck, LossContext, PROB_EPS};
pub use tensor::{Shape, Tensor};
pub use weights::{read_weights, write_weights, WEIGHT_MAGIC};

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{ProbabilityMap, Volume};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv { out_channels: usize, geometry: Geometry },
    MeanPool { geometry: Geometry },
    Lrn(LrnParams),
    Relu,
    /// 8 channels into a 2×2×2 block, with an optional centred crop.
    Rearrange { crop: Option<[usize; 3]> },
    Logistic,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MeanPool { .. } => "pool",
            LayerSpec::Lrn(_) => "lrn",
            LayerSpec::Relu => "relu",
            LayerSpec::Rearrange { .. } => "double",
            LayerSpec::Logistic => "logistic",
        }
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            LayerSpec::Conv { out_channels, geometry } => {
                if *out_channels == 0 {
                    return Err(Error::shape("convolution needs at least one output channel"));
                }
                Ok(Shape::new(geometry.output_dims(input.dims)?, *out_channels))
            }
            LayerSpec::MeanPool { geometry } => Ok(Shape::new(geometry.output_dims(input.dims)?, input.channels)),
            LayerSpec::Rearrange { crop } => rearrange_shape(input, *crop),
            LayerSpec::Lrn(_) | LayerSpec::Relu | LayerSpec::Logistic => Ok(input),
        }
    }

    /// Whether this layer's output corresponds to one row of the layer table
    /// (normalisation, activation and logistic layers fold into the row before).
    pub fn is_table_row(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::MeanPool { .. } | LayerSpec::Rearrange { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

fn conv(out: usize, k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> LayerSpec {
    LayerSpec::Conv {
        out_channels: out,
        geometry: Geometry::new(k, s, p),
    }
}

fn pool(k: [usize; 3], s: [usize; 3], p: [usize; 3]) -> LayerSpec {
    LayerSpec::MeanPool {
        geometry: Geometry::new(k, s, p),
    }
}

impl NetworkSpec {
    /// The detector stack with every channel count divided by `div` and the
    /// given input block. `div = 1` with a 249×249×279 input is the full
    /// network.
    fn detector(input: [usize; 3], div: usize) -> Self {
        let c = |n: usize| (n / div).max(1);
        let double = LayerSpec::Rearrange { crop: None };
        let mut layers = vec![
            conv(c(96), [7, 7, 9], [2; 3], [3, 3, 0]),
            LayerSpec::Lrn(LrnParams::default()),
            LayerSpec::Relu,
            pool([3, 3, 2], [2; 3], [1, 1, 0]),
            conv(c(256), [5; 3], [1; 3], [2, 2, 0]),
            LayerSpec::Relu,
            pool([3, 3, 2], [2; 3], [0; 3]),
        ];
        for _ in 0..5 {
            layers.push(conv(c(512), [3; 3], [1; 3], [1; 3]));
            layers.push(LayerSpec::Relu);
        }
        layers.push(double.clone());
        layers.push(conv(c(512), [3; 3], [1; 3], [1; 3]));
        layers.push(LayerSpec::Relu);
        layers.push(double.clone());
        layers.push(conv(c(128), [3; 3], [1; 3], [1; 3]));
        layers.push(LayerSpec::Relu);
        layers.push(double);
        layers.push(conv(c(16), [3; 3], [1; 3], [1; 3]));
        layers.push(LayerSpec::Relu);
        layers.push(conv(1, [3; 3], [1; 3], [1; 3]));
        layers.push(LayerSpec::Logistic);
        NetworkSpec {
            input: Shape::new(input, 1),
            layers,
        }
    }

    /// The full detector: 249×249×279×1 in, 248×248×256×1 out.
    pub fn table1() -> Self {
        Self::detector([249, 249, 279], 1)
    }

    /// Same layer geometry with 1/16 of the channels on a 57×57×59 block
    /// (output 56×56×32).
    pub fn scaled() -> Self {
        Self::detector([57, 57, 59], 16)
    }

    /// Every layer kind on a 17×17×15 block with a handful of channels;
    /// small enough for finite-difference gradient checks.
    pub fn tiny() -> Self {
        NetworkSpec {
            input: Shape::new([17, 17, 15], 1),
            layers: vec![
                conv(4, [3; 3], [2; 3], [1; 3]),
                LayerSpec::Lrn(LrnParams::default()),
                LayerSpec::Relu,
                pool([3, 3, 2], [2; 3], [1, 1, 0]),
                conv(8, [3; 3], [1; 3], [1; 3]),
                LayerSpec::Relu,
                pool([3, 3, 2], [2; 3], [0; 3]),
                conv(16, [3; 3], [1; 3], [1; 3]),
                LayerSpec::Relu,
                LayerSpec::Rearrange { crop: None },
                conv(8, [3; 3], [1; 3], [1; 3]),
                LayerSpec::Relu,
                LayerSpec::Rearrange { crop: None },
                conv(1, [3; 3], [1; 3], [1; 3]),
                LayerSpec::Logistic,
            ],
        }
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut s = self.input;
        for (k, layer) in self.layers.iter().enumerate() {
            s = layer
                .output_shape(s)
                .map_err(|e| Error::shape(format!("layer {k} ({}): {e}", layer.name())))?;
            shapes.push(s);
        }
        Ok(shapes)
    }

    /// Output shapes of the layers that make up table rows.
    pub fn table_row_shapes(&self) -> Result<Vec<Shape>> {
        let shapes = self.layer_shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(shapes)
            .filter(|(l, _)| l.is_table_row())
            .map(|(_, s)| s)
            .collect())
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(*self.layer_shapes()?.last().unwrap_or(&self.input))
    }

    /// `(in_channels, out_channels, geometry)` of each convolution in order.
    pub fn conv_layers(&self) -> Result<Vec<(usize, usize, Geometry)>> {
        let shapes = self.layer_shapes()?;
        let mut out = Vec::new();
        let mut prev = self.input;
        for (layer, s) in self.layers.iter().zip(shapes) {
            if let LayerSpec::Conv { out_channels, geometry } = layer {
                out.push((prev.channels, *out_channels, *geometry));
            }
            prev = s;
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self
            .conv_layers()?
            .iter()
            .map(|(i, o, g)| conv_weight_count(*i, *o, g) + o)
            .sum())
    }
}

/// Weights and biases of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    /// `[out][in][kz][ky][kx]`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    /// One entry per convolution, in layer order.
    pub params: Vec<ConvParams<T>>,
}

/// Parameter gradients, laid out like [`Network::params`].
pub type Gradients<T> = Vec<ConvParams<T>>;

impl<T: Float + Send + Sync> Network<T> {
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let params = spec
            .conv_layers()?
            .into_iter()
            .map(|(i, o, g)| ConvParams {
                in_channels: i,
                out_channels: o,
                kernel: g.kernel,
                weights: vec![T::zero(); conv_weight_count(i, o, &g)],
                bias: vec![T::zero(); o],
            })
            .collect();
        Ok(Network { spec, params })
    }

    /// He-normal weights (`σ = sqrt(2 / fan_in)`) and zero biases.
    pub fn random(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut net.params {
            let fan_in = (p.in_channels * p.kernel.iter().product::<usize>()) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive sigma");
            for w in &mut p.weights {
                *w = T::from(normal.sample(&mut rng)).unwrap();
            }
        }
        Ok(net)
    }

    /// Check that parameters match the spec's convolutions.
    pub fn validate(&self) -> Result<()> {
        let convs = self.spec.conv_layers()?;
        if convs.len() != self.params.len() {
            return Err(Error::shape(format!(
                "network has {} convolutions but {} parameter sets",
                convs.len(),
                self.params.len()
            )));
        }
        for (k, ((i, o, g), p)) in convs.iter().zip(&self.params).enumerate() {
            if (p.in_channels, p.out_channels, p.kernel) != (*i, *o, g.kernel)
                || p.weights.len() != conv_weight_count(*i, *o, g)
                || p.bias.len() != *o
            {
                return Err(Error::shape(format!(
                    "convolution {k}: expected {i}→{o} with kernel {:?}, got {}→{} with kernel {:?}",
                    g.kernel, p.in_channels, p.out_channels, p.kernel
                )));
            }
        }
        Ok(())
    }

    /// Input followed by every layer's output.
    pub fn forward_trace(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if input.shape() != self.spec.input {
            return Err(Error::shape(format!(
                "network expects input {}, got {}",
                self.spec.input,
                input.shape()
            )));
        }
        let mut acts = vec![input.clone()];
        let mut conv_idx = 0;
        for (k, layer) in self.spec.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let y = match layer {
                LayerSpec::Conv { out_channels, geometry } => {
                    let p = &self.params[conv_idx];
                    conv_idx += 1;
                    conv3d(x, &p.weights, &p.bias, *out_channels, geometry)
                }
                LayerSpec::MeanPool { geometry } => mean_pool(x, geometry),
                LayerSpec::Lrn(p) => lrn(x, p),
                LayerSpec::Relu => Ok(relu(x)),
                LayerSpec::Rearrange { crop } => rearrange_double(x, *crop),
                LayerSpec::Logistic => Ok(logistic(x)),
            }
            .map_err(|e| Error::shape(format!("layer {k} ({}): {e}", layer.name())))?;
            acts.push(y);
        }
        Ok(acts)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_trace(input)?.pop().unwrap())
    }

    /// Parameter gradients given the activations from [`Self::forward_trace`]
    /// and the gradient of the loss with respect to the network output.
    pub fn backward(&self, acts: &[Tensor<T>], grad_output: Tensor<T>) -> Gradients<T> {
        let mut grads: Gradients<T> = self
            .params
            .iter()
            .map(|p| ConvParams {
                weights: vec![T::zero(); p.weights.len()],
                bias: vec![T::zero(); p.bias.len()],
                ..p.clone()
            })
            .collect();
        let mut g = grad_output;
        let mut conv_idx = self.params.len();
        for (k, layer) in self.spec.layers.iter().enumerate().rev() {
            let x = &acts[k];
            let y = &acts[k + 1];
            g = match layer {
                LayerSpec::Conv { geometry, .. } => {
                    conv_idx -= 1;
                    let (gi, gw, gb) = conv3d_backward(x, &self.params[conv_idx].weights, &g, geometry);
                    grads[conv_idx].weights = gw;
                    grads[conv_idx].bias = gb;
                    gi
                }
                LayerSpec::MeanPool { geometry } => mean_pool_backward(x.shape(), &g, geometry),
                LayerSpec::Lrn(p) => lrn_backward(x, &g, p),
                LayerSpec::Relu => layers::relu_backward(x, &g),
                LayerSpec::Rearrange { .. } => rearrange_double_backward(x.shape(), &g),
                LayerSpec::Logistic => layers::logistic_backward(y, &g),
            };
        }
        grads
    }
}

impl Network<f32> {
    /// Run the network on a single-channel volume whose dims equal the
    /// network input and return the likelihood map, keeping the volume's
    /// spacing scaled to the output grid.
    pub fn predict(&self, vol: &Volume) -> Result<ProbabilityMap> {
        let shape = Shape::new(vol.dims(), 1);
        let input = Tensor::from_vec(shape, vol.data().to_vec())?;
        let out = self.forward(&input)?;
        let s = out.shape();
        if s.channels != 1 {
            return Err(Error::shape(format!("network output has {} channels, expected 1", s.channels)));
        }
        let spacing = std::array::from_fn(|a| vol.spacing()[a] * vol.dims()[a] as f64 / s.dims[a] as f64);
        let data = out.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ProbabilityMap::new(Volume::new(s.dims, spacing, data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_row_shapes() {
        let rows = NetworkSpec::table1().table_row_shapes().unwrap();
        let want = [
            ([125, 125, 136], 96),
            ([63, 63, 68], 96),
            ([63, 63, 64], 256),
            ([31, 31, 32], 256),
            ([31, 31, 32], 512),
            ([31, 31, 32], 512),
            ([31, 31, 32], 512),
            ([31, 31, 32], 512),
            ([31, 31, 32], 512),
            ([62, 62, 64], 64),
            ([62, 62, 64], 512),
            ([124, 124, 128], 64),
            ([124, 124, 128], 128),
            ([248, 248, 256], 16),
            ([248, 248, 256], 16),
            ([248, 248, 256], 1),
        ];
        assert_eq!(rows.len(), 16);
        for (k, (r, (d, c))) in rows.iter().zip(want).enumerate() {
            assert_eq!(*r, Shape::new(d, c), "row {}", k + 1);
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = Network::<f64>::zeros(NetworkSpec::tiny()).unwrap();
        let x = Tensor::from_fn(net.spec.input, |_, p| p[0] as f64);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), net.spec.output_shape().unwrap());
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let mut spec = NetworkSpec::tiny();
        spec.input = Shape::new([3, 3, 3], 1);
        let e = spec.layer_shapes().unwrap_err().to_string();
        assert!(e.contains("layer"), "{e}");
        let net = Network::<f32>::zeros(NetworkSpec::tiny()).unwrap();
        assert!(net.forward(&Tensor::zeros(Shape::new([5, 5, 5], 1))).is_err());
    }

    #[test]
    fn tiny_is_small_enough_for_gradient_checks() {
        assert!(NetworkSpec::tiny().parameter_count().unwrap() <= 5000);
    }
}
