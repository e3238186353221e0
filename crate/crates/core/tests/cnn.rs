use hepacut_core::cnn::{gradient_check, Geometry, LayerSpec, LrnParams, Network, NetworkSpec, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward nested-loop activations, independent of the library's
/// tensor type.
#[derive(Clone, Debug)]
struct Act {
    c: usize,
    d: [usize; 3],
    v: Vec<f64>,
}

impl Act {
    fn new(c: usize, d: [usize; 3]) -> Self {
        Act { c, d, v: vec![0.0; c * d[0] * d[1] * d[2]] }
    }
    fn at(&self, c: usize, x: usize, y: usize, z: usize) -> usize {
        ((c * self.d[2] + z) * self.d[1] + y) * self.d[0] + x
    }
    /// Zero outside the volume.
    fn padded(&self, c: usize, p: [isize; 3]) -> Option<f64> {
        if (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.d[a]) {
            Some(self.v[self.at(c, p[0] as usize, p[1] as usize, p[2] as usize)])
        } else {
            None
        }
    }
}

fn out_dims(d: [usize; 3], g: &Geometry) -> [usize; 3] {
    std::array::from_fn(|a| (d[a] + 2 * g.pad[a] - g.kernel[a]) / g.stride[a] + 1)
}

/// Sum over the window at output `o`; `f(input_position)`.
fn window(g: &Geometry, o: [usize; 3], mut f: impl FnMut([usize; 3], [isize; 3])) {
    for kz in 0..g.kernel[2] {
        for ky in 0..g.kernel[1] {
            for kx in 0..g.kernel[0] {
                let k = [kx, ky, kz];
                let p = std::array::from_fn(|a| (o[a] * g.stride[a] + k[a]) as isize - g.pad[a] as isize);
                f(k, p);
            }
        }
    }
}

fn for_voxels(d: [usize; 3], mut f: impl FnMut([usize; 3])) {
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                f([x, y, z]);
            }
        }
    }
}

fn oracle_conv(a: &Act, w: &[f64], b: &[f64], cout: usize, g: &Geometry) -> Act {
    let mut out = Act::new(cout, out_dims(a.d, g));
    let [kx, ky, kz] = g.kernel;
    for o in 0..cout {
        for_voxels(out.d, |q| {
            let mut s = b[o];
            for i in 0..a.c {
                window(g, q, |k, p| {
                    if let Some(v) = a.padded(i, p) {
                        s += v * w[(((o * a.c + i) * kz + k[2]) * ky + k[1]) * kx + k[0]];
                    }
                });
            }
            let idx = out.at(o, q[0], q[1], q[2]);
            out.v[idx] = s;
        });
    }
    out
}

fn oracle_pool(a: &Act, g: &Geometry) -> Act {
    let mut out = Act::new(a.c, out_dims(a.d, g));
    for c in 0..a.c {
        for_voxels(out.d, |q| {
            let (mut s, mut n) = (0.0, 0);
            window(g, q, |_, p| {
                if let Some(v) = a.padded(c, p) {
                    s += v;
                    n += 1;
                }
            });
            let idx = out.at(c, q[0], q[1], q[2]);
            out.v[idx] = s / n as f64;
        });
    }
    out
}

fn oracle_lrn(a: &Act, p: &LrnParams) -> Act {
    let mut out = a.clone();
    let half = p.depth as isize / 2;
    for c in 0..a.c {
        for_voxels(a.d, |q| {
            let mut s = 0.0;
            for cc in c as isize - half..=c as isize + half {
                if cc >= 0 && (cc as usize) < a.c {
                    s += a.v[a.at(cc as usize, q[0], q[1], q[2])].powi(2);
                }
            }
            let i = a.at(c, q[0], q[1], q[2]);
            out.v[i] = a.v[i] / (p.k + p.alpha * s).powf(p.beta);
        });
    }
    out
}

fn oracle_double(a: &Act) -> Act {
    let mut out = Act::new(a.c / 8, a.d.map(|n| 2 * n));
    for c in 0..a.c {
        let (j, o) = (c / 8, c % 8);
        let (dx, dy, dz) = (o % 2, (o / 2) % 2, o / 4);
        for_voxels(a.d, |[x, y, z]| {
            let t = out.at(j, 2 * x + dx, 2 * y + dy, 2 * z + dz);
            out.v[t] = a.v[a.at(c, x, y, z)];
        });
    }
    out
}

fn oracle_forward(net: &Network<f64>, input: Act) -> Act {
    let mut a = input;
    let mut conv = 0;
    for layer in &net.spec.layers {
        a = match layer {
            LayerSpec::Conv { out_channels, geometry } => {
                let p = &net.params[conv];
                conv += 1;
                oracle_conv(&a, &p.weights, &p.bias, *out_channels, geometry)
            }
            LayerSpec::MeanPool { geometry } => oracle_pool(&a, geometry),
            LayerSpec::Lrn(p) => oracle_lrn(&a, p),
            LayerSpec::Relu => Act { v: a.v.iter().map(|v| v.max(0.0)).collect(), ..a },
            LayerSpec::Rearrange { crop: None } => oracle_double(&a),
            LayerSpec::Rearrange { crop: Some(_) } => unimplemented!(),
            LayerSpec::Logistic => Act { v: a.v.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(), ..a },
        };
    }
    a
}

fn random_input(spec: &NetworkSpec, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(spec.input, |_, _| rng.random_range(-1.0..1.0))
}

fn random_targets(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_bool(0.3) as u8 as f64).collect()
}

/// Random weights with non-zero biases so every bias path is exercised.
fn tiny_net(seed: u64) -> Network<f64> {
    let mut net = Network::<f64>::random(NetworkSpec::tiny(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for p in &mut net.params {
        for b in &mut p.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    net
}

#[test]
fn tiny_forward_matches_per_layer_oracles() {
    let net = tiny_net(1);
    let input = random_input(&net.spec, 2);
    let shape = input.shape();
    let got = net.forward(&input).unwrap();
    let want = oracle_forward(
        &net,
        Act {
            c: shape.channels,
            d: shape.dims,
            v: input.data().to_vec(),
        },
    );
    assert_eq!(got.shape(), Shape::new(want.d, want.c));
    assert_eq!(got.shape(), Shape::new([8, 8, 8], 1));
    for (a, b) in got.data().iter().zip(&want.v) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        assert!(*a > 0.0 && *a < 1.0);
    }
}

#[test]
fn tiny_network_has_expected_parameter_count() {
    let spec = NetworkSpec::tiny();
    assert_eq!(spec.parameter_count().unwrap(), 4924);
    let net = Network::<f64>::random(spec, 0).unwrap();
    let n: usize = net.params.iter().map(|p| p.weights.len() + p.bias.len()).sum();
    assert_eq!(n, 4924);
}

#[test]
fn backprop_matches_finite_differences_on_tiny_network() {
    let net = tiny_net(3);
    let input = random_input(&net.spec, 4);
    let targets = random_targets(512, 5);
    let check = gradient_check(&net, &input, &targets, 0.01, 1e-5).unwrap();
    assert_eq!(check.parameters_checked, 4924);
    assert!(check.max_relative_error < 1e-3, "{check:?}");
}

#[test]
fn backprop_is_tight_on_a_single_linear_layer() {
    let spec = NetworkSpec {
        input: Shape::new([5, 6, 4], 2),
        layers: vec![
            LayerSpec::Conv {
                out_channels: 1,
                geometry: Geometry::new([3, 3, 2], [1; 3], [1, 1, 0]),
            },
            LayerSpec::Logistic,
        ],
    };
    let mut net = Network::<f64>::random(spec, 8).unwrap();
    net.params[0].bias[0] = 0.2;
    let input = random_input(&net.spec, 9);
    let n = net.spec.output_shape().unwrap().len();
    let targets = random_targets(n, 10);
    let check = gradient_check(&net, &input, &targets, 0.1, 1e-6).unwrap();
    assert!(check.max_relative_error < 1e-5, "{check:?}");
}

#[test]
fn zero_network_outputs_one_half_with_closed_form_gradient() {
    let net = Network::<f64>::zeros(NetworkSpec::tiny()).unwrap();
    let input = random_input(&net.spec, 11);
    let out = net.forward(&input).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));
    let targets = random_targets(out.data().len(), 12);
    let (loss, grads) = net.loss_and_gradients(&input, &targets, 0.3).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    let mean_y = targets.iter().sum::<f64>() / targets.len() as f64;
    let last = grads.last().unwrap();
    assert!((last.bias[0] - (0.5 - mean_y)).abs() < 1e-12);
    for (l, g) in grads.iter().enumerate() {
        assert!(g.weights.iter().all(|&w| w == 0.0), "layer {l}");
        if l + 1 < grads.len() {
            assert!(g.bias.iter().all(|&b| b == 0.0), "layer {l}");
        }
    }
}

/// The loss is smooth and convex in the last convolution's weights, so the
/// first-order remainder shrinks fourfold when the step halves.
#[test]
fn loss_is_second_order_accurate_along_final_layer_weights() {
    let net = tiny_net(13);
    let input = random_input(&net.spec, 14);
    let targets = random_targets(512, 15);
    let (l0, grads) = net.loss_and_gradients(&input, &targets, 0.01).unwrap();
    let layer = net.params.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..10 {
        let k = rng.random_range(0..net.params[layer].weights.len());
        let g = grads[layer].weights[k];
        let residual = |h: f64| {
            let mut probe = net.clone();
            probe.params[layer].weights[k] += h;
            (probe.loss(&input, &targets, 0.01).unwrap() - l0 - h * g).abs()
        };
        let ratio = residual(2e-2) / residual(1e-2);
        assert!((3.5..4.5).contains(&ratio), "weight {k}: ratio {ratio}");
    }
}

#[test]
fn scaled_network_produces_a_probability_block() {
    let spec = NetworkSpec::scaled();
    assert_eq!(spec.output_shape().unwrap(), Shape::new([56, 56, 32], 1));
    let net = Network::<f32>::random(spec, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let input = Tensor::from_fn(net.spec.input, |_, _| rng.random_range(-1.0f32..1.0));
    let out = net.forward(&input).unwrap();
    assert_eq!(out.shape(), Shape::new([56, 56, 32], 1));
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let net = Network::<f64>::zeros(NetworkSpec::tiny()).unwrap();
    let bad = Tensor::zeros(Shape::new([16, 17, 15], 1));
    assert!(net.forward(&bad).is_err());
}
