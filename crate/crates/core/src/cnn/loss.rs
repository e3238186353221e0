use num_traits::Float;

use super::{Gradients, Network, Tensor};
use crate::error::{Error, Result};

/// Predictions are clamped to `[PROB_EPS, 1 − PROB_EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Inputs of the logistic cost.
pub struct LossContext<'a, T> {
    pub predictions: &'a [T],
    pub targets: &'a [T],
    /// Weight-decay coefficient applied to `decay_weights`.
    pub decay: f64,
    /// Parameters of the final (regression) layer.
    pub decay_weights: &'a [T],
}

impl<T: Float> LossContext<'_, T> {
    fn check(&self) -> Result<()> {
        if self.predictions.len() != self.targets.len() || self.predictions.is_empty() {
            return Err(Error::LengthMismatch {
                expected: self.predictions.len(),
                found: self.targets.len(),
            });
        }
        Ok(())
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `−(1/n) Σ [y log F + (1 − y) log(1 − F)] + decay · ‖w‖² / 2`.
pub fn logistic_loss<T: Float>(ctx: &LossContext<'_, T>) -> Result<f64> {
    ctx.check()?;
    let n = ctx.predictions.len() as f64;
    let mut s = 0.0;
    for (&p, &y) in ctx.predictions.iter().zip(ctx.targets) {
        let (p, y) = (clamp(p.to_f64().unwrap()), y.to_f64().unwrap());
        s += y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    let w2: f64 = ctx.decay_weights.iter().map(|w| w.to_f64().unwrap().powi(2)).sum();
    Ok(-s / n + ctx.decay * w2 / 2.0)
}

/// Derivative of the data part of [`logistic_loss`] with respect to each prediction.
pub fn logistic_loss_grad<T: Float>(ctx: &LossContext<'_, T>) -> Result<Vec<T>> {
    ctx.check()?;
    let n = ctx.predictions.len() as f64;
    Ok(ctx
        .predictions
        .iter()
        .zip(ctx.targets)
        .map(|(&p, &y)| {
            let (p, y) = (clamp(p.to_f64().unwrap()), y.to_f64().unwrap());
            T::from(-(y / p - (1.0 - y) / (1.0 - p)) / n).unwrap()
        })
        .collect())
}

impl Network<f64> {
    /// Cost of the network on one input block; decay applies to the last
    /// convolution's weights.
    pub fn loss(&self, input: &Tensor<f64>, targets: &[f64], decay: f64) -> Result<f64> {
        let out = self.forward(input)?;
        logistic_loss(&LossContext {
            predictions: out.data(),
            targets,
            decay,
            decay_weights: self.params.last().map_or(&[][..], |p| &p.weights),
        })
    }

    /// Cost and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, input: &Tensor<f64>, targets: &[f64], decay: f64) -> Result<(f64, Gradients<f64>)> {
        let acts = self.forward_trace(input)?;
        let out = acts.last().unwrap();
        let ctx = LossContext {
            predictions: out.data(),
            targets,
            decay,
            decay_weights: self.params.last().map_or(&[][..], |p| &p.weights),
        };
        let loss = logistic_loss(&ctx)?;
        let g = Tensor::from_vec(out.shape(), logistic_loss_grad(&ctx)?)?;
        let mut grads = self.backward(&acts, g);
        if let (Some(gl), Some(pl)) = (grads.last_mut(), self.params.last()) {
            for (g, w) in gl.weights.iter_mut().zip(&pl.weights) {
                *g += decay * w;
            }
        }
        Ok((loss, grads))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

fn param_mut(net: &mut Network<f64>, layer: usize, is_bias: bool, k: usize) -> &mut f64 {
    let p = &mut net.params[layer];
    if is_bias {
        &mut p.bias[k]
    } else {
        &mut p.weights[k]
    }
}

/// Compare backpropagated gradients with central finite differences of step
/// `h` over every weight and bias.
pub fn gradient_check(net: &Network<f64>, input: &Tensor<f64>, targets: &[f64], decay: f64, h: f64) -> Result<GradientCheck> {
    let (_, grads) = net.loss_and_gradients(input, targets, decay)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (l, layer) in net.params.iter().enumerate() {
        for is_bias in [false, true] {
            let n = if is_bias { layer.bias.len() } else { layer.weights.len() };
            for k in 0..n {
                let orig = *param_mut(&mut probe, l, is_bias, k);
                *param_mut(&mut probe, l, is_bias, k) = orig + h;
                let up = probe.loss(input, targets, decay)?;
                *param_mut(&mut probe, l, is_bias, k) = orig - h;
                let down = probe.loss(input, targets, decay)?;
                *param_mut(&mut probe, l, is_bias, k) = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = if is_bias { grads[l].bias[k] } else { grads[l].weights[k] };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters_checked: count,
    })
}
