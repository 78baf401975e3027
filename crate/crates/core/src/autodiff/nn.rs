//! Fused neural-network primitives: GELU, softmax and layer normalization.

use super::shape_ops::split_axis;
use super::{Result, Tensor, TensorError};

pub const GELU_COEFF: f64 = 0.044715;
/// Variance offset inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-9;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

pub(crate) fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

fn axis_checked(t: &Tensor, axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= t.rank() {
        return Err(TensorError::ShapeMismatch(format!(
            "axis {axis} out of range for {:?}",
            t.shape()
        )));
    }
    Ok(split_axis(t.shape(), axis))
}

impl Tensor {
    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_checked(self, axis)?;
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let max = (0..len).map(|a| x[at(a)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for a in 0..len {
                    let e = (x[at(a)] - max).exp();
                    y[at(a)] = e;
                    total += e;
                }
                for a in 0..len {
                    y[at(a)] /= total;
                }
            }
        }
        let out = y.clone();
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + i;
                        let dot: f64 = (0..len).map(|a| g[at(a)] * out[at(a)]).sum();
                        for a in 0..len {
                            gx[at(a)] = out[at(a)] * (g[at(a)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Normalize each slice along `axis` to zero mean and unit variance, then
    /// apply per-position `gain` and `bias` (both shaped `[len]`).
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = axis_checked(self, axis)?;
        if gain.shape() != [len] || bias.shape() != [len] {
            return Err(TensorError::ShapeMismatch(format!(
                "layer_norm over axis of length {len} with gain {:?} and bias {:?}",
                gain.shape(),
                bias.shape()
            )));
        }
        let x = self.data();
        let (gm, bs) = (gain.data(), bias.data());
        let n = len as f64;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; outer * inner];
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let mean = (0..len).map(|a| x[at(a)]).sum::<f64>() / n;
                let var = (0..len).map(|a| (x[at(a)] - mean).powi(2)).sum::<f64>() / n;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                inv_std[o * inner + i] = inv;
                for a in 0..len {
                    let h = (x[at(a)] - mean) * inv;
                    xhat[at(a)] = h;
                    y[at(a)] = h * gm[a] + bs[a];
                }
            }
        }
        let gain_c = gain.clone();
        let (rx, rg, rb) = (self.requires_grad(), gain.requires_grad(), bias.requires_grad());
        Ok(Tensor::from_op(
            y,
            self.shape().to_vec(),
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |g| {
                let gm = gain_c.data();
                let mut gx = rx.then(|| vec![0.0; g.len()]);
                let mut gg = vec![0.0; len];
                let mut gb = vec![0.0; len];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| (o * len + a) * inner + i;
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for a in 0..len {
                            let k = at(a);
                            gg[a] += g[k] * xhat[k];
                            gb[a] += g[k];
                            let d = g[k] * gm[a];
                            sum_d += d;
                            sum_dx += d * xhat[k];
                        }
                        if let Some(gx) = gx.as_mut() {
                            let inv = inv_std[o * inner + i];
                            for a in 0..len {
                                let k = at(a);
                                let d = g[k] * gm[a];
                                gx[k] = inv * (d - sum_d / n - xhat[k] * sum_dx / n);
                            }
                        }
                    }
                }
                vec![gx, rg.then_some(gg), rb.then_some(gb)]
            }),
        ))
    }
}
