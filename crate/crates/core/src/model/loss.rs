//! Training objective: data fit plus pressure–wind and smoothness penalties.

use serde::{Deserialize, Serialize};

use super::Result;
use crate::autodiff::{Tensor, TensorError};
use crate::Variable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_pw: f64,
    pub lambda_smooth: f64,
}

pub struct LossParts {
    pub total: Tensor,
    pub data: f64,
    /// Zero when the horizon is shorter than 2.
    pub pw: f64,
    /// Zero when the horizon is shorter than 3.
    pub smooth: f64,
    pub pw_enabled: bool,
    pub smooth_enabled: bool,
}

fn channel(x: &Tensor, v: Variable) -> Result<Tensor> {
    Ok(x.narrow(3, v.index(), 1)?)
}

fn first_diff(x: &Tensor) -> Result<Tensor> {
    let tau = x.shape()[2];
    Ok(x.narrow(2, 1, tau - 1)?.sub(&x.narrow(2, 0, tau - 1)?)?)
}

fn second_diff(x: &Tensor) -> Result<Tensor> {
    let tau = x.shape()[2];
    let a = x.narrow(2, 2, tau - 2)?;
    let b = x.narrow(2, 1, tau - 2)?.scalar_mul(2.0);
    let c = x.narrow(2, 0, tau - 2)?;
    Ok(a.sub(&b)?.add(&c)?)
}

/// Loss of a standardized `(B, N, τ, V)` prediction. Every term is a mean,
/// and the physical terms act on the predicted series.
pub fn loss(prediction: &Tensor, target: &Tensor, alpha: &Tensor, weights: LossWeights) -> Result<LossParts> {
    if prediction.shape() != target.shape() || prediction.rank() != 4 {
        return Err(TensorError::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        ))
        .into());
    }
    let tau = prediction.shape()[2];
    let l_data = prediction.sub(target)?.square().mean();
    let mut total = l_data.clone();
    let (mut pw, mut smooth) = (0.0, 0.0);

    let pw_enabled = tau >= 2;
    if pw_enabled {
        let dp = first_diff(&channel(prediction, Variable::SeaLevelPressure)?)?;
        let dv = first_diff(&channel(prediction, Variable::WindRate)?)?;
        let l_pw = dp.sub(&dv.mul(alpha)?)?.square().mean();
        pw = l_pw.item();
        total = total.add(&l_pw.scalar_mul(weights.lambda_pw))?;
    }
    let smooth_enabled = tau >= 3;
    if smooth_enabled {
        let dt = second_diff(&channel(prediction, Variable::Temperature)?)?;
        let dv = second_diff(&channel(prediction, Variable::WindRate)?)?;
        let l_smooth = dt.square().add(&dv.square())?.mean();
        smooth = l_smooth.item();
        total = total.add(&l_smooth.scalar_mul(weights.lambda_smooth))?;
    }
    Ok(LossParts {
        data: l_data.item(),
        total,
        pw,
        smooth,
        pw_enabled,
        smooth_enabled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NUM_VARIABLES;

    fn build(b: usize, n: usize, tau: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Tensor {
        let mut data = Vec::new();
        for bi in 0..b {
            for i in 0..n {
                for t in 0..tau {
                    for v in 0..NUM_VARIABLES {
                        data.push(f(bi, i, t, v));
                    }
                }
            }
        }
        Tensor::new(data, &[b, n, tau, NUM_VARIABLES]).unwrap()
    }

    const W: LossWeights = LossWeights { lambda_pw: 0.1, lambda_smooth: 0.01 };

    #[test]
    fn perfect_constant_prediction_is_free() {
        let x = build(2, 3, 6, |_, i, _, v| (i * 10 + v) as f64);
        let parts = loss(&x, &x, &Tensor::scalar(1.0), W).unwrap();
        assert_eq!((parts.data, parts.pw, parts.smooth, parts.total.item()), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn pressure_proportional_to_wind() {
        let alpha = 1.7;
        let x = build(1, 2, 8, |_, i, t, v| match v {
            3 => (t as f64).sin() + i as f64,
            4 => alpha * ((t as f64).sin() + i as f64) + 5.0,
            _ => 0.0,
        });
        let parts = loss(&x, &x, &Tensor::scalar(alpha), W).unwrap();
        assert!(parts.pw.abs() < 1e-24);
    }

    #[test]
    fn quadratic_temperature_penalty() {
        // T = t², Δ² = 2 at every interior step, so the mean square is 4
        let x = build(1, 1, 5, |_, _, t, v| if v == 0 { (t * t) as f64 } else { 0.0 });
        let zero = build(1, 1, 5, |_, _, _, _| 0.0);
        let parts = loss(&x, &zero, &Tensor::scalar(1.0), W).unwrap();
        assert_eq!(parts.smooth, 4.0);
        let affine = build(1, 1, 5, |_, _, t, v| if v == 0 || v == 3 { 3.0 * t as f64 - 1.0 } else { 0.0 });
        assert_eq!(loss(&affine, &zero, &Tensor::scalar(1.0), W).unwrap().smooth, 0.0);
    }

    #[test]
    fn short_horizons_disable_terms() {
        let x = build(1, 1, 2, |_, _, t, _| t as f64);
        let parts = loss(&x, &x, &Tensor::scalar(1.0), W).unwrap();
        assert!(parts.pw_enabled && !parts.smooth_enabled);
        let x = build(1, 1, 1, |_, _, _, _| 1.0);
        let parts = loss(&x, &x, &Tensor::scalar(1.0), W).unwrap();
        assert!(!parts.pw_enabled && !parts.smooth_enabled);
    }
}
