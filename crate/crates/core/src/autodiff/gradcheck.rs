//! Central finite-difference gradient checks.

use super::{Result, Tensor};

/// Numerical gradient of the scalar function `f` with respect to each input,
/// by central differences with step `h`.
pub fn numeric_gradient(
    f: &dyn Fn(&[Tensor]) -> Result<Tensor>,
    inputs: &[(Vec<f64>, Vec<usize>)],
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    let build = |vals: &[(Vec<f64>, Vec<usize>)]| -> Result<f64> {
        let ts = vals
            .iter()
            .map(|(d, s)| Tensor::new(d.clone(), s))
            .collect::<Result<Vec<_>>>()?;
        Ok(f(&ts)?.item())
    };
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = Vec::with_capacity(inputs[i].0.len());
        for k in 0..inputs[i].0.len() {
            let mut plus = inputs.to_vec();
            plus[i].0[k] += h;
            let mut minus = inputs.to_vec();
            minus[i].0[k] -= h;
            grad.push((build(&plus)? - build(&minus)?) / (2.0 * h));
        }
        out.push(grad);
    }
    Ok(out)
}

/// Analytic gradient of `f` with respect to each input via `backward`.
pub fn analytic_gradient(
    f: &dyn Fn(&[Tensor]) -> Result<Tensor>,
    inputs: &[(Vec<f64>, Vec<usize>)],
) -> Result<Vec<Vec<f64>>> {
    let leaves = inputs
        .iter()
        .map(|(d, s)| Tensor::leaf(d.clone(), s))
        .collect::<Result<Vec<_>>>()?;
    f(&leaves)?.backward()?;
    Ok(leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect())
}

/// Largest relative error `|a - n| / max(1, |a|, |n|)` over all entries.
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(a, n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let n = shape.iter().product();
        ((0..n).map(|_| rng.random_range(-1.5..1.5)).collect(), shape.to_vec())
    }

    fn check(f: &dyn Fn(&[Tensor]) -> Result<Tensor>, inputs: &[(Vec<f64>, Vec<usize>)]) {
        let a = analytic_gradient(f, inputs).unwrap();
        let n = numeric_gradient(f, inputs, 1e-5).unwrap();
        let err = max_relative_error(&a, &n);
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&mut rng, &[2, 3, 4]);
        let b = random(&mut rng, &[3, 4]);
        let w = random(&mut rng, &[4, 5]);
        let g = random(&mut rng, &[4]);
        let pos = (a.0.iter().map(|x| x.abs() + 0.5).collect(), a.1.clone());

        check(&|t| Ok(t[0].add(&t[1])?.square().sum()), &[a.clone(), b.clone()]);
        check(&|t| Ok(t[0].sub(&t[1])?.square().mean()), &[a.clone(), b.clone()]);
        check(&|t| Ok(t[0].mul(&t[1])?.sum()), &[a.clone(), b.clone()]);
        check(&|t| Ok(t[0].div(&t[1].exp())?.sum()), &[a.clone(), b.clone()]);
        check(&|t| Ok(t[0].scalar_mul(-2.5).add_scalar(1.0).square().sum()), &[a.clone()]);
        check(&|t| Ok(t[0].gelu().sum()), &[a.clone()]);
        check(&|t| Ok(t[0].exp().sum()), &[a.clone()]);
        check(&|t| Ok(t[0].sqrt().sum()), &[pos.clone()]);
        check(&|t| Ok(t[0].matmul(&t[1])?.square().sum()), &[a.clone(), w.clone()]);
        check(&|t| Ok(t[0].matmul(&t[0].transpose()?)?.sum()), &[a.clone()]);
        check(&|t| Ok(t[0].permute(&[2, 0, 1])?.narrow(0, 1, 2)?.square().sum()), &[a.clone()]);
        check(&|t| Ok(t[0].reshape(&[6, 4])?.sum_axis(0)?.square().sum()), &[a.clone()]);
        check(
            &|t| Ok(t[0].softmax(2)?.mul(&t[1])?.sum()),
            &[a.clone(), b.clone()],
        );
        check(
            &|t| Ok(t[0].softmax(1)?.square().sum()),
            &[a.clone()],
        );
        check(
            &|t| Ok(t[0].layer_norm(&t[1], &t[2], 2)?.mul(&t[3])?.sum()),
            &[a.clone(), g.clone(), random(&mut rng, &[4]), b.clone()],
        );
        check(
            &|t| Ok(t[0].layer_norm(&t[1], &t[2], 1)?.square().sum()),
            &[a.clone(), random(&mut rng, &[3]), random(&mut rng, &[3])],
        );
    }

    #[test]
    fn relu_gradient_away_from_kink() {
        let x = (vec![-1.0, -0.2, 0.3, 2.0], vec![4]);
        let f = |t: &[Tensor]| Ok(t[0].relu().scalar_mul(3.0).sum());
        let a = analytic_gradient(&f, &[x.clone()]).unwrap();
        assert_eq!(a[0], vec![0.0, 0.0, 3.0, 3.0]);
        let n = numeric_gradient(&f, &[x], 1e-5).unwrap();
        assert!(max_relative_error(&a, &n) < 1e-6);
    }
}
