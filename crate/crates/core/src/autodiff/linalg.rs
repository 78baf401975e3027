//! Batched matrix multiplication.

use super::ops::{broadcast_offsets, broadcast_shape};
use super::{numel, Result, Tensor, TensorError};

/// c += a · b for row-major a (m×k), b (k×n), c (m×n).
fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

/// da += g · bᵀ for g (m×n), b (k×n), da (m×k).
fn gemm_nt(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// db += aᵀ · g for a (m×k), g (m×n), db (k×n).
fn gemm_tn(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let drow = &mut db[p * n..(p + 1) * n];
            for (d, gj) in drow.iter_mut().zip(grow) {
                *d += aip * gj;
            }
        }
    }
}

impl Tensor {
    /// Matrix product over the last two axes; leading axes broadcast.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul needs rank >= 2, got {sa:?} and {sb:?}"
            )));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch(format!("matmul {sa:?} x {sb:?}")));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch = broadcast_shape(ba, bb)?;
        let oa = broadcast_offsets(ba, &batch);
        let ob = broadcast_offsets(bb, &batch);
        let nbatch = numel(&batch);

        let mut data = vec![0.0; nbatch * m * n];
        for q in 0..nbatch {
            gemm(
                &self.data()[oa[q] * m * k..(oa[q] + 1) * m * k],
                &other.data()[ob[q] * k * n..(ob[q] + 1) * k * n],
                &mut data[q * m * n..(q + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let mut shape = batch;
        shape.extend([m, n]);

        let (ac, bc) = (self.clone(), other.clone());
        let (ra, rb) = (self.requires_grad(), other.requires_grad());
        Ok(Tensor::from_op(
            data,
            shape,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let (a, b) = (ac.data(), bc.data());
                let ga = ra.then(|| {
                    let mut ga = vec![0.0; a.len()];
                    for q in 0..nbatch {
                        gemm_nt(
                            &g[q * m * n..(q + 1) * m * n],
                            &b[ob[q] * k * n..(ob[q] + 1) * k * n],
                            &mut ga[oa[q] * m * k..(oa[q] + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                    ga
                });
                let gb = rb.then(|| {
                    let mut gb = vec![0.0; b.len()];
                    for q in 0..nbatch {
                        gemm_tn(
                            &a[oa[q] * m * k..(oa[q] + 1) * m * k],
                            &g[q * m * n..(q + 1) * m * n],
                            &mut gb[ob[q] * k * n..(ob[q] + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    gb
                });
                vec![ga, gb]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let b = Tensor::new(vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0], &[3, 2]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::new(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn batched_against_shared_weight() {
        let x = Tensor::new((0..12).map(f64::from).collect(), &[2, 2, 3]).unwrap();
        let w = Tensor::new(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[3, 2]).unwrap();
        let y = x.matmul(&w).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2]);
        // row [r0, r1, r2] -> [r0 + r2, r1 + r2]
        assert_eq!(y.data(), &[2.0, 3.0, 8.0, 9.0, 14.0, 15.0, 20.0, 21.0]);
    }

    #[test]
    fn inner_dimension_checked() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&b), Err(TensorError::ShapeMismatch(_))));
    }
}
