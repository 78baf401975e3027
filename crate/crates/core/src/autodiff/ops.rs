//! Elementwise operations with trailing-dimension broadcasting.

use super::{numel, Result, Tensor, TensorError};

/// Output shape of broadcasting `a` with `b`, aligned on trailing dimensions.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch(format!(
                    "cannot broadcast {a:?} with {b:?}"
                )))
            }
        };
    }
    Ok(out)
}

/// For every flat index of `out`, the flat index into a tensor of shape
/// `src` that broadcasts to it.
pub(crate) fn broadcast_offsets(src: &[usize], out: &[usize]) -> Vec<usize> {
    let n = numel(out);
    if src == out {
        return (0..n).collect();
    }
    let rank = out.len();
    let pad = rank - src.len();
    // stride of src along each output axis, 0 where broadcast
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        if src[i] != 1 {
            strides[i + pad] = acc;
        }
        acc *= src[i];
    }
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    offsets
}

/// Sum `g` (shaped like the broadcast output) back onto the source shape.
fn reduce_to(g: &[f64], offsets: &[usize], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (gi, &o) in g.iter().zip(offsets) {
        out[o] += gi;
    }
    out
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

fn binary(a: &Tensor, b: &Tensor, op: Binary) -> Result<Tensor> {
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let oa = broadcast_offsets(a.shape(), &shape);
    let ob = broadcast_offsets(b.shape(), &shape);
    let (da, db) = (a.data(), b.data());
    let data: Vec<f64> = oa
        .iter()
        .zip(&ob)
        .map(|(&i, &j)| match op {
            Binary::Add => da[i] + db[j],
            Binary::Sub => da[i] - db[j],
            Binary::Mul => da[i] * db[j],
            Binary::Div => da[i] / db[j],
        })
        .collect();
    let (ac, bc) = (a.clone(), b.clone());
    let (na, nb) = (a.numel(), b.numel());
    let (ra, rb) = (a.requires_grad(), b.requires_grad());
    Ok(Tensor::from_op(
        data,
        shape,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let (da, db) = (ac.data(), bc.data());
            let ga = ra.then(|| {
                let local: Vec<f64> = match op {
                    Binary::Add | Binary::Sub => g.to_vec(),
                    Binary::Mul => g.iter().zip(&ob).map(|(gi, &j)| gi * db[j]).collect(),
                    Binary::Div => g.iter().zip(&ob).map(|(gi, &j)| gi / db[j]).collect(),
                };
                reduce_to(&local, &oa, na)
            });
            let gb = rb.then(|| {
                let local: Vec<f64> = match op {
                    Binary::Add => g.to_vec(),
                    Binary::Sub => g.iter().map(|gi| -gi).collect(),
                    Binary::Mul => g.iter().zip(&oa).map(|(gi, &i)| gi * da[i]).collect(),
                    Binary::Div => g
                        .iter()
                        .zip(oa.iter().zip(&ob))
                        .map(|(gi, (&i, &j))| -gi * da[i] / (db[j] * db[j]))
                        .collect(),
                };
                reduce_to(&local, &ob, nb)
            });
            vec![ga, gb]
        }),
    ))
}

/// Unary map with derivative computed from (input, output).
fn unary(x: &Tensor, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let xc = x.clone();
    let out = data.clone();
    Tensor::from_op(
        data,
        x.shape().to_vec(),
        vec![x.clone()],
        Box::new(move |g| {
            let gx = g
                .iter()
                .zip(xc.data().iter().zip(&out))
                .map(|(gi, (&xi, &yi))| gi * df(xi, yi))
                .collect();
            vec![Some(gx)]
        }),
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, Binary::Div)
    }

    pub fn scalar_mul(&self, c: f64) -> Tensor {
        unary(self, move |v| c * v, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary(self, move |v| v + c, |_, _| 1.0)
    }

    pub fn neg(&self) -> Tensor {
        self.scalar_mul(-1.0)
    }

    pub fn square(&self) -> Tensor {
        unary(self, |v| v * v, |x, _| 2.0 * x)
    }

    pub fn sqrt(&self) -> Tensor {
        unary(self, f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Tensor {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn abs(&self) -> Tensor {
        unary(self, f64::abs, |x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&self) -> Tensor {
        use super::nn::{gelu, gelu_grad};
        unary(self, gelu, |x, _| gelu_grad(x))
    }
}
