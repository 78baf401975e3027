//! Transformer building blocks over the station axis.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{BoundParams, ParamId, ParamStore, Result, Tensor};

pub(crate) const INIT_STD: f64 = 0.02;

/// Normal(0, σ) truncated to ±2σ by resampling.
pub(crate) fn truncated_normal(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..n)
        .map(|_| loop {
            let x: f64 = dist.sample(rng);
            if x.abs() <= 2.0 * std {
                break x;
            }
        })
        .collect()
}

/// Per-forward state: dropout rate and its random stream, if training.
pub struct Ctx {
    pub dropout: f64,
    pub rng: Option<ChaCha8Rng>,
}

impl Ctx {
    pub fn eval() -> Ctx {
        Ctx { dropout: 0.0, rng: None }
    }

    pub(crate) fn dropout(&mut self, x: Tensor) -> Result<Tensor> {
        let p = self.dropout;
        match self.rng.as_mut() {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = (0..x.numel())
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                x.mul(&Tensor::new(mask, x.shape())?)
            }
            _ => Ok(x),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Result<Linear> {
        Ok(Linear {
            w: store.add(&format!("{name}/w"), &[fan_in, fan_out], truncated_normal(rng, fan_in * fan_out, INIT_STD))?,
            b: store.add(&format!("{name}/b"), &[fan_out], vec![0.0; fan_out])?,
        })
    }

    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        Ok(Linear {
            w: store.add(&format!("{name}/w"), &[fan_in, fan_out], vec![0.0; fan_in * fan_out])?,
            b: store.add(&format!("{name}/b"), &[fan_out], vec![0.0; fan_out])?,
        })
    }

    pub fn forward(&self, p: &BoundParams, x: &Tensor) -> Result<Tensor> {
        x.matmul(p.get(self.w))?.add(p.get(self.b))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            gain: store.add(&format!("{name}/gain"), &[dim], vec![1.0; dim])?,
            bias: store.add(&format!("{name}/bias"), &[dim], vec![0.0; dim])?,
        })
    }

    pub fn forward(&self, p: &BoundParams, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(p.get(self.gain), p.get(self.bias), x.rank() - 1)
    }
}

/// Two-layer perceptron with GELU.
#[derive(Clone, Debug)]
pub(crate) struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: [usize; 3], rng: &mut ChaCha8Rng) -> Result<Mlp> {
        Ok(Mlp {
            fc1: Linear::new(store, &format!("{name}/fc1"), dims[0], dims[1], rng)?,
            fc2: Linear::new(store, &format!("{name}/fc2"), dims[1], dims[2], rng)?,
        })
    }

    pub fn forward(&self, p: &BoundParams, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(p, &self.fc1.forward(p, x)?.gelu())
    }
}

/// Multi-head attention; tokens are stations.
#[derive(Clone, Debug)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Attention> {
        Ok(Attention {
            q: Linear::new(store, &format!("{name}/q"), dim, dim, rng)?,
            k: Linear::new(store, &format!("{name}/k"), dim, dim, rng)?,
            v: Linear::new(store, &format!("{name}/v"), dim, dim, rng)?,
            o: Linear::new(store, &format!("{name}/o"), dim, dim, rng)?,
            heads,
        })
    }

    /// `[B, Nq, D] → [B, H, Nq, D/H]`
    fn split_heads(&self, x: Tensor) -> Result<Tensor> {
        let s = x.shape().to_vec();
        x.reshape(&[s[0], s[1], self.heads, s[2] / self.heads])?.permute(&[0, 2, 1, 3])
    }

    /// Queries from `x`, keys and values from `memory`.
    pub fn forward(&self, p: &BoundParams, x: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let (b, n, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let q = self.split_heads(self.q.forward(p, x)?)?;
        let k = self.split_heads(self.k.forward(p, memory)?)?;
        let v = self.split_heads(self.v.forward(p, memory)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let weights = q.matmul(&k.transpose()?)?.scalar_mul(scale).softmax(3)?;
        let ctx = weights.matmul(&v)?.permute(&[0, 2, 1, 3])?.reshape(&[b, n, d])?;
        self.o.forward(p, &ctx)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderLayer {
    pub ln1: Norm,
    pub attn: Attention,
    pub ln2: Norm,
    pub ffn: Mlp,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(EncoderLayer {
            ln1: Norm::new(store, &format!("{name}/ln1"), dim)?,
            attn: Attention::new(store, &format!("{name}/attn"), dim, heads, rng)?,
            ln2: Norm::new(store, &format!("{name}/ln2"), dim)?,
            ffn: Mlp::new(store, &format!("{name}/ffn"), [dim, ff, dim], rng)?,
        })
    }

    pub fn forward(&self, p: &BoundParams, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let h = self.ln1.forward(p, x)?;
        let x = x.add(&ctx.dropout(self.attn.forward(p, &h, &h)?)?)?;
        let h = self.ln2.forward(p, &x)?;
        x.add(&ctx.dropout(self.ffn.forward(p, &h)?)?)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DecoderLayer {
    pub ln1: Norm,
    pub self_attn: Attention,
    pub ln2: Norm,
    pub cross_attn: Attention,
    pub ln3: Norm,
    pub ffn: Mlp,
}

impl DecoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(DecoderLayer {
            ln1: Norm::new(store, &format!("{name}/ln1"), dim)?,
            self_attn: Attention::new(store, &format!("{name}/self_attn"), dim, heads, rng)?,
            ln2: Norm::new(store, &format!("{name}/ln2"), dim)?,
            cross_attn: Attention::new(store, &format!("{name}/cross_attn"), dim, heads, rng)?,
            ln3: Norm::new(store, &format!("{name}/ln3"), dim)?,
            ffn: Mlp::new(store, &format!("{name}/ffn"), [dim, ff, dim], rng)?,
        })
    }

    /// `memory = None` skips the cross-attention sublayer.
    pub fn forward(&self, p: &BoundParams, x: &Tensor, memory: Option<&Tensor>, ctx: &mut Ctx) -> Result<Tensor> {
        let h = self.ln1.forward(p, x)?;
        let mut x = x.add(&ctx.dropout(self.self_attn.forward(p, &h, &h)?)?)?;
        if let Some(mem) = memory {
            let h = self.ln2.forward(p, &x)?;
            x = x.add(&ctx.dropout(self.cross_attn.forward(p, &h, mem)?)?)?;
        }
        let h = self.ln3.forward(p, &x)?;
        x.add(&ctx.dropout(self.ffn.forward(p, &h)?)?)
    }
}
