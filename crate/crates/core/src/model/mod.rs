//! PhysicsFormer: a Transformer over stations that corrects a
//! physics-driven first guess.
//!
//! Forward pass for a window batch:
//! 1. embed each station as `Emb_var + Emb_geo + Emb_time`;
//! 2. encode with self-attention across stations;
//! 3. decode an embedding of the most recent `L` hours against the encoder
//!    output;
//! 4. project to a `(τ, V)` residual and add the dynamic-core forecast.

mod embed;
mod io;
mod layers;
mod loss;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{BoundParams, ParamId, ParamStore, Tensor, TensorError};
use crate::dataset::{DatasetError, Standardizer, WindowBatch};
use crate::dynamics::{DynamicCoreParams, DynamicsError};
use crate::NUM_VARIABLES;

pub use embed::{geo_features, normalize_longitude, time_features};
pub use io::{load_model, save_model, ModelCard, CHECKPOINT_FILE, LOSS_CURVE_FILE, MODEL_CARD_FILE, MODEL_CARD_VERSION};
pub use layers::Ctx;
pub use loss::{loss, LossParts, LossWeights};
pub use train::{build_dynamics, train, DynamicCoreMode, LossRecord, TrainConfig, TrainOutcome};

use embed::Embedding;
use layers::{DecoderLayer, EncoderLayer, Linear, Norm};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("loss became non-finite at iteration {iteration}")]
    NaNLoss { iteration: u64 },
    #[error("no training windows: {0}")]
    NoWindows(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model card: {0}")]
    Card(#[from] serde_json::Error),
}

impl ModelError {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::Config(_) => "InvalidConfig",
            ModelError::Tensor(e) => e.kind(),
            ModelError::Dynamics(e) => e.kind(),
            ModelError::Dataset(e) => e.kind(),
            ModelError::NaNLoss { .. } => "NaNLoss",
            ModelError::NoWindows(_) => "EmptyTrainingSplit",
            ModelError::Io { .. } => "IoFailure",
            ModelError::Card(_) => "SchemaMismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Hours of recent history fed to the decoder (`L`).
    pub decoder_history: usize,
    pub geo_bands: usize,
    pub time_bands: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub num_variables: usize,
    pub lambda_pw: f64,
    pub lambda_smooth: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            encoder_layers: 2,
            decoder_layers: 1,
            heads: 4,
            ff_dim: 128,
            decoder_history: 24,
            geo_bands: 8,
            time_bands: 8,
            lookback: 48,
            horizon: 24,
            num_variables: NUM_VARIABLES,
            lambda_pw: 0.1,
            lambda_smooth: 0.01,
            dropout: 0.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Config(m));
        let dims = [
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("decoder_history", self.decoder_history),
            ("geo_bands", self.geo_bands),
            ("time_bands", self.time_bands),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return err(format!("{name} must be at least 1"));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return err(format!("embed_dim {} is not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.decoder_history > self.lookback {
            return err(format!(
                "decoder_history {} exceeds lookback {}",
                self.decoder_history, self.lookback
            ));
        }
        if self.num_variables != NUM_VARIABLES {
            return err(format!("num_variables must be {NUM_VARIABLES}"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lambda_pw >= 0.0 && self.lambda_smooth >= 0.0) {
            return err("loss weights must be nonnegative".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_pw: self.lambda_pw,
            lambda_smooth: self.lambda_smooth,
        }
    }

    /// Loss terms switched off because the horizon is too short for them.
    pub fn disabled_loss_terms(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.horizon < 2 {
            out.push("L_pw needs a horizon of at least 2");
        }
        if self.horizon < 3 {
            out.push("L_smooth needs a horizon of at least 3");
        }
        out
    }

    /// Trainable scalar count, from layer dimensions alone.
    pub fn parameter_count(&self) -> usize {
        let d = self.embed_dim;
        let f = self.ff_dim;
        let tv = self.lookback * self.num_variables;
        let out = self.horizon * self.num_variables;
        let linear = |i: usize, o: usize| i * o + o;
        let norm = 2 * d;
        let mlp = |i: usize| linear(i, d) + linear(d, d);
        let attn = 4 * linear(d, d);
        let ffn = linear(d, f) + linear(f, d);
        let embeddings = mlp(tv) + mlp(4 * self.geo_bands) + mlp(8 * self.time_bands);
        let encoder = self.encoder_layers * (2 * norm + attn + ffn) + norm;
        let decoder = self.decoder_layers * (3 * norm + 2 * attn + ffn) + norm;
        embeddings + encoder + decoder + linear(d, out) + 1
    }
}

/// Outputs of one forward pass, all standardized and shaped `(B, N, τ, V)`.
pub struct Forecast {
    pub prediction: Tensor,
    pub residual: Tensor,
    pub physics: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PhysicsFormer {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub dynamics: DynamicCoreParams,
    pub standardizer: Standardizer,
    embedding: Embedding,
    encoder: Vec<EncoderLayer>,
    encoder_norm: Norm,
    decoder: Vec<DecoderLayer>,
    decoder_norm: Norm,
    head: Linear,
    alpha: ParamId,
}

impl PhysicsFormer {
    /// Fresh model with parameters drawn from `config.seed`.
    pub fn new(config: ModelConfig, dynamics: DynamicCoreParams, standardizer: Standardizer) -> Result<Self> {
        config.validate()?;
        dynamics.coefficients.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (d, h, f) = (config.embed_dim, config.heads, config.ff_dim);
        let embedding = Embedding::new(&mut store, &config, &mut rng)?;
        let encoder = (0..config.encoder_layers)
            .map(|i| EncoderLayer::new(&mut store, &format!("encoder/layer{i}"), d, h, f, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let encoder_norm = Norm::new(&mut store, "encoder/norm", d)?;
        let decoder = (0..config.decoder_layers)
            .map(|i| DecoderLayer::new(&mut store, &format!("decoder/layer{i}"), d, h, f, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let decoder_norm = Norm::new(&mut store, "decoder/norm", d)?;
        let head = Linear::zeros(&mut store, "head", d, config.horizon * NUM_VARIABLES)?;
        let alpha = store.add("alpha", &[], vec![1.0])?;
        Ok(PhysicsFormer {
            config,
            params: store,
            dynamics,
            standardizer,
            embedding,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            head,
            alpha,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_elements()
    }

    pub fn alpha_id(&self) -> ParamId {
        self.alpha
    }

    pub fn alpha(&self) -> f64 {
        self.params.get(self.alpha).values[0]
    }

    fn check_batch(&self, batch: &WindowBatch) -> Result<()> {
        let c = &self.config;
        if batch.lookback != c.lookback || batch.horizon != c.horizon {
            return Err(ModelError::Tensor(TensorError::ShapeMismatch(format!(
                "batch has lookback {} / horizon {}, model expects {} / {}",
                batch.lookback, batch.horizon, c.lookback, c.horizon
            ))));
        }
        if batch.stations != self.dynamics.num_stations() {
            return Err(DynamicsError::StationMismatch {
                expected: self.dynamics.num_stations(),
                got: batch.stations,
            }
            .into());
        }
        Ok(())
    }

    /// Station embeddings `(B, N, D)` of the full lookback window.
    pub fn embed(&self, p: &BoundParams, batch: &WindowBatch) -> Result<Tensor> {
        self.embedding.forward(p, batch, self.config.lookback)
    }

    /// Decoder input: the last `L` hours embedded by the same sub-networks.
    pub fn embed_recent(&self, p: &BoundParams, batch: &WindowBatch) -> Result<Tensor> {
        self.embedding.forward(p, batch, self.config.decoder_history)
    }

    pub fn encode(&self, p: &BoundParams, e: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = e.clone();
        for layer in &self.encoder {
            x = layer.forward(p, &x, ctx)?;
        }
        Ok(self.encoder_norm.forward(p, &x)?)
    }

    /// `memory = None` runs the decoder without its cross-attention sublayers.
    pub fn decode(&self, p: &BoundParams, e_dec: &Tensor, memory: Option<&Tensor>, ctx: &mut Ctx) -> Result<Tensor> {
        let mut x = e_dec.clone();
        for layer in &self.decoder {
            x = layer.forward(p, &x, memory, ctx)?;
        }
        Ok(self.decoder_norm.forward(p, &x)?)
    }

    /// Dynamic-core forecast in standardized units, `(B, N, τ, V)` flat.
    ///
    /// Each step is expressed as the last standardized input plus the
    /// standardized physical increment, so a zero tendency reproduces the
    /// input bits exactly.
    pub fn physics_forecast(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let (n, t_len, tau) = (batch.stations, batch.lookback, batch.horizon);
        let s = &self.standardizer;
        let mut out = Vec::with_capacity(batch.batch * n * tau * NUM_VARIABLES);
        for b in 0..batch.batch {
            let mut z_last = Vec::with_capacity(n * NUM_VARIABLES);
            for i in 0..n {
                for v in 0..NUM_VARIABLES {
                    z_last.push(batch.input_at(b, i, t_len - 1, v));
                }
            }
            let phys_last: Vec<f64> = z_last
                .iter()
                .enumerate()
                .map(|(k, &z)| s.inverse(k % NUM_VARIABLES, z))
                .collect();
            let start = batch.grid.time_at(batch.last_observed(b));
            let phys = self.dynamics.integrate(&phys_last, start, tau)?;
            for i in 0..n {
                for k in 0..tau {
                    for v in 0..NUM_VARIABLES {
                        let last = i * NUM_VARIABLES + v;
                        let step = phys[(i * tau + k) * NUM_VARIABLES + v];
                        out.push(z_last[last] + (step - phys_last[last]) / s.std[v]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Full forward pass with the given bound parameters.
    pub fn forward(&self, p: &BoundParams, batch: &WindowBatch, ctx: &mut Ctx) -> Result<Forecast> {
        self.check_batch(batch)?;
        let e = self.embed(p, batch)?;
        let e_dec = self.embed_recent(p, batch)?;
        let h = self.encode(p, &e, ctx)?;
        let z = self.decode(p, &e_dec, Some(&h), ctx)?;
        let (b, n, tau) = (batch.batch, batch.stations, batch.horizon);
        let residual = self.head.forward(p, &z)?.reshape(&[b, n, tau, NUM_VARIABLES])?;
        let physics = self.physics_forecast(batch)?;
        let phys_t = Tensor::new(physics.clone(), &[b, n, tau, NUM_VARIABLES])?;
        let prediction = phys_t.add(&residual)?;
        Ok(Forecast {
            prediction,
            residual,
            physics,
        })
    }

    /// Standardized point forecast `(B, N, τ, V)` without gradient tracking.
    pub fn predict(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let p = self.params.bind_frozen();
        let f = self.forward(&p, batch, &mut Ctx::eval())?;
        Ok(f.prediction.data().to_vec())
    }

    #[cfg(test)]
    pub(crate) fn head(&self) -> &Linear {
        &self.head
    }
}
