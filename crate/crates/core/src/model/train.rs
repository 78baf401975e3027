//! Adam training loop with cosine decay, sample-sharded gradients and
//! validation-based early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss, Ctx, ModelConfig, ModelError, PhysicsFormer, Result};
use crate::autodiff::{Adam, AdamConfig, CosineSchedule, Gradients, Parameter, Tensor};
use crate::dataset::{complete_starts, make_windows, Dataset, SplitRanges, Standardizer, WindowIter, WindowSpec};
use crate::dynamics::{fit_params, station_climatologies, Coefficients, DynamicCoreParams};
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicCoreMode {
    /// Least-squares fit on the training split.
    #[default]
    Fit,
    /// All tendencies zero.
    Persistence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Hours between consecutive window starts.
    pub stride: usize,
    /// Validate every this many iterations.
    pub eval_every: u64,
    /// Stop after this many validations without improvement.
    pub patience: usize,
    /// Validation windows used per evaluation, evenly spaced.
    pub max_eval_windows: usize,
    pub dynamic_core: DynamicCoreMode,
    /// Euler step of the dynamic core, hours.
    pub dt: f64,
    /// Seeds window order and dropout.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            learning_rate: 1e-4,
            batch_size: 16,
            stride: 1,
            eval_every: 100,
            patience: 3,
            max_eval_windows: 256,
            dynamic_core: DynamicCoreMode::Fit,
            dt: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub total: f64,
    pub data: f64,
    pub pw: f64,
    pub smooth: f64,
    pub lr: f64,
    pub alpha: f64,
}

pub struct TrainOutcome {
    /// Parameters from the evaluation with the lowest validation loss.
    pub model: PhysicsFormer,
    pub curve: Vec<LossRecord>,
    /// `(iteration, validation loss)` per evaluation.
    pub validation: Vec<(u64, f64)>,
    pub best_iteration: u64,
    pub iterations_run: u64,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn write_loss_curve(&self, path: &Path) -> Result<()> {
        let io = |source| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(out, "iteration,total,L_data,L_pw,L_smooth,lr,alpha").map_err(io)?;
        for r in &self.curve {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration, r.total, r.data, r.pw, r.smooth, r.lr, r.alpha
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Windows whose inputs and targets are all finite.
fn evenly_spaced(starts: &[usize], max: usize) -> Vec<usize> {
    if starts.len() <= max {
        return starts.to_vec();
    }
    (0..max).map(|k| starts[k * starts.len() / max]).collect()
}

struct SampleResult {
    grads: Gradients,
    total: f64,
    data: f64,
    pw: f64,
    smooth: f64,
}

impl PhysicsFormer {
    /// Loss and gradients of one window.
    fn sample_step(&self, iter: &WindowIter, start: usize, ctx: &mut Ctx) -> Result<SampleResult> {
        let batch = iter.batch_for(&[start]);
        let p = self.params.bind();
        let f = self.forward(&p, &batch, ctx)?;
        let target = Tensor::new(batch.targets.clone(), f.prediction.shape())?;
        let parts = loss(&f.prediction, &target, p.get(self.alpha), self.config.loss_weights())?;
        parts.total.backward()?;
        Ok(SampleResult {
            grads: p.gradients(),
            total: parts.total.item(),
            data: parts.data,
            pw: parts.pw,
            smooth: parts.smooth,
        })
    }

    /// Mean total loss over the given windows, without dropout.
    pub fn mean_loss(&self, iter: &WindowIter, starts: &[usize], exec: Execution) -> Result<f64> {
        let losses = exec.map(starts, |&s| -> Result<f64> {
            let batch = iter.batch_for(&[s]);
            let p = self.params.bind_frozen();
            let f = self.forward(&p, &batch, &mut Ctx::eval())?;
            let target = Tensor::new(batch.targets.clone(), f.prediction.shape())?;
            Ok(loss(&f.prediction, &target, p.get(self.alpha), self.config.loss_weights())?
                .total
                .item())
        });
        let mut sum = 0.0;
        for l in losses {
            sum += l?;
        }
        Ok(sum / starts.len().max(1) as f64)
    }
}

/// Dynamic-core parameters for a dataset: per-station climatology of the
/// training hours plus fitted or zero coefficients.
pub fn build_dynamics(dataset: &Dataset, splits: &SplitRanges, mode: DynamicCoreMode, dt: f64) -> Result<DynamicCoreParams> {
    let clims = station_climatologies(&dataset.series, splits.train.clone())?;
    let coefficients = match mode {
        DynamicCoreMode::Fit => fit_params(&dataset.series, splits.train.clone(), &clims, dt)?,
        DynamicCoreMode::Persistence => {
            let c = Coefficients { dt, ..Coefficients::persistence() };
            c.validate()?;
            c
        }
    };
    let ids = dataset.series.iter().map(|s| s.meta.station_id.clone()).collect();
    Ok(DynamicCoreParams::new(coefficients, ids, clims))
}

pub fn train(
    dataset: &Dataset,
    standardizer: Standardizer,
    splits: &SplitRanges,
    model_config: ModelConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.stride == 0 || cfg.eval_every == 0 {
        return Err(ModelError::Config("batch_size, stride and eval_every must be positive".into()));
    }
    model_config.validate()?;
    let dynamics = build_dynamics(dataset, splits, cfg.dynamic_core, cfg.dt)?;
    let mut model = PhysicsFormer::new(model_config, dynamics, standardizer)?;
    let spec = WindowSpec {
        lookback: model.config.lookback,
        horizon: model.config.horizon,
        stride: cfg.stride,
        batch_size: cfg.batch_size,
    };
    let train_iter = make_windows(dataset, &standardizer, splits.train.clone(), spec, None)
        .map_err(|e| ModelError::NoWindows(e.to_string()))?;
    let mut order = complete_starts(&train_iter);
    if order.is_empty() {
        return Err(ModelError::NoWindows("training split has no complete window".into()));
    }
    let val = match make_windows(dataset, &standardizer, splits.val.clone(), spec, None) {
        Ok(it) => {
            let starts = evenly_spaced(&complete_starts(&it), cfg.max_eval_windows);
            (!starts.is_empty()).then_some((it, starts))
        }
        Err(_) => None,
    };

    let mut shuffler = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut shuffler);
    let mut cursor = 0usize;
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let schedule = CosineSchedule::new(cfg.learning_rate, cfg.iterations);

    let mut curve = Vec::with_capacity(cfg.iterations as usize);
    let mut validation = Vec::new();
    let mut best: Option<(f64, u64, Vec<Parameter>)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;
    let mut iterations_run = 0;

    for it in 0..cfg.iterations {
        if cursor >= order.len() {
            order.shuffle(&mut shuffler);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let starts: Vec<(usize, usize)> = order[cursor..end].iter().copied().enumerate().collect();
        cursor = end;

        let results = exec.map(&starts, |&(k, s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(it * cfg.batch_size as u64 + k as u64 + 1);
            let mut ctx = Ctx {
                dropout: model.config.dropout,
                rng: Some(rng),
            };
            model.sample_step(&train_iter, s, &mut ctx)
        });
        let mut grads = Gradients::zeros(&model.params);
        let (mut total, mut data, mut pw, mut smooth) = (0.0, 0.0, 0.0, 0.0);
        for r in results {
            let r = r?;
            grads.add_assign(&r.grads);
            total += r.total;
            data += r.data;
            pw += r.pw;
            smooth += r.smooth;
        }
        let scale = 1.0 / starts.len() as f64;
        grads.scale(scale);
        if !(total.is_finite() && grads.is_finite()) {
            return Err(ModelError::NaNLoss { iteration: it });
        }
        let lr = schedule.lr(it);
        curve.push(LossRecord {
            iteration: it,
            total: total * scale,
            data: data * scale,
            pw: pw * scale,
            smooth: smooth * scale,
            lr,
            alpha: model.alpha(),
        });
        adam.step(&mut model.params, &grads, lr);
        iterations_run = it + 1;

        let last = it + 1 == cfg.iterations;
        if let Some((val_iter, val_starts)) = &val {
            if (it + 1) % cfg.eval_every == 0 || last {
                let v = model.mean_loss(val_iter, val_starts, exec)?;
                validation.push((it + 1, v));
                if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                    best = Some((v, it + 1, model.params.iter().cloned().collect()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        stopped_early = !last;
                        break;
                    }
                }
            }
        }
    }

    let best_iteration = match best {
        Some((_, at, params)) => {
            model.params.load_from(&params)?;
            at
        }
        None => iterations_run,
    };
    Ok(TrainOutcome {
        model,
        curve,
        validation,
        best_iteration,
        iterations_run,
        stopped_early,
    })
}
