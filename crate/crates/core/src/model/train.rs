//! Velocity-regression training: unconditional pretraining of the base
//! weights, then conditioned LoRA-only adaptation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::dit::{mse_with_grad, DitModel, DitParams, ForwardOptions};
use super::flow::{forward_noising, gaussian_grid};
use super::patchify::encode_from_image;
use super::tensors::Tensors;
use crate::attention::PoolSpec;
use crate::error::{Error, Result};
use crate::raster::RgbImage;
use crate::rng::{derive_seed, stream, tags};
use crate::token_space::{Branch, FeatureGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainPhase {
    /// No conditioning, no context path; every non-adapter weight trains.
    Pretrain,
    /// Conditioned on line art and reference; only adapter factors train.
    Lora,
}

impl TrainPhase {
    pub fn trains(self, name: &str) -> bool {
        let adapter = name.contains(".lora.");
        match self {
            TrainPhase::Pretrain => !adapter,
            TrainPhase::Lora => adapter,
        }
    }
}

impl fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainPhase::Pretrain => "pretrain",
            TrainPhase::Lora => "lora",
        })
    }
}

impl FromStr for TrainPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(TrainPhase::Pretrain),
            "lora" => Ok(TrainPhase::Lora),
            _ => Err(Error::InvalidArgument(format!("unknown phase {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: DitParams,
    pub v: DitParams,
}

impl Adam {
    pub fn new(model: &DitModel, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: DitParams::zeros(&model.config),
            v: DitParams::zeros(&model.config),
        }
    }

    /// Updates every tensor accepted by `trainable`.
    pub fn step(&mut self, params: &mut DitParams, grads: &DitParams, trainable: impl Fn(&str) -> bool) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            if !trainable(&p.name) {
                continue;
            }
            for (((pv, &gv), mv), vv) in p.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                *pv -= lr * (*mv / bc1) / ((*vv / bc2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Samples per micro-batch.
    pub batch_size: usize,
    /// Micro-batches whose gradients are summed before one update.
    pub grad_accum: usize,
    /// Seed for data order, timesteps, noise and kernel draws.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 1,
            grad_accum: 1,
            seed: 0,
        }
    }
}

/// A triplet in token space.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTriplet {
    pub target: FeatureGrid,
    pub line: FeatureGrid,
    pub reference: FeatureGrid,
}

impl EncodedTriplet {
    pub fn encode(target: &RgbImage, line: &RgbImage, reference: &RgbImage, model: &DitModel) -> Result<Self> {
        let c = &model.config;
        let size = c.image_size();
        for img in [target, line, reference] {
            if img.dims() != (size, size) {
                return Err(Error::DimensionMismatch(format!(
                    "model expects {size}x{size} images, got {}x{}",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(Self {
            target: encode_from_image(target, c.patch, c.d_model, Branch::Noisy)?,
            line: encode_from_image(line, c.patch, c.d_model, Branch::LineArt)?,
            reference: encode_from_image(reference, c.patch, c.d_model, Branch::Reference)?,
        })
    }
}

/// The random choices of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDraws {
    pub kernel: usize,
    /// `(timestep, noise)` per sample.
    pub noise: Vec<(u32, FeatureGrid)>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: DitModel,
    pub adam: Adam,
    pub phase: TrainPhase,
    pub config: TrainConfig,
    /// Completed optimiser updates.
    pub step: u64,
}

impl Trainer {
    pub fn new(model: DitModel, phase: TrainPhase, config: TrainConfig) -> Result<Self> {
        if config.batch_size == 0 || config.grad_accum == 0 {
            return Err(Error::InvalidArgument("batch size and accumulation must be positive".into()));
        }
        if !(config.lr.is_finite() && config.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {}", config.lr)));
        }
        let adam = Adam::new(&model, config.lr);
        Ok(Self {
            model,
            adam,
            phase,
            config,
            step: 0,
        })
    }

    /// Pretrained base -> adapter phase: copies query/key weights into the
    /// context projections and resets the optimiser and step counter.
    pub fn into_lora(mut self, config: TrainConfig) -> Result<Self> {
        self.model.copy_query_key_to_context();
        Self::new(self.model, TrainPhase::Lora, config)
    }

    pub fn samples_per_step(&self) -> usize {
        self.config.batch_size * self.config.grad_accum
    }

    /// Kernel, timesteps and noise for `step`; a pure function of the seed and step.
    pub fn draws(&self, step: u64, samples: usize) -> StepDraws {
        let c = &self.model.config;
        let kernel = match c.pool_kernel {
            Some(k) => k,
            None => PoolSpec::random(self.config.seed).for_step(step).kernel,
        };
        let step_seed = derive_seed(self.config.seed, tags::TRAIN_NOISE, step);
        let noise = (0..samples as u64)
            .map(|j| {
                let mut rng = stream(step_seed, tags::TRAIN_NOISE, j);
                let t = rng.random_range(1..=c.schedule.total_steps);
                (t, gaussian_grid((c.grid, c.grid, c.d_model), &mut rng))
            })
            .collect();
        StepDraws { kernel, noise }
    }

    /// Dataset indices used at `step`, uniform with replacement.
    pub fn batch_indices(&self, step: u64, dataset_len: usize) -> Vec<usize> {
        let mut rng = stream(self.config.seed, tags::TRAIN_ORDER, step);
        (0..self.samples_per_step()).map(|_| rng.random_range(0..dataset_len)).collect()
    }

    /// Mean velocity loss over `batch` and its gradient.
    pub fn loss_and_grad(&self, batch: &[&EncodedTriplet], draws: &StepDraws) -> Result<(f64, DitParams)> {
        let m = &self.model;
        let mut grads = DitParams::zeros(&m.config);
        let mut total = 0.0;
        for (sample, (t, eps)) in batch.iter().zip(&draws.noise) {
            let sigma = m.sigma_of(*t);
            let x_t = forward_noising(&sample.target, eps, sigma)?;
            let (cond, opts) = match self.phase {
                TrainPhase::Pretrain => (
                    None,
                    ForwardOptions {
                        lambda: 0.0,
                        kernel: draws.kernel,
                        context: false,
                    },
                ),
                TrainPhase::Lora => (
                    Some((&sample.line, &sample.reference)),
                    ForwardOptions {
                        lambda: m.config.schedule.lambda_at(*t)?,
                        kernel: draws.kernel,
                        context: m.config.hier_attention,
                    },
                ),
            };
            let seq = m.sequence(&x_t, cond)?;
            let (pred, cache) = m.forward(&seq, sigma, &opts)?;
            let target = &eps.token_matrix() - &sample.target.token_matrix();
            let (loss, mut dout) = mse_with_grad(&pred, &target);
            dout /= batch.len() as f64;
            m.backward(&cache, dout.view(), &mut grads);
            total += loss;
        }
        Ok((total / batch.len() as f64, grads))
    }

    /// One optimiser update on an explicit batch. Returns the mean loss.
    pub fn training_step(&mut self, batch: &[&EncodedTriplet]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let draws = self.draws(self.step, batch.len());
        let (loss, grads) = self.loss_and_grad(batch, &draws)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step,
                detail: format!("loss {loss}, kernel {}, phase {}", draws.kernel, self.phase),
            });
        }
        let phase = self.phase;
        self.adam.step(&mut self.model.params, &grads, |n| phase.trains(n));
        self.step += 1;
        Ok(loss)
    }

    /// One update on the batch this step draws from `data`.
    pub fn step_on(&mut self, data: &[EncodedTriplet]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let idx = self.batch_indices(self.step, data.len());
        let batch: Vec<&EncodedTriplet> = idx.iter().map(|&i| &data[i]).collect();
        self.training_step(&batch)
    }
}
