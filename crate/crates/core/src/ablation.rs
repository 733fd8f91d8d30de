//! Training-strategy and schedule ablation.
//!
//! Per seed a base model is pretrained once on the training split, then each
//! arm adapts its own copy with identical adapter seeds and data order, and
//! is scored on the held-out split.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::LoadedTriplet;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::metrics::{evaluate_pair, PairMetrics, SegmentationParams};
use crate::model::{decode_to_image, sample, EncodedTriplet, ModelConfig, TrainConfig, TrainPhase, Trainer};
use crate::rng::{derive_seed, tags};
use crate::schedule::{ScheduleKind, ScheduleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Arm {
    /// Context path removed.
    NoHier,
    Constant,
    Cos,
    Sin,
    CosInv,
}

impl Arm {
    pub const ALL: [Arm; 5] = [Arm::NoHier, Arm::Constant, Arm::Cos, Arm::Sin, Arm::CosInv];
    pub const STRATEGY: [Arm; 3] = [Arm::NoHier, Arm::Constant, Arm::Cos];
    pub const SCHEDULES: [Arm; 3] = [Arm::Sin, Arm::CosInv, Arm::Cos];

    pub fn label(self) -> &'static str {
        match self {
            Arm::NoHier => "w/o HierAtt",
            Arm::Constant => "HierAtt + const",
            Arm::Cos => "HierAtt + cos",
            Arm::Sin => "sin",
            Arm::CosInv => "cosinv",
        }
    }

    /// Applies this arm's attention switch and schedule to `c`.
    pub fn configure(self, c: &mut ModelConfig, lambda_base: f64) -> Result<()> {
        let total = c.schedule.total_steps;
        let kind = match self {
            Arm::NoHier => {
                c.hier_attention = false;
                c.schedule = ScheduleSpec::disabled(total);
                return Ok(());
            }
            Arm::Constant => ScheduleKind::Constant,
            Arm::Cos => ScheduleKind::Cos,
            Arm::Sin => ScheduleKind::Sin,
            Arm::CosInv => ScheduleKind::CosInv,
        };
        c.hier_attention = true;
        c.schedule = ScheduleSpec::new(kind, lambda_base, total)?;
        Ok(())
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::NoHier => "nohier",
            Arm::Constant => "const",
            Arm::Cos => "cos",
            Arm::Sin => "sin",
            Arm::CosInv => "cosinv",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown arm {s:?} (nohier|const|cos|sin|cosinv)")))
    }
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(|p| p.trim().parse().map_err(|e| Error::Config(format!("{key}: {p:?}: {e}"))))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationConfig {
    /// Base architecture; each arm overrides `hier_attention` and the schedule kind.
    pub model: ModelConfig,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub pretrain_steps: u64,
    pub lora_steps: u64,
    pub pretrain_lr: f64,
    pub lora_lr: f64,
    pub batch_size: usize,
    /// The last `holdout` corpus items are evaluation pairs.
    pub holdout: usize,
    pub sample_steps: usize,
    pub eval_seed: u64,
    pub lambda_base: f64,
    pub segmentation: SegmentationParams,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                d_model: 48,
                heads: 4,
                depth: 2,
                grid: 8,
                patch: 4,
                ..ModelConfig::default()
            },
            seeds: vec![1, 2, 3],
            arms: Arm::ALL.to_vec(),
            pretrain_steps: 6000,
            lora_steps: 1500,
            pretrain_lr: 2e-3,
            lora_lr: 5e-3,
            batch_size: 1,
            holdout: 50,
            sample_steps: 28,
            eval_seed: 7,
            lambda_base: 0.1,
            segmentation: SegmentationParams::default(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.seeds.is_empty() || self.arms.is_empty() {
            return bad("need at least one seed and one arm");
        }
        if self.holdout == 0 || self.sample_steps == 0 || self.batch_size == 0 {
            return bad("holdout, sample_steps and batch_size must be positive");
        }
        if !(self.lambda_base.is_finite() && self.lambda_base >= 0.0) {
            return bad("lambda_base must be finite and >= 0");
        }
        let mut hier = self.model.clone();
        hier.hier_attention = true;
        hier.validate()
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = self.model.to_kv_text();
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "arms = {}", join(&self.arms));
        let _ = writeln!(s, "pretrain_steps = {}", self.pretrain_steps);
        let _ = writeln!(s, "lora_steps = {}", self.lora_steps);
        let _ = writeln!(s, "pretrain_lr = {:?}", self.pretrain_lr);
        let _ = writeln!(s, "lora_lr = {:?}", self.lora_lr);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "holdout = {}", self.holdout);
        let _ = writeln!(s, "sample_steps = {}", self.sample_steps);
        let _ = writeln!(s, "eval_seed = {}", self.eval_seed);
        let _ = writeln!(s, "delta_e = {:?}", self.segmentation.delta_e_threshold);
        let _ = writeln!(s, "line_threshold = {:?}", self.segmentation.line_threshold);
        s
    }

    /// Reads keys on top of `self`. The model's `lambda_base` key sets the
    /// arms' blend weight.
    pub fn apply_kv(&mut self, kv: &mut KeyValues) -> Result<()> {
        self.model.schedule.lambda_base = self.lambda_base;
        self.model.apply_kv(kv)?;
        self.lambda_base = self.model.schedule.lambda_base;
        if let Some(v) = kv.take::<String>("seeds")? {
            self.seeds = parse_list("seeds", &v)?;
        }
        if let Some(v) = kv.take::<String>("arms")? {
            self.arms = parse_list("arms", &v)?;
        }
        kv.take_into("pretrain_steps", &mut self.pretrain_steps)?;
        kv.take_into("lora_steps", &mut self.lora_steps)?;
        kv.take_into("pretrain_lr", &mut self.pretrain_lr)?;
        kv.take_into("lora_lr", &mut self.lora_lr)?;
        kv.take_into("batch_size", &mut self.batch_size)?;
        kv.take_into("holdout", &mut self.holdout)?;
        kv.take_into("sample_steps", &mut self.sample_steps)?;
        kv.take_into("eval_seed", &mut self.eval_seed)?;
        kv.take_into("delta_e", &mut self.segmentation.delta_e_threshold)?;
        kv.take_into("line_threshold", &mut self.segmentation.line_threshold)?;
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse(text)?;
        let mut c = Self::default();
        c.apply_kv(&mut kv)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    /// Seed of the sampler noise for held-out pair `i`; shared by every arm.
    pub fn eval_noise_seed(&self, i: usize) -> u64 {
        derive_seed(self.eval_seed, tags::SAMPLE_NOISE, i as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmResult {
    pub seed: u64,
    pub arm: Arm,
    /// Fingerprint of the dataset indices consumed during adaptation.
    pub order_hash: u64,
    pub final_loss: f64,
    pub metrics: PairMetrics,
    pub per_pair: Vec<PairMetrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub results: Vec<ArmResult>,
}

fn fold_hash(h: u64, v: u64) -> u64 {
    derive_seed(h, 0, v)
}

/// Mean loss over the last `window` values.
fn tail_mean(losses: &[f64], window: usize) -> f64 {
    let tail = &losses[losses.len().saturating_sub(window)..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn pretrain(cfg: &AblationConfig, seed: u64, data: &[EncodedTriplet], log: &mut dyn FnMut(&str)) -> Result<Trainer> {
    let mut model_cfg = cfg.model.clone();
    model_cfg.seed = seed;
    let model = crate::model::DitModel::new(model_cfg)?;
    let tc = TrainConfig {
        lr: cfg.pretrain_lr,
        batch_size: cfg.batch_size,
        grad_accum: 1,
        seed,
    };
    let mut t = Trainer::new(model, TrainPhase::Pretrain, tc)?;
    let mut losses = Vec::with_capacity(cfg.pretrain_steps as usize);
    for _ in 0..cfg.pretrain_steps {
        losses.push(t.step_on(data)?);
    }
    log(&format!(
        "seed {seed}: pretrained {} steps, loss {:.5}",
        cfg.pretrain_steps,
        tail_mean(&losses, 100)
    ));
    Ok(t)
}

fn adapt(cfg: &AblationConfig, seed: u64, arm: Arm, base: &Trainer, data: &[EncodedTriplet]) -> Result<(Trainer, u64, f64)> {
    let mut model = base.model.clone();
    arm.configure(&mut model.config, cfg.lambda_base)?;
    model.config.validate()?;
    let pre = Trainer::new(model, TrainPhase::Pretrain, base.config.clone())?;
    let tc = TrainConfig {
        lr: cfg.lora_lr,
        batch_size: cfg.batch_size,
        grad_accum: 1,
        seed: derive_seed(seed, tags::TRAIN_ORDER, 1),
    };
    let mut t = pre.into_lora(tc)?;
    let mut hash = 0u64;
    let mut losses = Vec::with_capacity(cfg.lora_steps as usize);
    for _ in 0..cfg.lora_steps {
        let idx = t.batch_indices(t.step, data.len());
        for &i in &idx {
            hash = fold_hash(hash, i as u64);
        }
        let batch: Vec<&EncodedTriplet> = idx.iter().map(|&i| &data[i]).collect();
        losses.push(t.training_step(&batch)?);
    }
    Ok((t, hash, tail_mean(&losses, 100)))
}

fn evaluate(cfg: &AblationConfig, trainer: &Trainer, held: &[LoadedTriplet], enc: &[EncodedTriplet]) -> Result<Vec<PairMetrics>> {
    let model = &trainer.model;
    (0..held.len())
        .into_par_iter()
        .map(|i| {
            let out = sample(model, &enc[i].line, &enc[i].reference, cfg.sample_steps, cfg.eval_noise_seed(i))?;
            let img = decode_to_image(&out, model.config.patch)?;
            evaluate_pair(&img, &held[i].target, &held[i].line, &cfg.segmentation)
        })
        .collect()
}

/// Runs every (seed, arm) on `corpus`; `log` receives progress lines.
pub fn run_ablation(cfg: &AblationConfig, corpus: &[LoadedTriplet], log: &mut dyn FnMut(&str)) -> Result<AblationReport> {
    cfg.validate()?;
    if corpus.len() <= cfg.holdout {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} cannot hold out {} pairs",
            corpus.len(),
            cfg.holdout
        )));
    }
    let size = cfg.model.image_size();
    if let Some(t) = corpus.iter().find(|t| t.target.dims() != (size, size)) {
        return Err(Error::DimensionMismatch(format!(
            "corpus images are {:?}, model expects {size}x{size}",
            t.target.dims()
        )));
    }
    let split = corpus.len() - cfg.holdout;
    let probe = crate::model::DitModel::new(cfg.model.clone())?;
    let encode = |items: &[LoadedTriplet]| -> Result<Vec<EncodedTriplet>> {
        items
            .iter()
            .map(|t| EncodedTriplet::encode(&t.target, &t.line, &t.reference, &probe))
            .collect()
    };
    let train = encode(&corpus[..split])?;
    let held = &corpus[split..];
    let held_enc = encode(held)?;

    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let base = pretrain(cfg, seed, &train, log)?;
        for &arm in &cfg.arms {
            let (t, order_hash, final_loss) = adapt(cfg, seed, arm, &base, &train)?;
            let per_pair = evaluate(cfg, &t, held, &held_enc)?;
            let metrics = PairMetrics::mean(&per_pair).expect("holdout is non-empty");
            log(&format!(
                "seed {seed} {arm:>7}: loss {final_loss:.5} order {order_hash:016x} PSNR {:.3} SSIM {:.4} MSE_CR {:.5}",
                metrics.psnr, metrics.ssim, metrics.mse_cr
            ));
            results.push(ArmResult {
                seed,
                arm,
                order_hash,
                final_loss,
                metrics,
                per_pair,
            });
        }
    }
    Ok(AblationReport { results })
}

impl AblationReport {
    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.results.iter().map(|r| r.seed).collect();
        s.dedup();
        s
    }

    pub fn get(&self, seed: u64, arm: Arm) -> Option<&ArmResult> {
        self.results.iter().find(|r| r.seed == seed && r.arm == arm)
    }

    /// Mean of the per-seed means for `arm`.
    pub fn mean(&self, arm: Arm) -> Option<PairMetrics> {
        let rows: Vec<PairMetrics> = self.results.iter().filter(|r| r.arm == arm).map(|r| r.metrics).collect();
        PairMetrics::mean(&rows)
    }

    /// Seeds where `a` scores an MSE_CR no worse than `b`, out of seeds with both.
    pub fn mse_cr_wins(&self, a: Arm, b: Arm) -> (usize, usize) {
        let mut wins = 0;
        let mut total = 0;
        for s in self.seeds() {
            if let (Some(x), Some(y)) = (self.get(s, a), self.get(s, b)) {
                total += 1;
                if x.metrics.mse_cr <= y.metrics.mse_cr {
                    wins += 1;
                }
            }
        }
        (wins, total)
    }

    /// True when every arm of each seed consumed the same data order.
    pub fn shared_data_order(&self) -> bool {
        self.seeds().into_iter().all(|s| {
            let mut hashes = self.results.iter().filter(|r| r.seed == s).map(|r| r.order_hash);
            let first = hashes.next();
            hashes.all(|h| Some(h) == first)
        })
    }

    fn table(&self, out: &mut String, title: &str, head: &str, arms: &[Arm]) {
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "| {head:<16} | {:>8} | {:>7} | {:>8} |", "PSNR", "SSIM", "MSE_CR");
        let _ = writeln!(out, "|{}|{}|{}|{}|", "-".repeat(18), "-".repeat(10), "-".repeat(9), "-".repeat(10));
        for &arm in arms {
            match self.mean(arm) {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "| {:<16} | {:>8.3} | {:>7.4} | {:>8.5} |",
                        arm.label(),
                        m.psnr,
                        m.ssim,
                        m.mse_cr
                    );
                }
                None => {
                    let _ = writeln!(out, "| {:<16} | {:>8} | {:>7} | {:>8} |", arm.label(), "-", "-", "-");
                }
            }
        }
    }

    /// Markdown summary: strategy table, schedule table, per-seed lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let seeds = self.seeds();
        let _ = writeln!(out, "seeds: {}", join(&seeds));
        let _ = writeln!(out);
        self.table(&mut out, "Training strategy", "strategy", &Arm::STRATEGY);
        let _ = writeln!(out);
        self.table(&mut out, "Weight schedule", "schedule", &Arm::SCHEDULES);
        let _ = writeln!(out);
        let _ = writeln!(out, "per seed (MSE_CR):");
        for &s in &seeds {
            let mut line = format!("  seed {s}:");
            for r in self.results.iter().filter(|r| r.seed == s) {
                let _ = write!(line, " {}={:.5}", r.arm, r.metrics.mse_cr);
            }
            let hash = self.results.iter().find(|r| r.seed == s).map_or(0, |r| r.order_hash);
            let _ = write!(line, " order={hash:016x}");
            let _ = writeln!(out, "{line}");
        }
        let (w, n) = self.mse_cr_wins(Arm::Cos, Arm::NoHier);
        let _ = writeln!(out, "cos <= nohier on MSE_CR: {w}/{n} seeds");
        let _ = writeln!(out, "shared data order: {}", self.shared_data_order());
        out
    }

    /// One row per (seed, arm) with header
    /// `seed,arm,order_hash,final_loss,psnr,ssim,mse_cr`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seed", "arm", "order_hash", "final_loss", "psnr", "ssim", "mse_cr"])?;
        for r in &self.results {
            w.write_record([
                r.seed.to_string(),
                r.arm.to_string(),
                format!("{:016x}", r.order_hash),
                format!("{:.8}", r.final_loss),
                format!("{:.6}", r.metrics.psnr),
                format!("{:.6}", r.metrics.ssim),
                format!("{:.8}", r.metrics.mse_cr),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}
