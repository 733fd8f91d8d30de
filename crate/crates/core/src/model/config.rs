use std::fmt::Write as _;

use crate::attention::{DEFAULT_INFERENCE_KERNEL, POOL_KERNELS};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::schedule::{ScheduleKind, ScheduleSpec, DEFAULT_LAMBDA_BASE, DEFAULT_STEPS};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub depth: usize,
    /// Token grid side; images are `grid * patch` pixels square.
    pub grid: usize,
    pub patch: usize,
    pub ffn_mult: usize,
    pub rank: usize,
    pub lora_scale: f64,
    /// When false the context path is never evaluated.
    pub hier_attention: bool,
    pub schedule: ScheduleSpec,
    /// `None`: a random kernel per training step and
    /// [`DEFAULT_INFERENCE_KERNEL`] when sampling. `Some(k)`: `k` everywhere.
    pub pool_kernel: Option<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            depth: 4,
            grid: 16,
            patch: 4,
            ffn_mult: 4,
            rank: 4,
            lora_scale: 1.0,
            hier_attention: true,
            schedule: ScheduleSpec::new(ScheduleKind::Cos, DEFAULT_LAMBDA_BASE, DEFAULT_STEPS).expect("valid default"),
            pool_kernel: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn image_size(&self) -> usize {
        self.grid * self.patch
    }

    pub fn sample_kernel(&self) -> usize {
        self.pool_kernel.unwrap_or(DEFAULT_INFERENCE_KERNEL)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            ));
        }
        if self.d_model % 4 != 0 {
            return bad(format!("d_model {} must be a multiple of 4", self.d_model));
        }
        if self.grid == 0 || self.patch == 0 || self.ffn_mult == 0 {
            return bad("grid, patch and ffn_mult must be positive".into());
        }
        if self.patch * self.patch * 3 > self.d_model {
            return bad(format!(
                "a {0}x{0} RGB patch needs {1} channels but d_model is {2}",
                self.patch,
                self.patch * self.patch * 3,
                self.d_model
            ));
        }
        if self.rank == 0 || self.rank > self.d_model {
            return bad(format!("rank {} outside 1..={}", self.rank, self.d_model));
        }
        if !self.lora_scale.is_finite() {
            return bad("lora_scale must be finite".into());
        }
        if self.hier_attention {
            match self.pool_kernel {
                Some(k) if k == 0 || k > self.grid => {
                    return bad(format!("pool kernel {k} outside 1..={}", self.grid));
                }
                None if POOL_KERNELS.iter().any(|&k| k > self.grid) || DEFAULT_INFERENCE_KERNEL > self.grid => {
                    return bad(format!(
                        "random kernels {POOL_KERNELS:?} need grid >= 8, got {}; set pool_kernel",
                        self.grid
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "d_model = {}", self.d_model);
        let _ = writeln!(s, "heads = {}", self.heads);
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "grid = {}", self.grid);
        let _ = writeln!(s, "patch = {}", self.patch);
        let _ = writeln!(s, "ffn_mult = {}", self.ffn_mult);
        let _ = writeln!(s, "rank = {}", self.rank);
        let _ = writeln!(s, "lora_scale = {:?}", self.lora_scale);
        let _ = writeln!(s, "hier_attention = {}", self.hier_attention);
        let _ = writeln!(s, "schedule = {}", self.schedule.kind);
        let _ = writeln!(s, "lambda_base = {:?}", self.schedule.lambda_base);
        let _ = writeln!(s, "steps = {}", self.schedule.total_steps);
        let _ = writeln!(
            s,
            "pool_kernel = {}",
            self.pool_kernel.map_or("random".to_string(), |k| k.to_string())
        );
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Reads keys from `kv` on top of `self`, leaving unknown keys in place.
    pub fn apply_kv(&mut self, kv: &mut KeyValues) -> Result<()> {
        kv.take_into("d_model", &mut self.d_model)?;
        kv.take_into("heads", &mut self.heads)?;
        kv.take_into("depth", &mut self.depth)?;
        kv.take_into("grid", &mut self.grid)?;
        kv.take_into("patch", &mut self.patch)?;
        kv.take_into("ffn_mult", &mut self.ffn_mult)?;
        kv.take_into("rank", &mut self.rank)?;
        kv.take_into("lora_scale", &mut self.lora_scale)?;
        kv.take_into("hier_attention", &mut self.hier_attention)?;
        let kind = kv.take::<ScheduleKind>("schedule")?.unwrap_or(self.schedule.kind);
        let base = kv.take::<f64>("lambda_base")?.unwrap_or(self.schedule.lambda_base);
        let steps = kv.take::<u32>("steps")?.unwrap_or(self.schedule.total_steps);
        self.schedule = ScheduleSpec::new(kind, base, steps)?;
        if let Some(k) = kv.take::<String>("pool_kernel")? {
            self.pool_kernel = parse_pool_kernel(&k)?;
        }
        kv.take_into("seed", &mut self.seed)?;
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
}

/// `random` or a kernel size.
pub fn parse_pool_kernel(s: &str) -> Result<Option<usize>> {
    if s == "random" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("pool_kernel must be 'random' or an integer, got {s:?}")))
}
