//! Timestep-dependent blend weight for the context attention path.
//!
//! Large `t` is the high-noise end of sampling. With `T` total steps:
//!
//! | kind     | λ(t)                               |
//! |----------|------------------------------------|
//! | `cos`    | `λ_base · 0.5 · (1 − cos(πt/T))`   |
//! | `sin`    | `λ_base · sin(πt/T)`               |
//! | `cosinv` | `λ_base · 0.5 · (1 + cos(πt/T))`   |
//! | `const`  | `λ_base`                           |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA_BASE: f64 = 0.1;
pub const DEFAULT_STEPS: u32 = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cos,
    Sin,
    CosInv,
    Constant,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Cos => "cos",
            ScheduleKind::Sin => "sin",
            ScheduleKind::CosInv => "cosinv",
            ScheduleKind::Constant => "const",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cos" => Ok(ScheduleKind::Cos),
            "sin" => Ok(ScheduleKind::Sin),
            "cosinv" => Ok(ScheduleKind::CosInv),
            "const" | "constant" => Ok(ScheduleKind::Constant),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule '{other}' (expected cos|sin|cosinv|const)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub lambda_base: f64,
    pub total_steps: u32,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Cos,
            lambda_base: DEFAULT_LAMBDA_BASE,
            total_steps: DEFAULT_STEPS,
        }
    }
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, lambda_base: f64, total_steps: u32) -> Result<Self> {
        if !lambda_base.is_finite() || lambda_base < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_base must be finite and >= 0, got {lambda_base}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        Ok(Self {
            kind,
            lambda_base,
            total_steps,
        })
    }

    /// `Constant(0)`: the context path never contributes.
    pub fn disabled(total_steps: u32) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            lambda_base: 0.0,
            total_steps: total_steps.max(1),
        }
    }

    pub fn is_disabled(&self) -> bool {
        self.lambda_base == 0.0
    }

    pub fn lambda_at(&self, t: u32) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::TimestepOutOfRange {
                t,
                total: self.total_steps,
            });
        }
        Ok(self.eval(t as f64 / self.total_steps as f64))
    }

    /// λ at continuous noise level `sigma ∈ [0, 1]`, i.e. at `t = sigma·T`.
    pub fn lambda_at_sigma(&self, sigma: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&sigma) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} outside [0, 1]")));
        }
        Ok(self.eval(sigma))
    }

    fn eval(&self, frac: f64) -> f64 {
        let phase = PI * frac;
        let base = self.lambda_base;
        match self.kind {
            ScheduleKind::Cos => base * 0.5 * (1.0 - phase.cos()),
            ScheduleKind::Sin => base * phase.sin(),
            ScheduleKind::CosInv => base * 0.5 * (1.0 + phase.cos()),
            ScheduleKind::Constant => base,
        }
    }

    /// `(t, λ(t))` for every integer `t` in `0..=T`.
    pub fn table(&self) -> Vec<(u32, f64)> {
        (0..=self.total_steps)
            .map(|t| (t, self.eval(t as f64 / self.total_steps as f64)))
            .collect()
    }
}

pub fn lambda_at(spec: &ScheduleSpec, t: u32) -> Result<f64> {
    spec.lambda_at(t)
}

pub fn schedule_table(spec: &ScheduleSpec) -> Vec<(u32, f64)> {
    spec.table()
}
