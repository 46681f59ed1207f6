use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    CosineDecay,
    Cyclical,
}

/// Whether a step of a cyclical schedule explores (noise-free update, nothing
/// collected) or samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Sample,
}

/// Step-size schedule over a run of `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub base_step_size: f64,
    pub total_steps: u64,
    pub num_cycles: u64,
    pub exploration_ratio: f64,
}

impl ScheduleSpec {
    pub fn constant(base_step_size: f64, total_steps: u64) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Constant,
            base_step_size,
            total_steps,
            num_cycles: 1,
            exploration_ratio: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_step_size > 0.0) {
            return Err(Error::config("step size must be positive"));
        }
        if self.kind == ScheduleKind::Cyclical {
            if self.num_cycles == 0 {
                return Err(Error::config("cyclical schedule needs at least one cycle"));
            }
            if !(self.exploration_ratio > 0.0 && self.exploration_ratio < 1.0) {
                return Err(Error::config("exploration ratio must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// `⌈total_steps / num_cycles⌉`.
    pub fn cycle_length(&self) -> u64 {
        match self.kind {
            ScheduleKind::Cyclical => self.total_steps.div_ceil(self.num_cycles.max(1)),
            _ => self.total_steps,
        }
    }

    pub fn at(&self, t: u64) -> Result<(f64, Phase)> {
        if t >= self.total_steps {
            return Err(Error::contract(format!(
                "step {t} outside schedule of {} steps",
                self.total_steps
            )));
        }
        let eps0 = self.base_step_size;
        Ok(match self.kind {
            ScheduleKind::Constant => (eps0, Phase::Sample),
            ScheduleKind::CosineDecay => {
                let frac = t as f64 / self.total_steps as f64;
                (
                    eps0 / 2.0 * ((std::f64::consts::PI * frac).cos() + 1.0),
                    Phase::Sample,
                )
            }
            ScheduleKind::Cyclical => return cyclical_step_size(t, self),
        })
    }
}

/// Cosine cyclical step size
/// `ε_t = (ε0/2)·[cos(π·mod(t, L)/L) + 1]` with `L = ⌈T_total/M_cyc⌉`; the
/// first `exploration_ratio` fraction of each cycle is the exploration phase.
pub fn cyclical_step_size(t: u64, schedule: &ScheduleSpec) -> Result<(f64, Phase)> {
    if t >= schedule.total_steps {
        return Err(Error::contract(format!(
            "step {t} outside schedule of {} steps",
            schedule.total_steps
        )));
    }
    if schedule.num_cycles == 0 {
        return Err(Error::config("cyclical schedule needs at least one cycle"));
    }
    let len = schedule.total_steps.div_ceil(schedule.num_cycles);
    let pos = (t % len) as f64 / len as f64;
    let eps = schedule.base_step_size / 2.0 * ((std::f64::consts::PI * pos).cos() + 1.0);
    let phase = if pos < schedule.exploration_ratio {
        Phase::Explore
    } else {
        Phase::Sample
    };
    Ok((eps, phase))
}

/// Schedule shape; the base step size and length come from the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSettings {
    #[serde(default)]
    pub kind: ScheduleKind,
    #[serde(default = "one")]
    pub num_cycles: u64,
    #[serde(default = "default_exploration")]
    pub exploration_ratio: f64,
}

fn one() -> u64 {
    1
}

fn default_exploration() -> f64 {
    0.8
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleSettings {
            kind: ScheduleKind::Constant,
            num_cycles: 1,
            exploration_ratio: default_exploration(),
        }
    }
}

/// Hyperparameters shared by every sampler.
///
/// Friction can be given either directly (`friction`, the coefficient `C`) or
/// as a per-step `momentum_decay`, in which case `C = momentum_decay / ε` so
/// that one step damps the momentum by that factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub step_size: f64,
    #[serde(default)]
    pub friction: Option<f64>,
    #[serde(default)]
    pub momentum_decay: Option<f64>,
    #[serde(default = "unit")]
    pub mass: f64,
    #[serde(default = "default_psgld_alpha")]
    pub psgld_alpha: f64,
    #[serde(default = "default_psgld_lambda")]
    pub psgld_lambda: f64,
    /// Noise temperature of the discretised dynamics. Tempering of the
    /// posterior itself belongs to the energy model.
    #[serde(default = "unit")]
    pub temperature: f64,
    #[serde(default)]
    pub schedule: ScheduleSettings,
}

fn unit() -> f64 {
    1.0
}

fn default_psgld_alpha() -> f64 {
    0.99
}

fn default_psgld_lambda() -> f64 {
    1e-5
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            step_size: 1e-3,
            friction: None,
            momentum_decay: Some(0.05),
            mass: 1.0,
            psgld_alpha: default_psgld_alpha(),
            psgld_lambda: default_psgld_lambda(),
            temperature: 1.0,
            schedule: ScheduleSettings::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::config("step_size must be positive"));
        }
        if !(self.mass > 0.0) {
            return Err(Error::config("mass must be positive"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        if !(self.psgld_alpha > 0.0 && self.psgld_alpha < 1.0) {
            return Err(Error::config("psgld_alpha must lie in (0, 1)"));
        }
        if !(self.psgld_lambda > 0.0) {
            return Err(Error::config("psgld_lambda must be positive"));
        }
        self.friction_coefficient(self.step_size)?;
        Ok(())
    }

    /// Friction coefficient `C` for step size `eps`.
    pub fn friction_coefficient(&self, eps: f64) -> Result<f64> {
        let c = match (self.friction, self.momentum_decay) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "friction and momentum_decay are mutually exclusive",
                ))
            }
            (Some(c), None) => c,
            (None, Some(m)) => m / eps,
            (None, None) => 0.0,
        };
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::config("friction must be a non-negative real"));
        }
        Ok(c)
    }

    pub fn schedule_spec(&self, total_steps: u64) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.schedule.kind,
            base_step_size: self.step_size,
            total_steps,
            num_cycles: self.schedule.num_cycles,
            exploration_ratio: self.schedule.exploration_ratio,
        }
    }
}
