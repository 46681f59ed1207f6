//! Transition kernels, step-size schedules and the chain driver.

mod chain;
mod config;
mod state;
mod steps;

pub use chain::{
    apply_kernel, initial_momentum, run_chain, run_chain_with, step_noise, ChainOptions, ChainSpec,
    DivergenceInfo, FixedTarget, MinibatchTarget, SampleSet, SamplerKind, Snapshot,
    StochasticTarget, UpdateRecord,
};
pub use config::{
    cyclical_step_size, Phase, SamplerConfig, ScheduleKind, ScheduleSettings, ScheduleSpec,
};
pub use state::SamplerState;
pub use steps::{
    kinetic_l2e_step, kinetic_mean, l2e_step, psgld_preconditioner, psgld_step, sghmc_step,
    sgld_step, StepInfo,
};
