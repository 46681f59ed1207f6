//! Network architectures, parameter layouts, the autodiff tape and the
//! stochastic posterior energy.

mod arch;
mod energy;
mod params;
mod potential;
pub mod tape;

pub use arch::{Activation, ArchKind, ArchitectureConfig, CONV_KERNEL};
pub use energy::{init_params, EnergyModel, Likelihood};
pub use params::{Layout, ParamVector, TensorSpec};
pub use potential::{
    finite_diff_check, finite_diff_error, BatchEnergy, GaussianPotential, MixturePotential,
    Potential, PriorEnergy, FD_RELATIVE_FLOOR,
};
pub use tape::softmax_rows;
