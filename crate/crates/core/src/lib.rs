//! Stochastic-gradient MCMC for small Bayesian neural networks.
//!
//! The crate provides hand-designed samplers (SGLD, SGHMC, pSGLD, cyclical
//! SGMCMC), a learned sampler whose kinetic-energy gradients are small neural
//! networks meta-trained with antithetic evolution strategies, and the
//! predictive metrics and chain diagnostics used to evaluate them.
//!
//! ```
//! use l2e::data::{gen_blobs, batch_iterator};
//! use l2e::model::{Activation, ArchitectureConfig, EnergyModel, Likelihood};
//! use l2e::sampler::{run_chain, ChainSpec, SamplerConfig, SamplerKind};
//!
//! let data = gen_blobs(2, 64, 2, 4.0, 0).unwrap();
//! let arch = ArchitectureConfig::mlp(vec![2, 8, 2], Activation::Relu, false);
//! let model = EnergyModel::new(arch, 0.5, 1.0, Likelihood::Categorical).unwrap();
//! let config = SamplerConfig { step_size: 1e-3, ..SamplerConfig::default() };
//! let spec = ChainSpec { total_steps: 200, burnin: 100, thin: 50, samples: 2, seed: 1, chain_id: 0 };
//! let samples = run_chain(&SamplerKind::Sghmc, &model, &data, 16, &config, &spec).unwrap();
//! assert_eq!(samples.steps(), vec![150, 200]);
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod meta;
pub mod metatrain;
pub mod model;
pub mod persist;
pub mod probe;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
