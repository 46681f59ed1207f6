use serde::{Deserialize, Serialize};

use crate::meta::FeatureBank;

/// One chain's dynamic state `z = (θ, r)` plus the per-chain statistics the
/// adaptive and learned kernels keep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub theta: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Gradient running averages (learned kernels).
    pub bank: FeatureBank,
    /// Squared-gradient average `V` (pSGLD).
    pub precond: Vec<f64>,
    /// Number of completed steps.
    pub step: u64,
    pub chain_id: u64,
}

impl SamplerState {
    pub fn new(theta: Vec<f64>, momentum: Vec<f64>, chain_id: u64) -> Self {
        assert_eq!(
            theta.len(),
            momentum.len(),
            "θ and r must have the same length"
        );
        let d = theta.len();
        SamplerState {
            theta,
            momentum,
            bank: FeatureBank::zeros(d),
            precond: vec![0.0; d],
            step: 0,
            chain_id,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}
