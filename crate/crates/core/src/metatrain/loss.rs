//! Meta-objectives over a set of collected parameters.

use crate::data::DataBatch;
use crate::diagnostics::{Flagged, NLL_CLAMP};
use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::sampler::SampleSet;

fn ln_clamp() -> f64 {
    NLL_CLAMP.ln()
}

/// Per-member log-likelihoods `ll[k][n]` of the validation points.
pub fn member_log_likelihoods(
    samples: &SampleSet,
    model: &EnergyModel,
    val: &DataBatch,
) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::contract("meta-loss needs at least one snapshot"));
    }
    if val.batch_size() == 0 {
        return Err(Error::contract("validation batch is empty"));
    }
    samples
        .snapshots
        .iter()
        .map(|s| model.log_likelihoods(&s.values, val))
        .collect()
}

/// `mean_n −log[(1/K) Σ_k exp(ll[k][n])]`, computed stably. Mean
/// probabilities below 1e-300 are clamped and flagged.
pub fn bma_loss_from_loglik(ll: &[Vec<f64>]) -> Result<Flagged<f64>> {
    let k = ll.len();
    let n = ll.first().map_or(0, |v| v.len());
    if k == 0 || n == 0 || ll.iter().any(|v| v.len() != n) {
        return Err(Error::contract("log-likelihood matrix is empty or ragged"));
    }
    let mut flagged = false;
    let mut total = 0.0;
    for i in 0..n {
        let m = ll.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
        let mut lm = if m == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            let s: f64 = ll.iter().map(|v| (v[i] - m).exp()).sum();
            m + (s / k as f64).ln()
        };
        if !(lm >= ln_clamp()) {
            flagged = true;
            lm = ln_clamp();
        }
        total -= lm;
    }
    Ok(Flagged {
        value: total / n as f64,
        flagged,
    })
}

/// `−(1/K) Σ_k mean_n ll[k][n]`, with the same clamp as the BMA loss.
pub fn ce_loss_from_loglik(ll: &[Vec<f64>]) -> Result<Flagged<f64>> {
    let k = ll.len();
    let n = ll.first().map_or(0, |v| v.len());
    if k == 0 || n == 0 || ll.iter().any(|v| v.len() != n) {
        return Err(Error::contract("log-likelihood matrix is empty or ragged"));
    }
    let mut flagged = false;
    let means: Vec<f64> = ll
        .iter()
        .map(|v| {
            v.iter()
                .map(|&x| {
                    if x >= ln_clamp() {
                        x
                    } else {
                        flagged = true;
                        ln_clamp()
                    }
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    // Offsets from the first member keep identical members exact.
    let spread: f64 = means.iter().map(|m| m - means[0]).sum::<f64>() / k as f64;
    Ok(Flagged {
        value: -(means[0] + spread),
        flagged,
    })
}

/// Negative log of the model-averaged predictive on `val`.
pub fn bma_meta_loss(
    samples: &SampleSet,
    model: &EnergyModel,
    val: &DataBatch,
) -> Result<Flagged<f64>> {
    bma_loss_from_loglik(&member_log_likelihoods(samples, model, val)?)
}

/// Average of the members' individual negative log-likelihoods.
pub fn ce_meta_loss(
    samples: &SampleSet,
    model: &EnergyModel,
    val: &DataBatch,
) -> Result<Flagged<f64>> {
    ce_loss_from_loglik(&member_log_likelihoods(samples, model, val)?)
}
