//! Per-coordinate summaries over sample sets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::mixing::{ess, rank_normalized_rhat, split_rhat};
use super::predictive::Flagged;
use crate::error::{Error, Result};
use crate::model::Layout;
use crate::sampler::SampleSet;

/// Default number of coordinates examined by mixing diagnostics.
pub const DEFAULT_MAX_COORDS: usize = 1024;
/// Threshold below which a coordinate counts as converged.
pub const RHAT_THRESHOLD: f64 = 1.1;
/// Divisor applied by paper-scale ESS/s reporting.
pub const PAPER_ESS_SCALE: f64 = 1e5;

/// Up to `max` coordinate indices, stratified across tensors: every tensor
/// gets at least one coordinate and the rest is allotted proportionally to
/// tensor size, evenly spaced within each tensor.
pub fn coordinate_subset(layout: &Layout, max: usize) -> Vec<usize> {
    let d = layout.len();
    if d <= max {
        return (0..d).collect();
    }
    let tensors = layout.tensors();
    let mut out = Vec::with_capacity(max);
    for t in tensors {
        let share = ((t.numel() as f64 / d as f64) * max as f64).floor() as usize;
        let k = share.clamp(1, t.numel());
        let r = t.range();
        for j in 0..k {
            out.push(r.start + j * t.numel() / k);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Trace of coordinate `i` across the snapshots of a set.
pub fn trace(samples: &SampleSet, i: usize) -> Vec<f64> {
    samples.snapshots.iter().map(|s| s.values[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhatVariant {
    #[default]
    Classical,
    RankNormalized,
}

/// R̂ of coordinate `i` over several chains.
pub fn coordinate_rhat(
    chains: &[SampleSet],
    i: usize,
    splits: usize,
    variant: RhatVariant,
) -> Result<Flagged<f64>> {
    let traces: Vec<Vec<f64>> = chains.iter().map(|c| trace(c, i)).collect();
    let refs: Vec<&[f64]> = traces.iter().map(|t| t.as_slice()).collect();
    match variant {
        RhatVariant::Classical => split_rhat(&refs, splits),
        RhatVariant::RankNormalized => rank_normalized_rhat(&refs, splits),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRhat {
    pub coordinates: usize,
    pub below_threshold: usize,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatSummary {
    pub coordinates: usize,
    /// Fraction of examined coordinates with R̂ < 1.1. Degenerate
    /// coordinates count as not converged.
    pub proportion_below: f64,
    pub degenerate: usize,
    pub max_rhat: f64,
    pub per_layer: BTreeMap<String, LayerRhat>,
}

/// R̂ on a stratified coordinate subset of `chains` (all sharing a layout).
pub fn rhat_summary(
    chains: &[SampleSet],
    splits: usize,
    max_coords: usize,
    variant: RhatVariant,
) -> Result<RhatSummary> {
    let first = chains
        .first()
        .ok_or_else(|| Error::contract("R-hat summary needs at least one chain"))?;
    if chains.iter().any(|c| c.layout != first.layout) {
        return Err(Error::contract("chains have different layouts"));
    }
    let coords = coordinate_subset(&first.layout, max_coords);
    let mut per_layer: BTreeMap<String, LayerRhat> = BTreeMap::new();
    let mut below = 0;
    let mut degenerate = 0;
    let mut max_rhat: f64 = f64::NAN;
    for &i in &coords {
        let r = coordinate_rhat(chains, i, splits, variant)?;
        let name = first
            .layout
            .tensor_of(i)
            .map(|t| t.name.clone())
            .unwrap_or_default();
        let e = per_layer.entry(name).or_insert(LayerRhat {
            coordinates: 0,
            below_threshold: 0,
            degenerate: 0,
        });
        e.coordinates += 1;
        if r.flagged {
            degenerate += 1;
            e.degenerate += 1;
        } else {
            max_rhat = max_rhat.max(r.value);
            if r.value < RHAT_THRESHOLD {
                below += 1;
                e.below_threshold += 1;
            }
        }
    }
    Ok(RhatSummary {
        coordinates: coords.len(),
        proportion_below: below as f64 / coords.len() as f64,
        degenerate,
        max_rhat,
        per_layer,
    })
}

/// Median ESS over a stratified coordinate subset of one chain.
pub fn median_ess(samples: &SampleSet, max_coords: usize) -> Result<f64> {
    let coords = coordinate_subset(&samples.layout, max_coords);
    let mut v = coords
        .iter()
        .map(|&i| ess(&trace(samples, i)).map(|f| f.value))
        .collect::<Result<Vec<f64>>>()?;
    if v.is_empty() {
        return Err(Error::contract("no coordinates to examine"));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Median ESS divided by mean wall-clock seconds per thinning interval.
/// `paper_scale` divides the result by 1e5 for comparison with tables that
/// report ESS/s in that unit.
pub fn ess_per_second(samples: &SampleSet, max_coords: usize, paper_scale: bool) -> Result<f64> {
    let secs = samples
        .seconds_per_interval()
        .ok_or_else(|| Error::contract("sample set carries no timing information"))?;
    if !(secs > 0.0) {
        return Err(Error::contract("non-positive interval timing"));
    }
    let v = median_ess(samples, max_coords)? / secs;
    Ok(if paper_scale { v / PAPER_ESS_SCALE } else { v })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPoint {
    pub step: u64,
    /// `‖θ_{t+1} − θ_t‖²`.
    pub delta_sq: f64,
    /// `‖β‖²` for the learned sampler, otherwise `delta_sq / ε²`.
    pub beta_sq: f64,
    pub energy: Option<f64>,
}

/// Per-step update norms from a chain run with update recording on.
pub fn update_norm_trace(samples: &SampleSet) -> Result<Vec<NormPoint>> {
    if samples.update_log.is_empty() {
        return Err(Error::contract(
            "sample set has no update log; run with update recording",
        ));
    }
    Ok(samples
        .update_log
        .iter()
        .map(|u| NormPoint {
            step: u.step,
            delta_sq: u.delta_sq,
            beta_sq: u
                .beta_sq
                .unwrap_or(u.delta_sq / (u.step_size * u.step_size)),
            energy: u.energy,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_covers_every_tensor() {
        let mut l = Layout::new();
        l.push("a.weight", vec![5000]);
        l.push("a.bias", vec![3]);
        l.push("b.weight", vec![100]);
        let c = coordinate_subset(&l, 64);
        assert!(c.len() <= 64 + 3);
        for t in l.tensors() {
            assert!(c.iter().any(|i| t.range().contains(i)), "{}", t.name);
        }
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(coordinate_subset(&l, 10_000).len(), l.len());
    }
}
