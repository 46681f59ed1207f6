use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use l2e::diagnostics::{
    ess_per_second, median_ess, rhat_summary, update_norm_trace, RhatSummary, MIN_ESS_LEN,
};

use super::{load_optional_config, load_samples, opt, out_dir, write_json, Csv};
use crate::config::DiagnosticsSection;
use crate::manifest::RunManifest;
use crate::Common;

/// Fewest snapshots per chain the diagnostics accept.
const MIN_SNAPSHOTS: usize = 4;

#[derive(Debug, Serialize)]
struct ChainDiagnostics {
    file: String,
    sampler: String,
    snapshots: usize,
    /// Absent for chains shorter than the ESS minimum.
    median_ess: Option<f64>,
    diverged: bool,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    splits: usize,
    max_coords: usize,
    chains: Vec<ChainDiagnostics>,
    rhat: RhatSummary,
}

#[derive(Debug, Serialize)]
struct ChainTiming {
    file: String,
    seconds_per_interval: Option<f64>,
    ess_per_second: Option<f64>,
    paper_scale: bool,
}

pub fn diagnose(common: &Common, samples: &[PathBuf]) -> Result<()> {
    let cfg = load_optional_config(common)?;
    let out = out_dir(common, cfg.as_ref())?;
    let settings: DiagnosticsSection = cfg
        .as_ref()
        .map(|c| c.config.diagnostics.clone())
        .unwrap_or_default();
    let mut manifest = RunManifest::start("diagnose", cfg.as_ref());
    manifest.inputs.extend(samples.iter().cloned());

    let chains = load_samples(samples)?;
    for (path, c) in samples.iter().zip(&chains) {
        if c.len() < MIN_SNAPSHOTS {
            return Err(l2e::Error::Contract(format!(
                "{} has {} snapshots; diagnostics need at least {MIN_SNAPSHOTS}",
                path.display(),
                c.len()
            ))
            .into());
        }
    }
    let ess: Vec<Option<f64>> = chains
        .par_iter()
        .map(|c| {
            if c.len() < MIN_ESS_LEN {
                Ok(None)
            } else {
                median_ess(c, settings.max_coords).map(Some)
            }
        })
        .collect::<l2e::Result<_>>()?;
    let rhat = rhat_summary(&chains, settings.splits, settings.max_coords, settings.rhat)?;
    let report = Diagnostics {
        splits: settings.splits,
        max_coords: settings.max_coords,
        chains: samples
            .iter()
            .zip(&chains)
            .zip(&ess)
            .map(|((p, c), e)| ChainDiagnostics {
                file: super::file_name(p),
                sampler: c.sampler.clone(),
                snapshots: c.len(),
                median_ess: *e,
                diverged: c.divergence.is_some(),
            })
            .collect(),
        rhat,
    };
    write_json(&out.join("diagnostics.json"), &report)?;
    manifest.primary("diagnostics.json");

    let timing: Vec<ChainTiming> = samples
        .iter()
        .zip(&chains)
        .map(|(p, c)| ChainTiming {
            file: super::file_name(p),
            seconds_per_interval: c.seconds_per_interval(),
            ess_per_second: ess_per_second(c, settings.max_coords, settings.paper_scale).ok(),
            paper_scale: settings.paper_scale,
        })
        .collect();
    write_json(&out.join("diagnostics_timing.json"), &timing)?;
    manifest.secondary("diagnostics_timing.json");

    if chains.iter().any(|c| !c.update_log.is_empty()) {
        let mut csv = Csv::new("chain,step,delta_sq,beta_sq,energy");
        for (i, c) in chains.iter().enumerate() {
            if c.update_log.is_empty() {
                continue;
            }
            for p in update_norm_trace(c)? {
                csv.row(&[
                    i.to_string(),
                    p.step.to_string(),
                    p.delta_sq.to_string(),
                    p.beta_sq.to_string(),
                    opt(p.energy),
                ]);
            }
        }
        csv.save(&out.join("update_norms.csv"))?;
        manifest.primary("update_norms.csv");
    }
    manifest.finish(&out, "ok")
}
