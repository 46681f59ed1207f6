use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use l2e::diagnostics::bma_predict;
use l2e::model::Layout;
use l2e::persist::{load_meta, meta_sidecar, predictive_to_bytes};
use l2e::sampler::DivergenceInfo;

use super::{
    config_error, load_optional_config, load_samples, out_dir, pool, write_file, write_json, Csv,
};
use crate::manifest::RunManifest;
use crate::Common;

#[derive(Debug, Serialize)]
struct SetHeader {
    file: String,
    sampler: String,
    total_steps: u64,
    burnin: u64,
    thin: u64,
    seed: u64,
    steps: Vec<u64>,
    divergence: Option<DivergenceInfo>,
    update_records: usize,
}

#[derive(Debug, Serialize)]
struct Header {
    layout: Option<Layout>,
    sets: Vec<SetHeader>,
}

#[derive(Debug, Serialize)]
struct MetaExport {
    #[serde(flatten)]
    description: l2e::persist::MetaSidecar,
    values: Vec<f64>,
}

pub fn export(common: &Common, checkpoint: Option<&Path>, samples: &[PathBuf]) -> Result<()> {
    if checkpoint.is_none() && samples.is_empty() {
        return Err(config_error(
            "nothing to export: give sample files or --checkpoint",
        ));
    }
    let cfg = load_optional_config(common)?;
    let out = out_dir(common, cfg.as_ref())?;
    let mut manifest = RunManifest::start("export", cfg.as_ref());
    manifest.inputs.extend(samples.iter().cloned());

    if let Some(p) = checkpoint {
        manifest.inputs.push(p.to_path_buf());
        let meta = load_meta(p)?;
        write_json(
            &out.join("meta.json"),
            &MetaExport {
                description: meta_sidecar(&meta),
                values: meta.values.clone(),
            },
        )?;
        manifest.primary("meta.json");
    }

    if !samples.is_empty() {
        let sets = load_samples(samples)?;
        let pooled = pool(&sets)?;
        let d = pooled.dim();
        let mut header = vec!["set".to_string(), "step".to_string()];
        header.extend((0..d).map(|i| format!("p{i}")));
        let mut csv = Csv::new(&header.join(","));
        for (i, s) in sets.iter().enumerate() {
            for snap in &s.snapshots {
                let mut row = vec![i.to_string(), snap.step.to_string()];
                row.extend(snap.values.iter().map(|v| v.to_string()));
                csv.row(&row);
            }
        }
        csv.save(&out.join("snapshots.csv"))?;
        write_json(
            &out.join("header.json"),
            &Header {
                layout: Some(pooled.layout.clone()),
                sets: samples
                    .iter()
                    .zip(&sets)
                    .map(|(p, s)| SetHeader {
                        file: super::file_name(p),
                        sampler: s.sampler.clone(),
                        total_steps: s.total_steps,
                        burnin: s.burnin,
                        thin: s.thin,
                        seed: s.seed,
                        steps: s.steps(),
                        divergence: s.divergence.clone(),
                        update_records: s.update_log.len(),
                    })
                    .collect(),
            },
        )?;
        manifest.primary("snapshots.csv");
        manifest.primary("header.json");

        // With a config, also export the BMA predictive on the test split.
        if let Some(cfg) = &cfg {
            let (train, test) = cfg.config.datasets(cfg.seed)?;
            if !test.is_regression() {
                let model = cfg.config.energy_model(&train)?;
                if pooled.layout != *model.layout() {
                    return Err(l2e::Error::Contract(
                        "sample layout does not match the configured model".into(),
                    )
                    .into());
                }
                let pred = bma_predict(&pooled, &model, &test.inputs, test.len())?;
                write_file(&out.join("predictive.l2ep"), &predictive_to_bytes(&pred))?;
                manifest.primary("predictive.l2ep");
            }
        }
    }
    manifest.finish(&out, "ok")
}
