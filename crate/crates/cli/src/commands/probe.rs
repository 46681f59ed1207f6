use std::path::PathBuf;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use l2e::probe::{barrier, linear_path_losses, pairwise_cosine, write_path_csv, PathPoint};

use super::{load_config, load_samples, out_dir, pool, write_file, write_json, Csv};
use crate::manifest::RunManifest;
use crate::Common;

#[derive(Debug, Serialize)]
struct PairSummary {
    pair_id: usize,
    a: usize,
    b: usize,
    step_a: u64,
    step_b: u64,
    loss_a: f64,
    loss_b: f64,
    barrier: f64,
    cosine: f64,
}

#[derive(Debug, Serialize)]
struct ProbeReport {
    points: usize,
    pairs: Vec<PairSummary>,
    zero_norm_snapshots: Vec<usize>,
}

pub fn probe(common: &Common, samples: &[PathBuf]) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, Some(&cfg))?;
    let mut manifest = RunManifest::start("probe", Some(&cfg));
    manifest.inputs.extend(samples.iter().cloned());

    let pooled = pool(&load_samples(samples)?)?;
    let (train, test) = cfg.config.datasets(cfg.seed)?;
    let model = cfg.config.energy_model(&train)?;
    if pooled.layout != *model.layout() {
        return Err(l2e::Error::Contract(
            "sample layout does not match the configured model".into(),
        )
        .into());
    }
    let k = pooled.len();
    let settings = &cfg.config.probe;
    let pairs: Vec<(usize, usize)> = match &settings.pairs {
        Some(p) => p.clone(),
        None => (1..k).map(|i| (i - 1, i)).collect(),
    };
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= k || b >= k) {
        return Err(l2e::Error::Config(format!(
            "probe pair ({a}, {b}) is out of range for {k} snapshots"
        ))
        .into());
    }
    let batch = test.full_batch();
    let paths: Vec<(usize, Vec<PathPoint>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(id, &(a, b))| {
            let s = &pooled.snapshots;
            Ok((
                id,
                linear_path_losses(&model, &s[a].values, &s[b].values, settings.points, &batch)?,
            ))
        })
        .collect::<l2e::Result<_>>()?;

    let mut buf = Vec::new();
    write_path_csv(&mut buf, &paths)?;
    write_file(&out.join("path.csv"), &buf)?;

    let cos = pairwise_cosine(&pooled)?;
    let mut header = vec!["snapshot".to_string()];
    header.extend((0..k).map(|j| format!("s{j}")));
    let mut csv = Csv::new(&header.join(","));
    for i in 0..k {
        let mut row = vec![i.to_string()];
        row.extend((0..k).map(|j| cos.get(i, j).to_string()));
        csv.row(&row);
    }
    csv.save(&out.join("cosine.csv"))?;

    let report = ProbeReport {
        points: settings.points,
        pairs: paths
            .iter()
            .zip(&pairs)
            .map(|((id, path), &(a, b))| PairSummary {
                pair_id: *id,
                a,
                b,
                step_a: pooled.snapshots[a].step,
                step_b: pooled.snapshots[b].step,
                loss_a: path[0].loss,
                loss_b: path[path.len() - 1].loss,
                barrier: barrier(path),
                cosine: cos.get(a, b),
            })
            .collect(),
        zero_norm_snapshots: cos.zero_norm.clone(),
    };
    write_json(&out.join("probe.json"), &report)?;
    manifest.primary("path.csv");
    manifest.primary("cosine.csv");
    manifest.primary("probe.json");
    manifest.finish(&out, "ok")
}
