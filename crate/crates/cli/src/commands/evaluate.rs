use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;

use l2e::data::Labels;
use l2e::diagnostics::{
    accuracy, agreement, ece, member_predictives, nll, pairwise_kld, total_variation, Predictive,
};
use l2e::metatrain::{bma_loss_from_loglik, member_log_likelihoods};
use l2e::persist::load_reference;

use super::{load_config, load_samples, opt, out_dir, pool, write_json, Csv};
use crate::manifest::RunManifest;
use crate::Common;

#[derive(Debug, Serialize)]
struct CurvePoint {
    samples: usize,
    accuracy: Option<f64>,
    nll: f64,
}

#[derive(Debug, Serialize)]
struct Metrics {
    samples: usize,
    test_size: usize,
    accuracy: Option<f64>,
    nll: f64,
    nll_clamped: bool,
    ece: Option<f64>,
    ece_bins: usize,
    /// True-class pairwise statistic; absent with fewer than two samples.
    pairwise_kld: Option<f64>,
    rmse: Option<f64>,
    agreement: Option<f64>,
    total_variation: Option<f64>,
    bma_curve: Vec<CurvePoint>,
}

pub fn evaluate(common: &Common, reference: Option<&Path>, samples: &[PathBuf]) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, Some(&cfg))?;
    let mut manifest = RunManifest::start("evaluate", Some(&cfg));
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
    let bins = cfg.config.evaluation.ece_bins;

    let metrics = match &test.labels {
        Labels::Class(y) => {
            let members = member_predictives(&pooled, &model, &test.inputs, test.len())?;
            let bma = Predictive::average(&members)?;
            let curve = (1..=k)
                .map(|j| {
                    let p = Predictive::average(&members[..j])?;
                    Ok(CurvePoint {
                        samples: j,
                        accuracy: Some(accuracy(&p, y)?),
                        nll: nll(&p, y)?.value,
                    })
                })
                .collect::<l2e::Result<Vec<_>>>()?;
            let (agree, tv) = match reference {
                Some(path) => {
                    manifest.inputs.push(path.to_path_buf());
                    let r = load_reference(path)?;
                    if r.classes != bma.classes || r.rows != bma.rows {
                        return Err(l2e::Error::Contract(format!(
                            "reference is {}x{} but predictions are {}x{}",
                            r.rows, r.classes, bma.rows, bma.classes
                        ))
                        .into());
                    }
                    (Some(agreement(&bma, &r)?), Some(total_variation(&bma, &r)?))
                }
                None => (None, None),
            };
            let n = nll(&bma, y)?;
            Metrics {
                samples: k,
                test_size: test.len(),
                accuracy: Some(accuracy(&bma, y)?),
                nll: n.value,
                nll_clamped: n.flagged,
                ece: Some(ece(&bma, y, bins)?),
                ece_bins: bins,
                pairwise_kld: if k >= 2 {
                    Some(pairwise_kld(&members, y)?)
                } else {
                    None
                },
                rmse: None,
                agreement: agree,
                total_variation: tv,
                bma_curve: curve,
            }
        }
        Labels::Real(y) => {
            if reference.is_some() {
                return Err(l2e::Error::Contract(
                    "reference predictives need a classification task".into(),
                )
                .into());
            }
            let batch = test.full_batch();
            let ll = member_log_likelihoods(&pooled, &model, &batch)?;
            let mut mean = vec![0.0; y.len()];
            for s in &pooled.snapshots {
                let f = model.forward(&s.values, &test.inputs, test.len())?;
                for (m, v) in mean.iter_mut().zip(f) {
                    *m += v / k as f64;
                }
            }
            let rmse = (mean
                .iter()
                .zip(y)
                .map(|(m, t)| (m - t) * (m - t))
                .sum::<f64>()
                / y.len() as f64)
                .sqrt();
            let curve = (1..=k)
                .map(|j| {
                    Ok(CurvePoint {
                        samples: j,
                        accuracy: None,
                        nll: bma_loss_from_loglik(&ll[..j])?.value,
                    })
                })
                .collect::<l2e::Result<Vec<_>>>()?;
            let n = bma_loss_from_loglik(&ll)?;
            Metrics {
                samples: k,
                test_size: test.len(),
                accuracy: None,
                nll: n.value,
                nll_clamped: n.flagged,
                ece: None,
                ece_bins: bins,
                pairwise_kld: None,
                rmse: Some(rmse),
                agreement: None,
                total_variation: None,
                bma_curve: curve,
            }
        }
    };

    let mut csv = Csv::new("samples,accuracy,nll");
    for p in &metrics.bma_curve {
        csv.row(&[p.samples.to_string(), opt(p.accuracy), p.nll.to_string()]);
    }
    csv.save(&out.join("bma_curve.csv"))?;
    write_json(&out.join("metrics.json"), &metrics)?;
    manifest.primary("metrics.json");
    manifest.primary("bma_curve.csv");
    manifest.finish(&out, "ok")
}
