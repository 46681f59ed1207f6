use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;

use l2e::persist::{load_meta, save_sample_set, timing_path};
use l2e::rng::{derive_key, tag};
use l2e::sampler::{run_chain_with, ChainOptions, MinibatchTarget, SampleSet, SamplerKind};

use super::{load_config, out_dir};
use crate::manifest::RunManifest;
use crate::Common;

pub fn sample(common: &Common, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, Some(&cfg))?;
    let s = cfg.config.sampler()?;
    let mut manifest = RunManifest::start("sample", Some(&cfg));

    let meta = match checkpoint {
        Some(p) => {
            manifest.inputs.push(p.to_path_buf());
            Some(load_meta(p)?)
        }
        None => None,
    };
    let kind = SamplerKind::from_name(&s.kind, meta)?;
    let (train, test) = cfg.config.datasets(cfg.seed)?;
    let model = cfg.config.energy_model(&train)?;
    let steps = s.resolve_steps(train.len())?;
    let sampler_cfg = s.sampler_config();
    sampler_cfg.validate()?;
    manifest.resolve("steps", steps)?;
    manifest.resolve("train_size", train.len())?;
    manifest.resolve("test_size", test.len())?;
    manifest.resolve("num_params", model.dim())?;

    let options = ChainOptions {
        record_updates: s.record_updates,
        zero_noise: false,
    };
    let chains: Vec<SampleSet> = (0..s.chains)
        .into_par_iter()
        .map(|c| {
            let spec = s.chain_spec(&steps, cfg.seed, c);
            let theta0 = model.init_params(derive_key(cfg.seed, &[tag::INIT, c]));
            let mut target = MinibatchTarget::new(
                &model,
                &train,
                s.batch_size,
                derive_key(cfg.seed, &[tag::BATCH, c]),
            )?;
            run_chain_with(
                &kind,
                &mut target,
                theta0.values,
                theta0.layout,
                &sampler_cfg,
                &spec,
                options,
            )
        })
        .collect::<l2e::Result<_>>()?;

    let mut diverged = None;
    for (c, set) in chains.iter().enumerate() {
        let name = format!("samples_chain{c}.l2es");
        let path = out.join(&name);
        save_sample_set(&path, set)?;
        manifest.primary(&name);
        if timing_path(&path).exists() {
            manifest.secondary(timing_path(Path::new(&name)));
        }
        if let (Some(d), None) = (&set.divergence, &diverged) {
            diverged = Some(l2e::Error::Divergence {
                step: d.step,
                reason: format!("chain {c}: {}", d.reason),
            });
        }
    }
    manifest.diverged = diverged.is_some();
    match diverged {
        None => manifest.finish(&out, "ok"),
        Some(e) => {
            manifest.finish(&out, "diverged")?;
            Err(e.into())
        }
    }
}
