use std::fs;
use std::path::Path;

use anyhow::Result;

use l2e::meta::init_meta_params;
use l2e::metatrain::{self, IterationRecord, MetaTrainOutput, OuterState};
use l2e::persist::{load_meta, save_meta};
use l2e::rng::{derive_key, tag};

use super::{load_config, out_dir, Csv};
use crate::config::Source;
use crate::manifest::RunManifest;
use crate::Common;

pub fn meta_train(common: &Common, checkpoint: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_dir(common, Some(&cfg))?;
    let section = cfg.config.meta_train()?;
    let source = cfg.config.tasks()?.source()?;
    let mut manifest = RunManifest::start("meta-train", Some(&cfg));

    let init = match checkpoint {
        Some(p) => {
            manifest.inputs.push(p.to_path_buf());
            load_meta(p)?
        }
        None => init_meta_params(derive_key(cfg.seed, &[tag::INIT]), section.feature_norm),
    };
    manifest.resolve("es", &section.es)?;
    manifest.resolve("outer_iters", section.outer_iters)?;

    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let every = section.es.checkpoint_every;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut on_iter = |rec: &IterationRecord, state: &OuterState| -> l2e::Result<()> {
        records.push(rec.clone());
        let done = rec.outer_iter + 1;
        if every > 0 && done % every == 0 {
            let p = ckpt_dir.join(format!("meta_{done:06}.l2em"));
            save_meta(&p, &state.meta)?;
            checkpoints.push(p);
        }
        Ok(())
    };
    let result: l2e::Result<MetaTrainOutput> = match &source {
        Source::Tasks(t) => metatrain::meta_train(
            t,
            &section.es,
            init.clone(),
            section.outer_iters,
            cfg.seed,
            &mut on_iter,
        ),
        Source::Mixture(m) => metatrain::meta_train(
            m,
            &section.es,
            init.clone(),
            section.outer_iters,
            cfg.seed,
            &mut on_iter,
        ),
    };

    let mut loss = Csv::new(
        "outer_iter,task_id,loss_plus,loss_minus,smoothed_loss,grad_norm,diverged_rollouts",
    );
    let mut timing = Csv::new("outer_iter,wall_clock_s");
    for r in &records {
        loss.row(&[
            r.outer_iter.to_string(),
            r.task_id.to_string(),
            r.loss_plus.to_string(),
            r.loss_minus.to_string(),
            r.smoothed_loss().to_string(),
            r.grad_norm.to_string(),
            r.diverged_rollouts.to_string(),
        ]);
        timing.row(&[r.outer_iter.to_string(), r.wall_clock_s.to_string()]);
    }
    loss.save(&out.join("loss.csv"))?;
    timing.save(&out.join("timing.csv"))?;
    manifest.primary("loss.csv");
    manifest.secondary("timing.csv");
    for p in &checkpoints {
        manifest.primary(p.strip_prefix(&out).unwrap_or(p));
    }

    match result {
        Ok(output) => {
            save_meta(&out.join("meta_final.l2em"), &output.meta)?;
            manifest.primary("meta_final.l2em");
            manifest.primary("meta_final.l2em.json");
            manifest.finish(&out, "ok")
        }
        Err(e) => {
            manifest.diverged = matches!(e, l2e::Error::Divergence { .. });
            manifest.finish(&out, "failed")?;
            Err(e.into())
        }
    }
}
