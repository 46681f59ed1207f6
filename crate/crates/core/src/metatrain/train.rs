//! The ES outer loop.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, clip_global_norm, OuterState};
use super::es::{es_gradient, RolloutLoss};
use super::inner::{EsConfig, InnerProblem, TaskSource};
use crate::error::{Error, Result};
use crate::meta::MetaParams;
use crate::rng::{substream, tag};

/// One row of the meta-training loss trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer_iter: u64,
    pub task_id: u64,
    /// Mean over pairs of `L(φ+η)`.
    pub loss_plus: f64,
    pub loss_minus: f64,
    /// Norm of the ES estimate before clipping.
    pub grad_norm: f64,
    pub wall_clock_s: f64,
    pub diverged_rollouts: usize,
}

impl IterationRecord {
    /// `(L(φ+η) + L(φ−η))/2`.
    pub fn smoothed_loss(&self) -> f64 {
        0.5 * (self.loss_plus + self.loss_minus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainOutput {
    pub meta: MetaParams,
    pub outer: OuterState,
    pub trace: Vec<IterationRecord>,
}

/// Trains `init` for `outer_iters` iterations. Each iteration samples a task
/// from `source`, estimates the ES gradient with antithetic rollouts, clips it
/// and takes an Adam step. `on_iter` sees every record with the updated
/// state (use it for logging and checkpoints). Aborts with a divergence
/// error once `max_consecutive_divergences` iterations in a row had a
/// diverged rollout.
pub fn meta_train<S, F>(
    source: &S,
    cfg: &EsConfig,
    init: MetaParams,
    outer_iters: u64,
    seed: u64,
    mut on_iter: F,
) -> Result<MetaTrainOutput>
where
    S: TaskSource,
    F: FnMut(&IterationRecord, &OuterState) -> Result<()>,
{
    cfg.validate()?;
    let mut outer = OuterState::new(init, cfg.learning_rate)?;
    let mut trace = Vec::with_capacity(outer_iters as usize);
    let mut streak = 0usize;
    let start = Instant::now();
    for iter in 0..outer_iters {
        let problem = source.sample(&mut substream(seed, &[tag::TASK, iter]))?;
        let meta = &outer.meta;
        let est = es_gradient(&meta.values, cfg.sigma, cfg.pairs, seed, iter, |phi, rs| {
            let r = problem.rollout(&meta.with_values(phi.to_vec()), cfg, rs, false)?;
            Ok(RolloutLoss {
                loss: r.loss,
                diverged: r.diverged,
            })
        })?;
        let grad_norm = est.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let clipped = clip_global_norm(&est.grad, cfg.clip_norm)?;
        outer = adam_step(&outer, &clipped)?;
        let n = est.pairs.len() as f64;
        let diverged = est
            .pairs
            .iter()
            .map(|p| p.plus.diverged as usize + p.minus.diverged as usize)
            .sum();
        let rec = IterationRecord {
            outer_iter: iter,
            task_id: problem.id(),
            loss_plus: est.pairs.iter().map(|p| p.plus.loss).sum::<f64>() / n,
            loss_minus: est.pairs.iter().map(|p| p.minus.loss).sum::<f64>() / n,
            grad_norm,
            wall_clock_s: start.elapsed().as_secs_f64(),
            diverged_rollouts: diverged,
        };
        on_iter(&rec, &outer)?;
        trace.push(rec);
        streak = if diverged > 0 { streak + 1 } else { 0 };
        if streak >= cfg.max_consecutive_divergences {
            return Err(Error::Divergence {
                step: iter,
                reason: format!("rollouts diverged in {streak} consecutive outer iterations"),
            });
        }
    }
    Ok(MetaTrainOutput {
        meta: outer.meta.clone(),
        outer,
        trace,
    })
}

/// Mean smoothed loss over the first and last `fraction` of a trace.
pub fn window_means(trace: &[IterationRecord], fraction: f64) -> Option<(f64, f64)> {
    let w = ((trace.len() as f64 * fraction).round() as usize).max(1);
    if trace.len() < w {
        return None;
    }
    let mean =
        |s: &[IterationRecord]| s.iter().map(|r| r.smoothed_loss()).sum::<f64>() / s.len() as f64;
    Some((mean(&trace[..w]), mean(&trace[trace.len() - w..])))
}
