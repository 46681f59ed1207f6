//! Inner-loop rollouts of the learned sampler.

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::loss::{bma_loss_from_loglik, ce_loss_from_loglik, member_log_likelihoods};
use crate::data::{sample_task, Dataset, Labels, Task, TaskDistribution};
use crate::error::{Error, Result};
use crate::meta::MetaParams;
use crate::model::{EnergyModel, Likelihood};
use crate::rng::{derive_key, substream, tag, StreamRng};
use crate::sampler::{
    initial_momentum, run_chain_with, ChainOptions, ChainSpec, MinibatchTarget, SampleSet,
    SamplerConfig, SamplerKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerSampler {
    #[default]
    L2e,
    KineticL2e,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetaLossKind {
    #[default]
    Bma,
    Ce,
}

/// Settings of the ES outer loop and of the inner rollouts it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsConfig {
    /// Perturbation scale σ.
    pub sigma: f64,
    /// Antithetic pairs per outer iteration.
    pub pairs: usize,
    pub inner_steps: u64,
    /// Defaults to `inner_steps − samples·thin`.
    pub burnin: Option<u64>,
    pub thin: u64,
    pub samples: usize,
    pub batch_size: usize,
    pub val_batch_size: usize,
    /// λ in the `λ‖θ‖²` prior term.
    pub prior_precision: f64,
    pub temperature: f64,
    pub sampler: SamplerConfig,
    pub inner_sampler: InnerSampler,
    pub meta_loss: MetaLossKind,
    pub learning_rate: f64,
    pub clip_norm: f64,
    /// Diverged rollouts score `penalty_factor` times the task's
    /// uninformed-predictor loss.
    pub penalty_factor: f64,
    pub max_consecutive_divergences: usize,
    pub checkpoint_every: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            sigma: 0.01,
            pairs: 1,
            inner_steps: 3000,
            burnin: None,
            thin: 50,
            samples: 10,
            batch_size: 100,
            val_batch_size: 100,
            prior_precision: 5e-4,
            temperature: 1.0,
            sampler: SamplerConfig::default(),
            inner_sampler: InnerSampler::L2e,
            meta_loss: MetaLossKind::Bma,
            learning_rate: 0.01,
            clip_norm: 1.0,
            penalty_factor: 10.0,
            max_consecutive_divergences: 20,
            checkpoint_every: 100,
        }
    }
}

impl EsConfig {
    pub fn burnin(&self) -> u64 {
        self.burnin.unwrap_or_else(|| {
            self.inner_steps
                .saturating_sub(self.samples as u64 * self.thin)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("sigma must be positive"));
        }
        if self.pairs == 0 || self.samples == 0 || self.thin == 0 {
            return Err(Error::config("pairs, samples and thin must be positive"));
        }
        if self.batch_size == 0 || self.val_batch_size == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.burnin() + self.samples as u64 * self.thin > self.inner_steps {
            return Err(Error::config(format!(
                "burn-in {} + {} samples × thin {} exceeds {} inner steps",
                self.burnin(),
                self.samples,
                self.thin,
                self.inner_steps
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::config(
                "learning rate and clip norm must be positive",
            ));
        }
        if !(self.penalty_factor > 0.0)
            || !(self.prior_precision >= 0.0)
            || !(self.temperature > 0.0)
        {
            return Err(Error::config(
                "penalty factor, prior precision or temperature out of range",
            ));
        }
        if self.max_consecutive_divergences == 0 {
            return Err(Error::config(
                "max_consecutive_divergences must be positive",
            ));
        }
        self.sampler.validate()
    }

    pub fn chain_spec(&self, seed: u64) -> ChainSpec {
        ChainSpec {
            total_steps: self.inner_steps,
            burnin: self.burnin(),
            thin: self.thin,
            samples: self.samples,
            seed,
            chain_id: 0,
        }
    }

    pub fn sampler_kind(&self, meta: &MetaParams) -> SamplerKind {
        match self.inner_sampler {
            InnerSampler::L2e => SamplerKind::L2e(meta.clone()),
            InnerSampler::KineticL2e => SamplerKind::KineticL2e(meta.clone()),
        }
    }
}

/// Random inputs consumed by a rollout, for common-random-number checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub theta0: Vec<f64>,
    pub momentum0: Vec<f64>,
    /// Minibatch indices served to the chain, in order.
    pub batches: Vec<Vec<usize>>,
    pub val_indices: Vec<usize>,
    /// Seed of the chain's per-step noise streams.
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub loss: f64,
    pub diverged: bool,
    /// A probability was clamped in the meta-loss.
    pub clamped: bool,
    pub snapshot_steps: Vec<u64>,
    pub transcript: Option<Transcript>,
}

/// Something an inner loop can be run on.
pub trait InnerProblem: Sync {
    fn id(&self) -> u64;
    /// Loss of an uninformed predictor; the divergence penalty is a multiple.
    fn penalty_base(&self) -> f64;
    /// Runs the learned sampler with `meta` and scores the collected set.
    /// Every random input is derived from `seed`.
    fn rollout(&self, meta: &MetaParams, cfg: &EsConfig, seed: u64, trace: bool)
        -> Result<Rollout>;
}

/// A distribution of inner problems.
pub trait TaskSource: Sync {
    type Problem: InnerProblem;
    fn sample(&self, rng: &mut StreamRng) -> Result<Self::Problem>;
}

impl TaskSource for TaskDistribution {
    type Problem = Task;
    fn sample(&self, rng: &mut StreamRng) -> Result<Task> {
        sample_task(self, rng)
    }
}

impl Task {
    pub fn likelihood(&self) -> Likelihood {
        if self.train.is_regression() {
            Likelihood::Gaussian
        } else {
            Likelihood::Categorical
        }
    }

    pub fn energy_model(&self, prior_precision: f64, temperature: f64) -> Result<EnergyModel> {
        EnergyModel::new(
            self.arch.clone(),
            prior_precision,
            temperature,
            self.likelihood(),
        )
    }
}

/// Held-out mini-batch drawn without replacement (the whole split when it is
/// smaller than `size`).
pub fn validation_indices(val: &Dataset, size: usize, seed: u64) -> Vec<usize> {
    let n = val.len();
    if size >= n {
        return (0..n).collect();
    }
    let mut idx = sample_indices(&mut substream(seed, &[tag::VALIDATION]), n, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Scores a collected set with the configured meta-loss.
pub fn score_samples(
    samples: &SampleSet,
    model: &EnergyModel,
    val: &crate::data::DataBatch,
    kind: MetaLossKind,
) -> Result<(f64, bool)> {
    let ll = member_log_likelihoods(samples, model, val)?;
    let f = match kind {
        MetaLossKind::Bma => bma_loss_from_loglik(&ll)?,
        MetaLossKind::Ce => ce_loss_from_loglik(&ll)?,
    };
    Ok((f.value, f.flagged))
}

/// Runs the chain of one rollout on `task` and returns the collected set.
pub fn run_inner_chain(
    task: &Task,
    meta: &MetaParams,
    cfg: &EsConfig,
    seed: u64,
    trace: bool,
) -> Result<(SampleSet, EnergyModel, Option<Vec<Vec<usize>>>)> {
    let model = task.energy_model(cfg.prior_precision, cfg.temperature)?;
    let theta0 = model.init_params(derive_key(seed, &[tag::INIT, 0]));
    let batch = cfg.batch_size.min(task.train.len());
    let mut target = MinibatchTarget::new(
        &model,
        &task.train,
        batch,
        derive_key(seed, &[tag::BATCH, 0]),
    )?;
    if trace {
        target = target.record_transcript();
    }
    let set = run_chain_with(
        &cfg.sampler_kind(meta),
        &mut target,
        theta0.values,
        theta0.layout,
        &cfg.sampler,
        &cfg.chain_spec(seed),
        ChainOptions::default(),
    )?;
    let transcript = target.transcript.take();
    Ok((set, model, transcript))
}

/// `inner_loop` on a classification or regression task.
pub fn inner_loop(task: &Task, meta: &MetaParams, cfg: &EsConfig, seed: u64) -> Result<Rollout> {
    task.rollout(meta, cfg, seed, false)
}

impl InnerProblem for Task {
    fn id(&self) -> u64 {
        self.task_id
    }

    fn penalty_base(&self) -> f64 {
        match &self.val.labels {
            Labels::Class(_) => (self.train.num_classes.max(2) as f64).ln(),
            Labels::Real(y) => {
                let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
                0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * ms
            }
        }
    }

    fn rollout(
        &self,
        meta: &MetaParams,
        cfg: &EsConfig,
        seed: u64,
        trace: bool,
    ) -> Result<Rollout> {
        cfg.validate()?;
        let (set, model, batches) = run_inner_chain(self, meta, cfg, seed, trace)?;
        let val_idx = validation_indices(&self.val, cfg.val_batch_size, seed);
        let transcript = trace.then(|| Transcript {
            theta0: model.init_params(derive_key(seed, &[tag::INIT, 0])).values,
            momentum0: initial_momentum(model.dim(), cfg.sampler.mass, seed, 0),
            batches: batches.unwrap_or_default(),
            val_indices: val_idx.clone(),
            noise_seed: seed,
        });
        let penalty = Rollout {
            loss: cfg.penalty_factor * self.penalty_base(),
            diverged: true,
            clamped: false,
            snapshot_steps: set.steps(),
            transcript: transcript.clone(),
        };
        if set.divergence.is_some() || set.len() != cfg.samples {
            return Ok(penalty);
        }
        let val = self.val.batch(&val_idx, self.val.len());
        let (loss, clamped) = score_samples(&set, &model, &val, cfg.meta_loss)?;
        if !loss.is_finite() {
            return Ok(penalty);
        }
        Ok(Rollout {
            loss,
            diverged: false,
            clamped,
            snapshot_steps: set.steps(),
            transcript,
        })
    }
}
