//! One-dimensional mixture targets for exploration experiments.
//!
//! The rollout loss is the BMA loss of a Gaussian kernel density: points
//! `y_j` are drawn from the mixture and scored by
//! `−mean_j log (1/K) Σ_k N(y_j; θ_k, h²)`, so a chain that never leaves its
//! starting mode pays for the mass it misses.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::inner::{EsConfig, InnerProblem, Rollout, TaskSource, Transcript};
use super::loss::bma_loss_from_loglik;
use crate::error::{Error, Result};
use crate::meta::MetaParams;
use crate::model::{Layout, MixturePotential};
use crate::rng::{substream, tag, StreamRng};
use crate::sampler::{initial_momentum, run_chain_with, ChainOptions, FixedTarget, SampleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTask {
    pub potential: MixturePotential,
    /// Component the chain is initialised in.
    pub start_mode: usize,
    pub start_std: f64,
    pub eval_points: usize,
    pub bandwidth: f64,
    pub id: u64,
}

impl MixtureTask {
    pub fn new(
        potential: MixturePotential,
        start_mode: usize,
        eval_points: usize,
        bandwidth: f64,
        id: u64,
    ) -> Result<Self> {
        if potential.dim != 1 {
            return Err(Error::config("mixture tasks are one-dimensional"));
        }
        if start_mode >= potential.means.len() {
            return Err(Error::config("start mode out of range"));
        }
        if eval_points == 0 || !(bandwidth > 0.0) {
            return Err(Error::config(
                "need evaluation points and a positive bandwidth",
            ));
        }
        let start_std = potential.stds[start_mode];
        Ok(MixtureTask {
            potential,
            start_mode,
            start_std,
            eval_points,
            bandwidth,
            id,
        })
    }

    pub fn theta0(&self, seed: u64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut substream(seed, &[tag::INIT, 0]));
        self.potential.means[self.start_mode] + self.start_std * z
    }

    /// Evaluation points drawn from the mixture.
    pub fn eval_draws(&self, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, &[tag::VALIDATION]);
        let p = &self.potential;
        (0..self.eval_points)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = p.weights.len() - 1;
                for (i, w) in p.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                let z: f64 = StandardNormal.sample(&mut rng);
                p.means[k] + p.stds[k] * z
            })
            .collect()
    }

    /// KDE BMA loss of the given points against `draws`.
    pub fn kde_loss(&self, points: &[f64], draws: &[f64]) -> Result<(f64, bool)> {
        let h = self.bandwidth;
        let c = -h.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let ll: Vec<Vec<f64>> = points
            .iter()
            .map(|t| {
                draws
                    .iter()
                    .map(|y| {
                        let z = (y - t) / h;
                        c - 0.5 * z * z
                    })
                    .collect()
            })
            .collect();
        let f = bma_loss_from_loglik(&ll)?;
        Ok((f.value, f.flagged))
    }

    /// Runs the configured learned sampler on the mixture.
    pub fn run(&self, meta: &MetaParams, cfg: &EsConfig, seed: u64) -> Result<SampleSet> {
        let mut target = FixedTarget(self.potential.clone());
        run_chain_with(
            &cfg.sampler_kind(meta),
            &mut target,
            vec![self.theta0(seed)],
            Layout::flat(1),
            &cfg.sampler,
            &cfg.chain_spec(seed),
            ChainOptions::default(),
        )
    }
}

impl InnerProblem for MixtureTask {
    fn id(&self) -> u64 {
        self.id
    }

    /// Loss of a chain frozen at its starting mode's mean.
    fn penalty_base(&self) -> f64 {
        let draws = self.eval_draws(self.id);
        self.kde_loss(&[self.potential.means[self.start_mode]], &draws)
            .map(|l| l.0)
            .unwrap_or(1.0)
            .max(1.0)
    }

    fn rollout(
        &self,
        meta: &MetaParams,
        cfg: &EsConfig,
        seed: u64,
        trace: bool,
    ) -> Result<Rollout> {
        cfg.validate()?;
        let set = self.run(meta, cfg, seed)?;
        let transcript = trace.then(|| Transcript {
            theta0: vec![self.theta0(seed)],
            momentum0: initial_momentum(1, cfg.sampler.mass, seed, 0),
            batches: Vec::new(),
            val_indices: Vec::new(),
            noise_seed: seed,
        });
        let points: Vec<f64> = set.snapshots.iter().map(|s| s.values[0]).collect();
        if set.divergence.is_some()
            || points.len() != cfg.samples
            || points.iter().any(|p| !p.is_finite())
        {
            return Ok(Rollout {
                loss: cfg.penalty_factor * self.penalty_base(),
                diverged: true,
                clamped: false,
                snapshot_steps: set.steps(),
                transcript,
            });
        }
        let (loss, clamped) = self.kde_loss(&points, &self.eval_draws(seed))?;
        Ok(Rollout {
            loss,
            diverged: false,
            clamped,
            snapshot_steps: set.steps(),
            transcript,
        })
    }
}

/// Two equal-weight modes at `±separation/2` with the separation drawn
/// uniformly from a range and the starting mode drawn at random.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTaskSource {
    pub separation: (f64, f64),
    pub std: f64,
    pub eval_points: usize,
    pub bandwidth: f64,
}

impl TaskSource for MixtureTaskSource {
    type Problem = MixtureTask;

    fn sample(&self, rng: &mut StreamRng) -> Result<MixtureTask> {
        let (lo, hi) = self.separation;
        if !(hi >= lo && lo > 0.0) {
            return Err(Error::config(
                "separation range must be positive and ordered",
            ));
        }
        let sep = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let start = rng.random_range(0..2);
        let id: u64 = rng.random();
        MixtureTask::new(
            MixturePotential::two_modes(sep, self.std),
            start,
            self.eval_points,
            self.bandwidth,
            id,
        )
    }
}
