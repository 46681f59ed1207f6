use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Phase, SamplerConfig, ScheduleKind};
use super::state::SamplerState;
use super::steps::{kinetic_l2e_step, l2e_step, psgld_step, sghmc_step, sgld_step, StepInfo};
use crate::data::{batch_iterator, BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::meta::MetaParams;
use crate::model::{BatchEnergy, EnergyModel, Layout, Potential};
use crate::rng::{derive_key, normal_vec, substream, tag, Noise};

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    Sgld,
    Sghmc,
    Psgld,
    /// SGHMC driven by a cyclical schedule: noise-free during exploration.
    Csgmcmc,
    L2e(MetaParams),
    KineticL2e(MetaParams),
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Sgld => "sgld",
            SamplerKind::Sghmc => "sghmc",
            SamplerKind::Psgld => "psgld",
            SamplerKind::Csgmcmc => "csgmcmc",
            SamplerKind::L2e(_) => "l2e",
            SamplerKind::KineticL2e(_) => "kinetic_l2e",
        }
    }

    /// Parses a kernel name; learned kernels need their meta parameters.
    pub fn from_name(name: &str, meta: Option<MetaParams>) -> Result<Self> {
        let need = |meta: Option<MetaParams>| {
            meta.ok_or_else(|| Error::config(format!("sampler {name} needs a meta checkpoint")))
        };
        Ok(match name {
            "sgld" => SamplerKind::Sgld,
            "sghmc" => SamplerKind::Sghmc,
            "psgld" => SamplerKind::Psgld,
            "csgmcmc" => SamplerKind::Csgmcmc,
            "l2e" => SamplerKind::L2e(need(meta)?),
            "kinetic_l2e" => SamplerKind::KineticL2e(need(meta)?),
            other => return Err(Error::config(format!("unknown sampler {other}"))),
        })
    }
}

/// Length, collection rule and randomness of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub total_steps: u64,
    pub burnin: u64,
    pub thin: u64,
    pub samples: usize,
    pub seed: u64,
    pub chain_id: u64,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.samples == 0 {
            return Err(Error::config("thin and samples must be positive"));
        }
        if self.burnin + self.samples as u64 * self.thin > self.total_steps {
            return Err(Error::config(format!(
                "burn-in {} + {} samples × thin {} exceeds {} steps",
                self.burnin, self.samples, self.thin, self.total_steps
            )));
        }
        Ok(())
    }

    /// Steps eligible for collection: `i > B` and `i mod thin = 0`.
    pub fn is_eligible(&self, i: u64) -> bool {
        i > self.burnin && i % self.thin == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceInfo {
    pub step: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub step: u64,
    pub step_size: f64,
    pub delta_sq: f64,
    pub beta_sq: Option<f64>,
    /// Minibatch energy at the pre-update position.
    pub energy: Option<f64>,
}

/// Collected snapshots of one chain with burn-in/thinning metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub layout: Layout,
    pub snapshots: Vec<Snapshot>,
    pub sampler: String,
    pub total_steps: u64,
    pub burnin: u64,
    pub thin: u64,
    pub seed: u64,
    /// Wall-clock seconds of the thinning interval preceding each snapshot.
    pub interval_seconds: Option<Vec<f64>>,
    pub divergence: Option<DivergenceInfo>,
    pub update_log: Vec<UpdateRecord>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn steps(&self) -> Vec<u64> {
        self.snapshots.iter().map(|s| s.step).collect()
    }

    pub fn values(&self) -> Vec<&[f64]> {
        self.snapshots.iter().map(|s| s.values.as_slice()).collect()
    }

    /// Mean seconds per thinning interval.
    pub fn seconds_per_interval(&self) -> Option<f64> {
        self.interval_seconds
            .as_ref()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Copy without wall-clock data, for byte-reproducible persistence.
    pub fn without_timing(&self) -> SampleSet {
        SampleSet {
            interval_seconds: None,
            ..self.clone()
        }
    }
}

/// A stream of potentials, one per step (e.g. one per minibatch).
pub trait StochasticTarget {
    fn dim(&self) -> usize;
    /// Dataset size used by pSGLD's gradient rescaling.
    fn n_data(&self) -> usize {
        1
    }
    fn next_potential(&mut self) -> Box<dyn Potential + '_>;
}

/// A fixed potential reused at every step.
#[derive(Debug, Clone)]
pub struct FixedTarget<P>(pub P);

impl<P: Potential> StochasticTarget for FixedTarget<P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn next_potential(&mut self) -> Box<dyn Potential + '_> {
        Box::new(&self.0)
    }
}

/// Network energy over a reshuffled minibatch stream.
#[derive(Debug)]
pub struct MinibatchTarget<'a> {
    pub model: &'a EnergyModel,
    batches: BatchIterator<'a>,
    current: Option<crate::data::DataBatch>,
    /// Indices of every batch served so far, when recording is on.
    pub transcript: Option<Vec<Vec<usize>>>,
}

impl<'a> MinibatchTarget<'a> {
    pub fn new(
        model: &'a EnergyModel,
        data: &'a Dataset,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(MinibatchTarget {
            model,
            batches: batch_iterator(data, batch_size, seed)?,
            current: None,
            transcript: None,
        })
    }

    pub fn record_transcript(mut self) -> Self {
        self.transcript = Some(Vec::new());
        self
    }
}

impl StochasticTarget for MinibatchTarget<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn n_data(&self) -> usize {
        self.batches.dataset_len()
    }
    fn next_potential(&mut self) -> Box<dyn Potential + '_> {
        let b = self.batches.next_batch();
        if let Some(t) = &mut self.transcript {
            t.push(b.indices.clone());
        }
        self.current = Some(b);
        Box::new(BatchEnergy {
            model: self.model,
            batch: self.current.as_ref().unwrap(),
        })
    }
}

/// Noise stream of step `t` of a chain.
pub fn step_noise(seed: u64, chain_id: u64, t: u64) -> Noise {
    Noise::gaussian(seed, &[tag::NOISE, chain_id, t])
}

/// Initial momentum `r_0 ~ N(0, M·I)`.
pub fn initial_momentum(d: usize, mass: f64, seed: u64, chain_id: u64) -> Vec<f64> {
    normal_vec(
        &mut substream(seed, &[tag::MOMENTUM, chain_id]),
        d,
        mass.sqrt(),
    )
}

/// Applies one kernel step with step size `eps` in the given phase.
pub fn apply_kernel(
    kind: &SamplerKind,
    state: &mut SamplerState,
    potential: &dyn Potential,
    config: &SamplerConfig,
    eps: f64,
    phase: Phase,
    n_data: usize,
    noise: &mut Noise,
) -> Result<StepInfo> {
    let c = config.friction_coefficient(eps)?;
    let t = config.temperature;
    match kind {
        SamplerKind::Sgld => sgld_step(state, potential, eps, t, noise),
        SamplerKind::Sghmc => sghmc_step(state, potential, eps, c, config.mass, t, noise),
        SamplerKind::Psgld => psgld_step(
            state,
            potential,
            eps,
            config.psgld_alpha,
            config.psgld_lambda,
            n_data,
            t,
            noise,
        ),
        SamplerKind::Csgmcmc => {
            if phase == Phase::Explore {
                sghmc_step(state, potential, eps, c, config.mass, t, &mut Noise::Zero)
            } else {
                sghmc_step(state, potential, eps, c, config.mass, t, noise)
            }
        }
        SamplerKind::L2e(meta) => l2e_step(state, potential, eps, c, meta, t, noise),
        SamplerKind::KineticL2e(meta) => kinetic_l2e_step(state, potential, eps, c, meta, t, noise),
    }
}

/// Options that do not affect the chain itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainOptions {
    pub record_updates: bool,
    pub zero_noise: bool,
}

/// Runs one chain from `theta0` (momentum drawn from `N(0, M·I)`), keeping the
/// last `spec.samples` eligible snapshots. A divergence ends the chain early
/// and is reported in the returned set together with the snapshots gathered
/// so far.
pub fn run_chain_with<T: StochasticTarget + ?Sized>(
    kind: &SamplerKind,
    target: &mut T,
    theta0: Vec<f64>,
    layout: Layout,
    config: &SamplerConfig,
    spec: &ChainSpec,
    options: ChainOptions,
) -> Result<SampleSet> {
    config.validate()?;
    spec.validate()?;
    if theta0.len() != target.dim() || layout.len() != theta0.len() {
        return Err(Error::contract(
            "initial θ, layout and target disagree in dimension",
        ));
    }
    let schedule = config.schedule_spec(spec.total_steps);
    schedule.validate()?;
    if matches!(kind, SamplerKind::Csgmcmc) && schedule.kind != ScheduleKind::Cyclical {
        return Err(Error::config("csgmcmc needs a cyclical schedule"));
    }

    // Which eligible steps are actually kept: the last `samples` of them.
    let mut eligible = Vec::new();
    for i in 1..=spec.total_steps {
        if spec.is_eligible(i) && schedule.at(i - 1)?.1 == Phase::Sample {
            eligible.push(i);
        }
    }
    if eligible.len() < spec.samples {
        return Err(Error::config(format!(
            "only {} collection slots for {} requested samples",
            eligible.len(),
            spec.samples
        )));
    }
    let first_kept = eligible[eligible.len() - spec.samples];

    let d = theta0.len();
    let momentum = initial_momentum(d, config.mass, spec.seed, spec.chain_id);
    let mut state = SamplerState::new(theta0, momentum, spec.chain_id);
    let n_data = target.n_data();

    let mut set = SampleSet {
        layout,
        snapshots: Vec::with_capacity(spec.samples),
        sampler: kind.name().to_string(),
        total_steps: spec.total_steps,
        burnin: spec.burnin,
        thin: spec.thin,
        seed: spec.seed,
        interval_seconds: Some(Vec::with_capacity(spec.samples)),
        divergence: None,
        update_log: Vec::new(),
    };
    let mut mark = Instant::now();

    for i in 1..=spec.total_steps {
        let (eps, phase) = schedule.at(i - 1)?;
        let mut noise = if options.zero_noise {
            Noise::Zero
        } else {
            step_noise(spec.seed, spec.chain_id, i)
        };
        let potential = target.next_potential();
        let energy = if options.record_updates {
            potential.value(&state.theta).ok()
        } else {
            None
        };
        match apply_kernel(
            kind,
            &mut state,
            potential.as_ref(),
            config,
            eps,
            phase,
            n_data,
            &mut noise,
        ) {
            Ok(info) => {
                if options.record_updates {
                    set.update_log.push(UpdateRecord {
                        step: i,
                        step_size: eps,
                        delta_sq: info.delta_sq,
                        beta_sq: info.beta_sq,
                        energy,
                    });
                }
            }
            Err(Error::Divergence { step, reason }) => {
                set.divergence = Some(DivergenceInfo { step, reason });
                return Ok(set);
            }
            Err(e) => return Err(e),
        }
        if i % spec.thin == 0 {
            let elapsed = mark.elapsed().as_secs_f64();
            mark = Instant::now();
            if i >= first_kept && spec.is_eligible(i) && phase == Phase::Sample {
                set.snapshots.push(Snapshot {
                    step: i,
                    values: state.theta.clone(),
                });
                if let Some(t) = &mut set.interval_seconds {
                    t.push(elapsed);
                }
            }
        }
    }
    Ok(set)
}

/// Runs a chain on a network posterior with minibatches of `batch_size`,
/// starting from the model's seeded initialisation.
pub fn run_chain(
    kind: &SamplerKind,
    model: &EnergyModel,
    data: &Dataset,
    batch_size: usize,
    config: &SamplerConfig,
    spec: &ChainSpec,
) -> Result<SampleSet> {
    let theta0 = model.init_params(derive_key(spec.seed, &[tag::INIT, spec.chain_id]));
    let mut target = MinibatchTarget::new(
        model,
        data,
        batch_size,
        derive_key(spec.seed, &[tag::BATCH, spec.chain_id]),
    )?;
    run_chain_with(
        kind,
        &mut target,
        theta0.values,
        theta0.layout,
        config,
        spec,
        ChainOptions::default(),
    )
}
