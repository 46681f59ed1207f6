//! Run configuration: one TOML file with named sections and a strict schema.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use l2e::data::{
    gen_blobs, gen_sine_regression_with, load_idx_pair, split_dataset, ArchChoices, Dataset,
    DatasetSpec, SineConfig, TaskDistribution,
};
use l2e::diagnostics::{RhatVariant, DEFAULT_MAX_COORDS};
use l2e::meta::FeatureNorm;
use l2e::metatrain::{EsConfig, MixtureTaskSource};
use l2e::model::{Activation, ArchitectureConfig, EnergyModel, Likelihood};
use l2e::sampler::{ChainSpec, SamplerConfig, ScheduleSettings};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "config_version")]
    pub version: u32,
    pub seed: Option<u64>,
    pub data: Option<DatasetConfig>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelSection,
    pub sampler: Option<SamplerSection>,
    pub meta_train: Option<MetaTrainSection>,
    pub tasks: Option<TasksSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub paths: PathsSection,
}

fn config_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        classes: usize,
        dim: usize,
        n: usize,
        separation: f64,
    },
    Sine {
        #[serde(default = "sine_n")]
        n: usize,
        #[serde(default = "sine_intervals")]
        intervals: Vec<(f64, f64)>,
    },
    /// IDX image/label files. Without test files the training files are
    /// split according to `[split]`.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
}

fn sine_n() -> usize {
    SineConfig::default().n
}

fn sine_intervals() -> Vec<(f64, f64)> {
    SineConfig::default().intervals
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSection {
    pub channels: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub residual: bool,
    /// Used for image-shaped inputs; otherwise images are flattened.
    pub conv: Option<ConvSection>,
    pub prior_precision: f64,
    pub temperature: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: vec![16],
            activation: Activation::Relu,
            residual: false,
            conv: None,
            prior_precision: 5e-4,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub kind: String,
    pub step_size: f64,
    pub friction: Option<f64>,
    pub momentum_decay: Option<f64>,
    #[serde(default = "unit")]
    pub mass: f64,
    #[serde(default = "psgld_alpha")]
    pub psgld_alpha: f64,
    #[serde(default = "psgld_lambda")]
    pub psgld_lambda: f64,
    #[serde(default = "unit")]
    pub noise_temperature: f64,
    #[serde(default)]
    pub schedule: ScheduleSettings,
    pub batch_size: usize,
    pub samples: usize,
    pub total_steps: Option<u64>,
    pub total_epochs: Option<u64>,
    pub burnin: Option<u64>,
    pub burnin_epochs: Option<u64>,
    pub thin: Option<u64>,
    pub thin_epochs: Option<u64>,
    #[serde(default = "one")]
    pub chains: u64,
    #[serde(default)]
    pub record_updates: bool,
}

fn unit() -> f64 {
    1.0
}

fn one() -> u64 {
    1
}

fn psgld_alpha() -> f64 {
    0.99
}

fn psgld_lambda() -> f64 {
    1e-5
}

/// Step counts after converting epoch-denominated settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedSteps {
    pub steps_per_epoch: u64,
    pub total_steps: u64,
    pub burnin: u64,
    pub thin: u64,
}

impl SamplerSection {
    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            step_size: self.step_size,
            friction: self.friction,
            momentum_decay: if self.friction.is_none() && self.momentum_decay.is_none() {
                SamplerConfig::default().momentum_decay
            } else {
                self.momentum_decay
            },
            mass: self.mass,
            psgld_alpha: self.psgld_alpha,
            psgld_lambda: self.psgld_lambda,
            temperature: self.noise_temperature,
            schedule: self.schedule,
        }
    }

    /// Converts epochs to steps with `⌈n_train / batch_size⌉` steps per epoch.
    pub fn resolve_steps(&self, n_train: usize) -> Result<ResolvedSteps> {
        if self.batch_size == 0 {
            bail!(l2e::Error::Config(
                "sampler.batch_size must be positive".into()
            ));
        }
        let per_epoch = n_train.div_ceil(self.batch_size.min(n_train.max(1))) as u64;
        let pick = |steps: Option<u64>, epochs: Option<u64>, name: &str| -> Result<u64> {
            match (steps, epochs) {
                (Some(s), None) => Ok(s),
                (None, Some(e)) => Ok(e * per_epoch),
                (Some(_), Some(_)) => Err(l2e::Error::Config(format!(
                    "sampler.{name} and sampler.{name}_epochs are mutually exclusive"
                ))
                .into()),
                (None, None) => Err(l2e::Error::Config(format!(
                    "sampler.{name} or sampler.{name}_epochs is required"
                ))
                .into()),
            }
        };
        let total_steps = match (self.total_steps, self.total_epochs) {
            (Some(s), None) => s,
            (None, Some(e)) => e * per_epoch,
            _ => bail!(l2e::Error::Config(
                "give exactly one of sampler.total_steps and sampler.total_epochs".into()
            )),
        };
        Ok(ResolvedSteps {
            steps_per_epoch: per_epoch,
            total_steps,
            burnin: pick(self.burnin, self.burnin_epochs, "burnin")?,
            thin: pick(self.thin, self.thin_epochs, "thin")?,
        })
    }

    pub fn chain_spec(&self, steps: &ResolvedSteps, seed: u64, chain_id: u64) -> ChainSpec {
        ChainSpec {
            total_steps: steps.total_steps,
            burnin: steps.burnin,
            thin: steps.thin,
            samples: self.samples,
            seed,
            chain_id,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTrainSection {
    pub outer_iters: u64,
    #[serde(default)]
    pub feature_norm: FeatureNorm,
    #[serde(default)]
    pub es: EsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TasksSection {
    Distribution {
        pool: Vec<DatasetConfig>,
        #[serde(default = "paper_channels")]
        channels: Vec<usize>,
        #[serde(default = "paper_depths")]
        depths: Vec<usize>,
        #[serde(default = "paper_residual")]
        residual: Vec<bool>,
        #[serde(default = "half")]
        val_fraction: f64,
    },
    Mixture {
        separation: (f64, f64),
        std: f64,
        #[serde(default = "eval_points")]
        eval_points: usize,
        #[serde(default = "half")]
        bandwidth: f64,
    },
}

fn paper_channels() -> Vec<usize> {
    ArchChoices::paper().channels
}

fn paper_depths() -> Vec<usize> {
    ArchChoices::paper().depths
}

fn paper_residual() -> Vec<bool> {
    ArchChoices::paper().residual
}

fn half() -> f64 {
    0.5
}

fn eval_points() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub ece_bins: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { ece_bins: 15 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub splits: usize,
    pub max_coords: usize,
    pub rhat: RhatVariant,
    /// Report ESS/s in units of 1e5.
    pub paper_scale: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            splits: 2,
            max_coords: DEFAULT_MAX_COORDS,
            rhat: RhatVariant::Classical,
            paper_scale: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub points: usize,
    /// Snapshot index pairs; consecutive pairs when absent.
    pub pairs: Option<Vec<(usize, usize)>>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            points: 21,
            pairs: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub out: Option<PathBuf>,
}

/// A parsed config plus the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub sha256: String,
    pub seed: u64,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| l2e::Error::Config(format!("{}: {e}", path.display())))?;
    if config.version != CONFIG_VERSION {
        bail!(l2e::Error::Config(format!(
            "config version {} is not supported (expected {CONFIG_VERSION})",
            config.version
        )));
    }
    let seed = seed_override
        .or(config.seed)
        .ok_or_else(|| l2e::Error::Config(format!("{}: `seed` is required", path.display())))?;
    Ok(LoadedConfig {
        sha256: crate::manifest::sha256_hex(text.as_bytes()),
        config,
        path: path.to_path_buf(),
        seed,
    })
}

fn missing(section: &str) -> anyhow::Error {
    l2e::Error::Config(format!("config has no [{section}] section")).into()
}

impl RunConfig {
    pub fn sampler(&self) -> Result<&SamplerSection> {
        self.sampler.as_ref().ok_or_else(|| missing("sampler"))
    }

    pub fn meta_train(&self) -> Result<&MetaTrainSection> {
        self.meta_train
            .as_ref()
            .ok_or_else(|| missing("meta_train"))
    }

    pub fn tasks(&self) -> Result<&TasksSection> {
        self.tasks.as_ref().ok_or_else(|| missing("tasks"))
    }

    /// `(train, test)` for the `[data]` section.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let data = self.data.as_ref().ok_or_else(|| missing("data"))?;
        if let DatasetConfig::Idx {
            images,
            labels,
            test_images: Some(ti),
            test_labels: Some(tl),
        } = data
        {
            return Ok((load_idx_pair(images, labels)?, load_idx_pair(ti, tl)?));
        }
        let full = build_dataset(data, seed)?;
        Ok(split_dataset(&full, self.split.test_fraction, seed)?)
    }

    pub fn energy_model(&self, data: &Dataset) -> Result<EnergyModel> {
        let m = &self.model;
        let (outputs, likelihood) = if data.is_regression() {
            (1, Likelihood::Gaussian)
        } else {
            (data.num_classes, Likelihood::Categorical)
        };
        let arch = match (data.input_shape.as_slice(), &m.conv) {
            ([c, h, w], Some(conv)) => ArchitectureConfig::conv(
                [*c, *h, *w],
                conv.channels,
                conv.depth,
                m.residual,
                outputs,
            ),
            (shape, _) => {
                let mut widths = vec![shape.iter().product()];
                widths.extend(&m.hidden);
                widths.push(outputs);
                ArchitectureConfig::mlp(widths, m.activation, m.residual)
            }
        };
        Ok(EnergyModel::new(
            arch,
            m.prior_precision,
            m.temperature,
            likelihood,
        )?)
    }
}

pub fn build_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    Ok(match cfg {
        DatasetConfig::Blobs {
            classes,
            dim,
            n,
            separation,
        } => gen_blobs(*classes, *n, *dim, *separation, seed)?,
        DatasetConfig::Sine { n, intervals } => gen_sine_regression_with(
            &SineConfig {
                n: *n,
                intervals: intervals.clone(),
            },
            seed,
        )?,
        DatasetConfig::Idx { images, labels, .. } => load_idx_pair(images, labels)?,
    })
}

pub fn dataset_spec(cfg: &DatasetConfig) -> Result<DatasetSpec> {
    Ok(match cfg {
        DatasetConfig::Blobs {
            classes,
            dim,
            n,
            separation,
        } => DatasetSpec::Blobs {
            classes: *classes,
            dim: *dim,
            n: *n,
            separation: *separation,
        },
        DatasetConfig::Sine { n, intervals } => DatasetSpec::Sine(SineConfig {
            n: *n,
            intervals: intervals.clone(),
        }),
        DatasetConfig::Idx { .. } => {
            DatasetSpec::Fixed(std::sync::Arc::new(build_dataset(cfg, 0)?))
        }
    })
}

pub enum Source {
    Tasks(TaskDistribution),
    Mixture(MixtureTaskSource),
}

impl TasksSection {
    pub fn source(&self) -> Result<Source> {
        Ok(match self {
            TasksSection::Distribution {
                pool,
                channels,
                depths,
                residual,
                val_fraction,
            } => Source::Tasks(TaskDistribution::new(
                pool.iter().map(dataset_spec).collect::<Result<_>>()?,
                ArchChoices {
                    channels: channels.clone(),
                    depths: depths.clone(),
                    residual: residual.clone(),
                },
                *val_fraction,
            )?),
            TasksSection::Mixture {
                separation,
                std,
                eval_points,
                bandwidth,
            } => Source::Mixture(MixtureTaskSource {
                separation: *separation,
                std: *std,
                eval_points: *eval_points,
                bandwidth: *bandwidth,
            }),
        })
    }
}
