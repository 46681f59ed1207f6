use std::sync::Arc;

use rand::Rng;

use super::generators::{gen_blobs, gen_sine_regression_with, SineConfig};
use super::{split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::model::{Activation, ArchitectureConfig};
use crate::rng::StreamRng;

/// One entry of the dataset pool.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Regenerated with a fresh seed for every sampled task.
    Blobs {
        classes: usize,
        dim: usize,
        n: usize,
        separation: f64,
    },
    Sine(SineConfig),
    /// A loaded dataset (e.g. from IDX files), shared by every task.
    Fixed(Arc<Dataset>),
}

/// Architecture options. For vector inputs `channels` is the hidden width and
/// `depths` the number of hidden layers of an MLP; for `[C, H, W]` inputs they
/// are the conv channel count and number of conv layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchChoices {
    pub channels: Vec<usize>,
    pub depths: Vec<usize>,
    pub residual: Vec<bool>,
}

impl ArchChoices {
    pub fn paper() -> Self {
        ArchChoices {
            channels: vec![4, 8, 16],
            depths: vec![1, 2, 3, 4, 5],
            residual: vec![false, true],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.depths.is_empty() || self.residual.is_empty() {
            return Err(Error::config("architecture choice lists must be non-empty"));
        }
        if self.channels.contains(&0) || self.depths.contains(&0) {
            return Err(Error::config("channels and depths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDistribution {
    pub pool: Vec<DatasetSpec>,
    pub arch: ArchChoices,
    pub val_fraction: f64,
}

impl TaskDistribution {
    pub fn new(pool: Vec<DatasetSpec>, arch: ArchChoices, val_fraction: f64) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::config(
                "task distribution needs at least one dataset",
            ));
        }
        arch.validate()?;
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(Error::config("val_fraction must lie in (0, 1)"));
        }
        Ok(TaskDistribution {
            pool,
            arch,
            val_fraction,
        })
    }
}

/// A meta-training task: disjoint train/validation splits plus a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub train: Dataset,
    pub val: Dataset,
    pub arch: ArchitectureConfig,
    pub task_id: u64,
    pub dataset_index: usize,
}

impl Task {
    pub fn new(
        train: Dataset,
        val: Dataset,
        arch: ArchitectureConfig,
        task_id: u64,
    ) -> Result<Self> {
        if val.is_empty() || train.is_empty() {
            return Err(Error::config("task splits must be non-empty"));
        }
        Ok(Task {
            train,
            val,
            arch,
            task_id,
            dataset_index: 0,
        })
    }
}

fn pick<T: Copy>(rng: &mut StreamRng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// Draws a dataset uniformly from the pool and each architecture option
/// uniformly from its choice list.
pub fn sample_task(dist: &TaskDistribution, rng: &mut StreamRng) -> Result<Task> {
    let dataset_index = rng.random_range(0..dist.pool.len());
    let channels = pick(rng, &dist.arch.channels);
    let depth = pick(rng, &dist.arch.depths);
    let residual = pick(rng, &dist.arch.residual);
    let task_id: u64 = rng.random();

    let data = match &dist.pool[dataset_index] {
        DatasetSpec::Blobs {
            classes,
            dim,
            n,
            separation,
        } => gen_blobs(*classes, *n, *dim, *separation, task_id)?,
        DatasetSpec::Sine(cfg) => gen_sine_regression_with(cfg, task_id)?,
        DatasetSpec::Fixed(ds) => ds.as_ref().clone(),
    };
    let (train, val) = split_dataset(&data, dist.val_fraction, task_id)?;
    let outputs = if data.is_regression() {
        1
    } else {
        data.num_classes
    };
    let arch = match data.input_shape.as_slice() {
        [c, h, w] => ArchitectureConfig::conv([*c, *h, *w], channels, depth, residual, outputs),
        shape => {
            let input: usize = shape.iter().product();
            let mut widths = vec![input];
            widths.extend(std::iter::repeat_n(channels, depth));
            widths.push(outputs);
            ArchitectureConfig::mlp(widths, Activation::Relu, residual)
        }
    };
    arch.validate()?;
    Ok(Task {
        train,
        val,
        arch,
        task_id,
        dataset_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchKind;
    use crate::rng::substream;

    fn blobs() -> DatasetSpec {
        DatasetSpec::Blobs {
            classes: 2,
            dim: 2,
            n: 40,
            separation: 3.0,
        }
    }

    #[test]
    fn single_option_pool_is_constant() {
        let dist = TaskDistribution::new(
            vec![blobs()],
            ArchChoices {
                channels: vec![8],
                depths: vec![2],
                residual: vec![false],
            },
            0.25,
        )
        .unwrap();
        let mut rng = substream(1, &[]);
        for _ in 0..5 {
            let t = sample_task(&dist, &mut rng).unwrap();
            assert_eq!(t.dataset_index, 0);
            assert_eq!(
                t.arch.kind,
                ArchKind::Mlp {
                    widths: vec![2, 8, 8, 2]
                }
            );
            assert_eq!((t.train.len(), t.val.len()), (30, 10));
        }
    }

    #[test]
    fn paper_choices_stay_in_domain() {
        let img = Dataset::new(
            vec![0.5; 3 * 16],
            vec![1, 4, 4],
            super::super::Labels::Class(vec![0, 1, 0]),
            2,
            "img",
        )
        .unwrap();
        let dist = TaskDistribution::new(
            vec![DatasetSpec::Fixed(Arc::new(img))],
            ArchChoices::paper(),
            0.34,
        )
        .unwrap();
        let mut rng = substream(2, &[]);
        for _ in 0..200 {
            let t = sample_task(&dist, &mut rng).unwrap();
            let ArchKind::Conv { channels, depth } = t.arch.kind else {
                panic!()
            };
            assert!([4, 8, 16].contains(&channels));
            assert!((1..=5).contains(&depth));
        }
    }

    #[test]
    fn fixed_seed_gives_identical_sequence() {
        let dist =
            TaskDistribution::new(vec![blobs(), blobs()], ArchChoices::paper(), 0.25).unwrap();
        let a: Vec<Task> = {
            let mut r = substream(3, &[]);
            (0..4)
                .map(|_| sample_task(&dist, &mut r).unwrap())
                .collect()
        };
        let b: Vec<Task> = {
            let mut r = substream(3, &[]);
            (0..4)
                .map(|_| sample_task(&dist, &mut r).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(TaskDistribution::new(vec![], ArchChoices::paper(), 0.2).is_err());
    }
}
