//! Datasets, minibatches, generators, IDX ingestion and the meta-training
//! task distribution.

mod batch;
mod generators;
mod idx;
mod task;

pub use batch::{batch_iterator, split_dataset, BatchIterator};
pub use generators::{gen_blobs, gen_sine_regression, gen_sine_regression_with, SineConfig};
pub use idx::{load_idx, load_idx_pair, read_idx, write_idx, IdxArray};
pub use task::{sample_task, ArchChoices, DatasetSpec, Task, TaskDistribution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targets of a dataset: class indices or real-valued responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Class(Vec<usize>),
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Class(v) => Labels::Class(idx.iter().map(|&i| v[i]).collect()),
            Labels::Real(v) => Labels::Real(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// An in-memory dataset `{(x_i, y_i)}`; inputs are stored row-major, one row
/// of `input_shape.iter().product()` values per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub input_shape: Vec<usize>,
    pub labels: Labels,
    /// 0 for regression.
    pub num_classes: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        input_shape: Vec<usize>,
        labels: Labels,
        num_classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let row: usize = input_shape.iter().product();
        if row == 0 {
            return Err(Error::contract("input shape must have positive dims"));
        }
        if inputs.len() != row * labels.len() {
            return Err(Error::contract(format!(
                "{} input values do not match {} labels of size {row}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Labels::Class(v) = &labels {
            if let Some(&bad) = v.iter().find(|&&y| y >= num_classes) {
                return Err(Error::contract(format!(
                    "label {bad} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(Dataset {
            inputs,
            input_shape,
            labels,
            num_classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let r = self.row_len();
        &self.inputs[i * r..(i + 1) * r]
    }

    pub fn is_regression(&self) -> bool {
        matches!(self.labels, Labels::Real(_))
    }

    /// Subset by index, keeping order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(idx.len() * self.row_len());
        for &i in idx {
            inputs.extend_from_slice(self.input(i));
        }
        Dataset {
            inputs,
            input_shape: self.input_shape.clone(),
            labels: self.labels.select(idx),
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
        }
    }

    /// The whole dataset as one batch (`|B| = n`).
    pub fn full_batch(&self) -> DataBatch {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx, self.len())
    }

    /// Batch of the given indices, scaled for a dataset of size `dataset_size_n`.
    pub fn batch(&self, idx: &[usize], dataset_size_n: usize) -> DataBatch {
        let sub = self.subset(idx);
        DataBatch {
            inputs: sub.inputs,
            input_shape: sub.input_shape,
            labels: sub.labels,
            dataset_size_n,
            indices: idx.to_vec(),
        }
    }
}

/// A minibatch `B` together with the size `n` of the dataset it was drawn
/// from, which fixes the `n/|B|` likelihood scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    pub inputs: Vec<f64>,
    pub input_shape: Vec<usize>,
    pub labels: Labels,
    pub dataset_size_n: usize,
    /// Positions of the batch rows in the source split.
    pub indices: Vec<usize>,
}

impl DataBatch {
    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    pub fn row_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn scale(&self) -> f64 {
        self.dataset_size_n as f64 / self.batch_size() as f64
    }
}
