use rand::seq::SliceRandom;

use super::{DataBatch, Dataset};
use crate::error::{Error, Result};
use crate::rng::{substream, tag};

/// Shuffled disjoint split into `(train, val)` with `round(n·val_fraction)`
/// validation examples.
pub fn split_dataset(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::config("val_fraction must lie in (0, 1)"));
    }
    let n = ds.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::config(format!(
            "split of {n} examples at fraction {val_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, &[tag::SPLIT]));
    let (val_idx, train_idx) = idx.split_at(n_val);
    Ok((ds.subset(train_idx), ds.subset(val_idx)))
}

/// Endless minibatch stream: each epoch is a fresh permutation, cut into
/// `⌊n / batch_size⌋` batches (a trailing partial batch is dropped).
#[derive(Debug, Clone)]
pub struct BatchIterator<'a> {
    data: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    position: usize,
    order: Vec<usize>,
}

pub fn batch_iterator(split: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIterator<'_>> {
    if batch_size == 0 || batch_size > split.len() {
        return Err(Error::config(format!(
            "batch size {batch_size} must be in 1..={}",
            split.len()
        )));
    }
    let mut it = BatchIterator {
        data: split,
        batch_size,
        seed,
        epoch: 0,
        position: 0,
        order: Vec::new(),
    };
    it.shuffle();
    Ok(it)
}

impl BatchIterator<'_> {
    fn shuffle(&mut self) {
        self.order = (0..self.data.len()).collect();
        self.order
            .shuffle(&mut substream(self.seed, &[tag::BATCH, self.epoch]));
        self.position = 0;
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len() / self.batch_size
    }

    pub fn dataset_len(&self) -> usize {
        self.data.len()
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self) -> DataBatch {
        if self.position + self.batch_size > self.order.len() {
            self.epoch += 1;
            self.shuffle();
        }
        let idx = &self.order[self.position..self.position + self.batch_size];
        self.position += self.batch_size;
        self.data.batch(idx, self.data.len())
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = DataBatch;

    fn next(&mut self) -> Option<DataBatch> {
        Some(self.next_batch())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Labels;

    fn toy(n: usize) -> Dataset {
        Dataset::new(
            (0..n).map(|i| i as f64).collect(),
            vec![1],
            Labels::Class(vec![0; n]),
            1,
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = toy(10);
        let (tr, va) = split_dataset(&ds, 0.2, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        let mut all: Vec<f64> = tr.inputs.iter().chain(&va.inputs).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.inputs);
        let (tr2, _) = split_dataset(&ds, 0.2, 3).unwrap();
        assert_eq!(tr, tr2);
        assert!(split_dataset(&toy(3), 0.01, 0).is_err());
        assert!(split_dataset(&ds, 1.0, 0).is_err());
    }

    #[test]
    fn batch_larger_than_data_rejected() {
        assert!(batch_iterator(&toy(100), 128, 0).is_err());
    }

    #[test]
    fn epoch_covers_each_index_once() {
        let ds = toy(100);
        let mut it = batch_iterator(&ds, 20, 5).unwrap();
        let mut seen: Vec<usize> = (0..5).flat_map(|_| it.next_batch().indices).collect();
        seen.sort();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        let b = it.next_batch();
        assert_eq!(it.epoch(), 1);
        assert!((b.scale() - 5.0).abs() == 0.0);
    }

    #[test]
    fn batch_order_is_deterministic() {
        let ds = toy(50);
        let a: Vec<_> = batch_iterator(&ds, 7, 9)
            .unwrap()
            .take(20)
            .map(|b| b.indices)
            .collect();
        let b: Vec<_> = batch_iterator(&ds, 7, 9)
            .unwrap()
            .take(20)
            .map(|b| b.indices)
            .collect();
        assert_eq!(a, b);
    }
}
