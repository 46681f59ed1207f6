use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Labels};
use crate::error::{Error, Result};
use crate::rng::{substream, tag};

/// Class-conditional unit-variance Gaussian clusters.
///
/// Class `k` is centred at `(separation/2)·s·e_{⌊k/2⌋}` with `s = +1` for even
/// `k` and `−1` for odd `k`, so two classes sit `separation` apart along the
/// first axis. When `num_classes > 2·dim` the remaining centres are random unit
/// directions scaled by `separation/2`. Labels cycle `0, 1, …` before
/// shuffling, which balances classes to within one example.
pub fn gen_blobs(
    num_classes: usize,
    n: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 || n < num_classes {
        return Err(Error::config("blobs need n ≥ num_classes ≥ 1 and dim ≥ 1"));
    }
    let mut rng = substream(seed, &[tag::DATA]);
    let half = separation / 2.0;
    let mut centers = vec![0.0; num_classes * dim];
    for k in 0..num_classes {
        let c = &mut centers[k * dim..(k + 1) * dim];
        if k < 2 * dim {
            c[k / 2] = if k % 2 == 0 { half } else { -half };
        } else {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci = half * vi / norm;
            }
        }
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let mut inputs = Vec::with_capacity(n * dim);
    for &y in &labels {
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            inputs.push(centers[y * dim + j] + z);
        }
    }
    Dataset::new(
        inputs,
        vec![dim],
        Labels::Class(labels),
        num_classes,
        format!("blobs(k={num_classes},d={dim},sep={separation})"),
    )
}

/// Noiseless `y = sin(x)` regression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineConfig {
    pub n: usize,
    /// Closed intervals the inputs are drawn from, uniformly by total length.
    pub intervals: Vec<(f64, f64)>,
}

impl Default for SineConfig {
    fn default() -> Self {
        SineConfig {
            n: 1000,
            intervals: vec![(-5.0, 1.0), (1.0, 4.0)],
        }
    }
}

pub fn gen_sine_regression(seed: u64) -> Result<Dataset> {
    gen_sine_regression_with(&SineConfig::default(), seed)
}

pub fn gen_sine_regression_with(cfg: &SineConfig, seed: u64) -> Result<Dataset> {
    if cfg.n == 0 || cfg.intervals.is_empty() || cfg.intervals.iter().any(|(a, b)| !(b > a)) {
        return Err(Error::config(
            "sine data needs n > 0 and non-empty intervals",
        ));
    }
    let total: f64 = cfg.intervals.iter().map(|(a, b)| b - a).sum();
    let mut rng = substream(seed, &[tag::DATA]);
    let mut xs = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut u = rng.random::<f64>() * total;
        let mut x = cfg.intervals[cfg.intervals.len() - 1].1;
        for &(a, b) in &cfg.intervals {
            if u < b - a {
                x = a + u;
                break;
            }
            u -= b - a;
        }
        xs.push(x);
    }
    let ys = xs.iter().map(|x| x.sin()).collect();
    Dataset::new(xs, vec![1], Labels::Real(ys), 0, "sine")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = gen_blobs(3, 100, 2, 4.0, 11).unwrap();
        let b = gen_blobs(3, 100, 2, 4.0, 11).unwrap();
        assert_eq!(a, b);
        let Labels::Class(y) = &a.labels else {
            panic!()
        };
        let counts: Vec<usize> = (0..3)
            .map(|k| y.iter().filter(|&&v| v == k).count())
            .collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn zero_separation_makes_classes_indistinguishable() {
        // With every centre at the origin, the class-0 and class-1 sample
        // means agree up to sampling noise.
        let ds = gen_blobs(2, 4000, 1, 0.0, 2).unwrap();
        let Labels::Class(y) = &ds.labels else {
            panic!()
        };
        let mean = |k| {
            let v: Vec<f64> = y
                .iter()
                .zip(&ds.inputs)
                .filter(|(l, _)| **l == k)
                .map(|(_, x)| *x)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(0) - mean(1)).abs() < 0.15);
    }

    #[test]
    fn sine_inputs_stay_in_intervals() {
        let ds = gen_sine_regression(4).unwrap();
        assert_eq!(ds.len(), 1000);
        let Labels::Real(y) = &ds.labels else {
            panic!()
        };
        for (x, yv) in ds.inputs.iter().zip(y) {
            assert!((-5.0..=4.0).contains(x));
            assert_eq!(*yv - x.sin(), 0.0);
        }
        let gap = SineConfig {
            n: 500,
            intervals: vec![(-5.0, -1.0), (1.0, 4.0)],
        };
        let ds = gen_sine_regression_with(&gap, 1).unwrap();
        assert!(ds.inputs.iter().all(|x| !(-1.0 < *x && *x < 1.0)));
    }
}
