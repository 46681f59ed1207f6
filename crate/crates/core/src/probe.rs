//! Mode-separation probes: losses along linear paths between parameter
//! vectors and cosine similarity between snapshots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{DataBatch, Labels};
use crate::diagnostics::argmax;
use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::sampler::SampleSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub loss: f64,
    /// Classification error in percent; `None` for regression.
    pub error_percent: Option<f64>,
}

/// Evaluates `eval` at `θ(t) = (1−t)θ_a + tθ_b` on a uniform grid of
/// `num_points` values including both ends. The end points are passed
/// through unchanged, so they match a direct evaluation bit for bit.
pub fn linear_path_with<F>(
    theta_a: &[f64],
    theta_b: &[f64],
    num_points: usize,
    mut eval: F,
) -> Result<Vec<PathPoint>>
where
    F: FnMut(&[f64]) -> Result<(f64, Option<f64>)>,
{
    if num_points < 2 {
        return Err(Error::contract("a path needs at least two points"));
    }
    if theta_a.len() != theta_b.len() {
        return Err(Error::contract("path end points differ in dimension"));
    }
    let last = num_points - 1;
    let mut theta = vec![0.0; theta_a.len()];
    (0..num_points)
        .map(|k| {
            let t = k as f64 / last as f64;
            let (loss, error_percent) = if k == 0 {
                eval(theta_a)?
            } else if k == last {
                eval(theta_b)?
            } else {
                for ((v, a), b) in theta.iter_mut().zip(theta_a).zip(theta_b) {
                    *v = (1.0 - t) * a + t * b;
                }
                eval(&theta)?
            };
            Ok(PathPoint {
                t,
                loss,
                error_percent,
            })
        })
        .collect()
}

/// Mean negative log-likelihood and error rate of `θ` on `batch`.
pub fn evaluate(
    model: &EnergyModel,
    theta: &[f64],
    batch: &DataBatch,
) -> Result<(f64, Option<f64>)> {
    let ll = model.log_likelihoods(theta, batch)?;
    let loss = -ll.iter().sum::<f64>() / ll.len() as f64;
    let err = match &batch.labels {
        Labels::Class(y) => {
            let out = model.forward_batch(theta, batch)?;
            let k = model.arch.outputs;
            let wrong = out
                .chunks_exact(k)
                .zip(y)
                .filter(|(row, &yi)| argmax(row) != yi)
                .count();
            Some(100.0 * wrong as f64 / y.len() as f64)
        }
        Labels::Real(_) => None,
    };
    Ok((loss, err))
}

/// Test loss and error along the segment between two parameter vectors.
pub fn linear_path_losses(
    model: &EnergyModel,
    theta_a: &[f64],
    theta_b: &[f64],
    num_points: usize,
    eval: &DataBatch,
) -> Result<Vec<PathPoint>> {
    linear_path_with(theta_a, theta_b, num_points, |th| evaluate(model, th, eval))
}

/// Highest interior loss minus the higher end-point loss.
pub fn barrier(path: &[PathPoint]) -> f64 {
    if path.len() < 3 {
        return 0.0;
    }
    let ends = path[0].loss.max(path[path.len() - 1].loss);
    let interior = path[1..path.len() - 1]
        .iter()
        .map(|p| p.loss)
        .fold(f64::NEG_INFINITY, f64::max);
    interior - ends
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineMatrix {
    pub size: usize,
    pub values: Vec<f64>,
    /// Snapshots with zero norm; their off-diagonal entries are 0.
    pub zero_norm: Vec<usize>,
}

impl CosineMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }
}

/// Cosine similarity between every pair of snapshots.
pub fn pairwise_cosine(samples: &SampleSet) -> Result<CosineMatrix> {
    cosine_of(&samples.values())
}

pub fn cosine_of(vectors: &[&[f64]]) -> Result<CosineMatrix> {
    let k = vectors.len();
    if k == 0 {
        return Err(Error::contract("need at least one snapshot"));
    }
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let zero_norm: Vec<usize> = (0..k).filter(|&i| norms[i] == 0.0).collect();
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        values[i * k + i] = 1.0;
        for j in i + 1..k {
            let c = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = vectors[i].iter().zip(vectors[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[i * k + j] = c;
            values[j * k + i] = c;
        }
    }
    Ok(CosineMatrix {
        size: k,
        values,
        zero_norm,
    })
}

/// Writes `pair_id,t,loss,error_percent` rows; regression error is empty.
pub fn write_path_csv<W: Write>(out: &mut W, paths: &[(usize, Vec<PathPoint>)]) -> Result<()> {
    writeln!(out, "pair_id,t,loss,error_percent")?;
    for (id, path) in paths {
        for p in path {
            let err = p.error_percent.map(|e| e.to_string()).unwrap_or_default();
            writeln!(out, "{id},{},{},{err}", p.t, p.loss)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(th: &[f64]) -> Result<(f64, Option<f64>)> {
        Ok((th.iter().map(|x| (x - 0.3) * (x - 0.3)).sum(), None))
    }

    #[test]
    fn endpoints_exact() {
        let a = [0.1, -2.0, 0.7];
        let b = [1.3, 0.4, -0.9];
        let p = linear_path_with(&a, &b, 11, quad).unwrap();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0].t, 0.0);
        assert_eq!(p[10].t, 1.0);
        assert_eq!(p[0].loss.to_bits(), quad(&a).unwrap().0.to_bits());
        assert_eq!(p[10].loss.to_bits(), quad(&b).unwrap().0.to_bits());
    }

    #[test]
    fn convex_interior_below_chord() {
        let a = [2.0, -1.0];
        let b = [-1.5, 3.0];
        let p = linear_path_with(&a, &b, 21, quad).unwrap();
        let (la, lb) = (p[0].loss, p[20].loss);
        for q in &p {
            assert!(q.loss <= (1.0 - q.t) * la + q.t * lb + 1e-12);
        }
        assert!(barrier(&p) <= 0.0);
    }

    #[test]
    fn same_endpoints_constant() {
        let a = [0.5, 0.25];
        let p = linear_path_with(&a, &a, 5, quad).unwrap();
        assert!(p.iter().all(|q| q.loss == p[0].loss));
        assert!(linear_path_with(&a, &a, 1, quad).is_err());
    }

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 4.0, 6.0];
        let o = [-2.0, 1.0, 0.0];
        let z = [0.0, 0.0, 0.0];
        let m = cosine_of(&[&a, &a]).unwrap();
        assert!(m.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((cosine_of(&[&a, &b]).unwrap().get(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_of(&[&a, &o]).unwrap().get(1, 0), 0.0);
        let m = cosine_of(&[&a, &z, &b]).unwrap();
        assert_eq!(m.zero_norm, vec![1]);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(2, 1), 0.0);
    }
}
