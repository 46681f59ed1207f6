//! Bayesian model averaging and predictive-quality metrics.
//!
//! Argmax ties always resolve to the lowest class index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::sampler::SampleSet;

/// Probabilities below this are clamped before taking logarithms in `nll`.
pub const NLL_CLAMP: f64 = 1e-300;
/// Clamp used by the pairwise member divergence.
pub const KLD_CLAMP: f64 = 1e-12;

/// Row-major `rows × classes` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictive {
    pub rows: usize,
    pub classes: usize,
    pub probs: Vec<f64>,
}

impl Predictive {
    pub fn new(rows: usize, classes: usize, probs: Vec<f64>) -> Result<Self> {
        if classes == 0 || probs.len() != rows * classes {
            return Err(Error::contract("probability matrix shape mismatch"));
        }
        Ok(Predictive {
            rows,
            classes,
            probs,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    /// Checks every row is a distribution (entries in [0,1], sum 1 ± `tol`).
    pub fn validate(&self, tol: f64) -> Result<()> {
        for i in 0..self.rows {
            let row = self.row(i);
            if row.iter().any(|p| !(*p >= -tol && *p <= 1.0 + tol)) {
                return Err(Error::contract(format!(
                    "row {i} has entries outside [0,1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::contract(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// Lowest index of the row maximum.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    pub fn confidence(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Element-wise mean of members.
    pub fn average(members: &[Predictive]) -> Result<Predictive> {
        let first = members
            .first()
            .ok_or_else(|| Error::contract("need at least one member"))?;
        if members
            .iter()
            .any(|m| m.rows != first.rows || m.classes != first.classes)
        {
            return Err(Error::contract("members differ in shape"));
        }
        let inv = 1.0 / members.len() as f64;
        let mut probs = vec![0.0; first.probs.len()];
        for m in members {
            for (a, p) in probs.iter_mut().zip(&m.probs) {
                *a += p;
            }
        }
        probs.iter_mut().for_each(|p| *p *= inv);
        Predictive::new(first.rows, first.classes, probs)
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// A value together with a warning flag (clamping, degeneracy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged<T> {
    pub value: T,
    pub flagged: bool,
}

/// Predictive of every snapshot, `p(y | x, θ_k)`.
pub fn member_predictives(
    samples: &SampleSet,
    model: &EnergyModel,
    inputs: &[f64],
    rows: usize,
) -> Result<Vec<Predictive>> {
    samples
        .snapshots
        .iter()
        .map(|s| {
            let p = model.predict_proba(&s.values, inputs, rows)?;
            Predictive::new(rows, model.arch.outputs, p)
        })
        .collect()
}

/// `(1/K) Σ_k softmax(f(x; θ_k))`.
pub fn bma_predict(
    samples: &SampleSet,
    model: &EnergyModel,
    inputs: &[f64],
    rows: usize,
) -> Result<Predictive> {
    if samples.is_empty() {
        return Err(Error::contract("BMA needs at least one sample"));
    }
    Predictive::average(&member_predictives(samples, model, inputs, rows)?)
}

fn check_labels(pred: &Predictive, labels: &[usize]) -> Result<()> {
    if labels.len() != pred.rows {
        return Err(Error::contract("label count differs from prediction rows"));
    }
    if labels.iter().any(|&y| y >= pred.classes) {
        return Err(Error::contract("label out of range"));
    }
    Ok(())
}

pub fn accuracy(pred: &Predictive, labels: &[usize]) -> Result<f64> {
    check_labels(pred, labels)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(i, &y)| pred.argmax(*i) == y)
        .count();
    Ok(hits as f64 / pred.rows as f64)
}

/// Mean `−log p(y|x)`; `flagged` when any probability was clamped.
pub fn nll(pred: &Predictive, labels: &[usize]) -> Result<Flagged<f64>> {
    check_labels(pred, labels)?;
    let mut clamped = false;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = pred.row(i)[y];
            if p < NLL_CLAMP {
                clamped = true;
            }
            -p.max(NLL_CLAMP).ln()
        })
        .sum();
    Ok(Flagged {
        value: total / pred.rows as f64,
        flagged: clamped,
    })
}

/// Expected calibration error over `n_bins` equal-width confidence bins
/// `(b/n, (b+1)/n]` (a confidence of exactly 0 falls in the first bin).
pub fn ece(pred: &Predictive, labels: &[usize], n_bins: usize) -> Result<f64> {
    check_labels(pred, labels)?;
    if n_bins == 0 {
        return Err(Error::contract("need at least one bin"));
    }
    let mut count = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    for (i, &y) in labels.iter().enumerate() {
        let c = pred.confidence(i);
        let b = ((c * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
        count[b] += 1;
        conf_sum[b] += c;
        if pred.argmax(i) == y {
            correct[b] += 1;
        }
    }
    let n = pred.rows as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (correct[b] as f64 / nb - conf_sum[b] / nb).abs()
        })
        .sum())
}

/// Mean over data of `1/(K(K−1)) Σ_{i≠j} p_i log(p_i / p_j)` where `p_k` is
/// member `k`'s probability of the labelled class. This is a true-class
/// statistic, not the full-distribution KL divergence between members.
pub fn pairwise_kld(members: &[Predictive], labels: &[usize]) -> Result<f64> {
    let k = members.len();
    if k < 2 {
        return Err(Error::contract(
            "pairwise divergence needs at least two members",
        ));
    }
    for m in members {
        check_labels(m, labels)?;
    }
    let norm = 1.0 / (k * (k - 1)) as f64;
    let mut total = 0.0;
    let mut p = vec![0.0; k];
    for (n, &y) in labels.iter().enumerate() {
        for (pk, m) in p.iter_mut().zip(members) {
            *pk = m.row(n)[y].max(KLD_CLAMP);
        }
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    s += p[i] * (p[i] / p[j]).ln();
                }
            }
        }
        total += norm * s;
    }
    Ok(total / labels.len() as f64)
}

fn same_shape(a: &Predictive, b: &Predictive) -> Result<()> {
    if a.rows != b.rows || a.classes != b.classes {
        return Err(Error::contract(format!(
            "predictive shapes differ: {}×{} vs {}×{}",
            a.rows, a.classes, b.rows, b.classes
        )));
    }
    Ok(())
}

/// Fraction of points whose top-1 classes agree.
pub fn agreement(pred: &Predictive, reference: &Predictive) -> Result<f64> {
    same_shape(pred, reference)?;
    let hits = (0..pred.rows)
        .filter(|&i| pred.argmax(i) == reference.argmax(i))
        .count();
    Ok(hits as f64 / pred.rows as f64)
}

/// Mean over points of `½ Σ_k |p_k − q_k|`.
pub fn total_variation(pred: &Predictive, reference: &Predictive) -> Result<f64> {
    same_shape(pred, reference)?;
    let total: f64 = (0..pred.rows)
        .map(|i| {
            0.5 * pred
                .row(i)
                .iter()
                .zip(reference.row(i))
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(total / pred.rows as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(rows: &[&[f64]]) -> Predictive {
        let c = rows[0].len();
        Predictive::new(rows.len(), c, rows.concat()).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        let a = p(&[&[0.9, 0.1], &[0.2, 0.8]]);
        assert_eq!(accuracy(&a, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&a, &[0, 0]).unwrap(), 0.5);
        let u = p(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(accuracy(&u, &[0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn nll_cases() {
        assert_eq!(nll(&p(&[&[1.0, 0.0]]), &[0]).unwrap().value, 0.0);
        let u = p(&[&[0.25; 4]]);
        assert!((nll(&u, &[2]).unwrap().value - 4f64.ln()).abs() < 1e-15);
        let v = nll(&p(&[&[0.7, 0.3]]), &[0]).unwrap().value;
        assert!((v - 0.356675).abs() < 1e-6);
        let z = nll(&p(&[&[1.0, 0.0]]), &[1]).unwrap();
        assert!(z.flagged);
        assert!((z.value - 1e-300f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn ece_cases() {
        assert_eq!(
            ece(&p(&[&[1.0, 0.0], &[0.0, 1.0]]), &[0, 1], 15).unwrap(),
            0.0
        );
        let e = ece(&p(&[&[0.8, 0.2]]), &[0], 15).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
        assert!(ece(&p(&[&[0.8, 0.2]]), &[0], 0).is_err());
    }

    #[test]
    fn kld_cases() {
        let a = p(&[&[0.8, 0.2]]);
        let b = p(&[&[0.4, 0.6]]);
        let v = pairwise_kld(&[a.clone(), b], &[0]).unwrap();
        assert!((v - 0.2 * 2f64.ln()).abs() < 1e-15);
        assert!((v - 0.138629).abs() < 1e-6);
        assert_eq!(pairwise_kld(&[a.clone(), a.clone()], &[0]).unwrap(), 0.0);
        assert!(pairwise_kld(&[a], &[0]).is_err());
    }

    #[test]
    fn agreement_and_tv_cases() {
        let a = p(&[&[1.0, 0.0]]);
        let b = p(&[&[0.0, 1.0]]);
        let h = p(&[&[0.5, 0.5]]);
        assert_eq!(agreement(&a, &a).unwrap(), 1.0);
        assert_eq!(agreement(&a, &b).unwrap(), 0.0);
        assert_eq!(total_variation(&a, &a).unwrap(), 0.0);
        assert_eq!(total_variation(&a, &b).unwrap(), 1.0);
        assert_eq!(total_variation(&h, &a).unwrap(), 0.5);
        assert_eq!(Predictive::average(&[a, b]).unwrap(), h);
    }
}
