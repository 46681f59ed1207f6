//! Antithetic evolution-strategies gradient estimation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_key, normal_vec, substream, tag};

/// Outcome of one inner-loop rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutLoss {
    pub loss: f64,
    /// The chain diverged and `loss` is the penalty value.
    pub diverged: bool,
}

impl RolloutLoss {
    pub fn ok(loss: f64) -> Self {
        RolloutLoss {
            loss,
            diverged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub plus: RolloutLoss,
    pub minus: RolloutLoss,
    /// Both rollouts diverged; the pair contributed nothing.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsEstimate {
    pub grad: Vec<f64>,
    pub pairs: Vec<PairOutcome>,
}

impl EsEstimate {
    /// `(L(φ+η) + L(φ−η))/2` averaged over pairs.
    pub fn mean_loss(&self) -> f64 {
        self.pairs
            .iter()
            .map(|p| 0.5 * (p.plus.loss + p.minus.loss))
            .sum::<f64>()
            / self.pairs.len() as f64
    }

    pub fn all_skipped(&self) -> bool {
        self.pairs.iter().all(|p| p.skipped)
    }
}

/// `η ~ N(0, σ²I)` for pair `pair` of outer iteration `iter`.
pub fn perturbation(seed: u64, iter: u64, pair: u64, sigma: f64, dim: usize) -> Vec<f64> {
    normal_vec(
        &mut substream(seed, &[tag::PERTURB, iter, pair]),
        dim,
        sigma,
    )
}

/// Seed shared by both rollouts of a pair. The sign is deliberately not
/// part of it, so the `+η` and `−η` rollouts see the same task draws,
/// initial state, minibatch order and sampler noise.
pub fn rollout_seed(seed: u64, iter: u64, pair: u64) -> u64 {
    derive_key(seed, &[tag::ROLLOUT, iter, pair])
}

/// `ĝ = (1/N) Σ_i [(L(φ+η_i) − L(φ−η_i)) / (2σ²)] η_i`.
///
/// `loss(φ', rollout_seed)` evaluates one rollout. Pairs (and the two sides
/// of a pair) run on the rayon pool; results are combined in pair order so
/// the estimate does not depend on scheduling. A pair whose rollouts both
/// diverged contributes zero and is marked as skipped; the average still
/// divides by `N`.
pub fn es_gradient<F>(
    phi: &[f64],
    sigma: f64,
    pairs: usize,
    seed: u64,
    iter: u64,
    loss: F,
) -> Result<EsEstimate>
where
    F: Fn(&[f64], u64) -> Result<RolloutLoss> + Sync,
{
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::config("ES sigma must be positive"));
    }
    if pairs == 0 {
        return Err(Error::config("ES needs at least one antithetic pair"));
    }
    let d = phi.len();
    let run_pair = |i: usize| -> Result<(Vec<f64>, PairOutcome)> {
        let eta = perturbation(seed, iter, i as u64, sigma, d);
        let rs = rollout_seed(seed, iter, i as u64);
        let plus: Vec<f64> = phi.iter().zip(&eta).map(|(p, e)| p + e).collect();
        let minus: Vec<f64> = phi.iter().zip(&eta).map(|(p, e)| p - e).collect();
        let (lp, lm) = rayon::join(|| loss(&plus, rs), || loss(&minus, rs));
        let (lp, lm) = (lp?, lm?);
        let skipped = lp.diverged && lm.diverged;
        Ok((
            eta,
            PairOutcome {
                plus: lp,
                minus: lm,
                skipped,
            },
        ))
    };
    let results: Vec<(Vec<f64>, PairOutcome)> = if pairs == 1 {
        vec![run_pair(0)?]
    } else {
        (0..pairs)
            .into_par_iter()
            .map(run_pair)
            .collect::<Result<_>>()?
    };
    let mut grad = vec![0.0; d];
    let scale = 1.0 / (2.0 * sigma * sigma * pairs as f64);
    for (eta, o) in &results {
        if o.skipped {
            continue;
        }
        let w = (o.plus.loss - o.minus.loss) * scale;
        for (g, e) in grad.iter_mut().zip(eta) {
            *g += w * e;
        }
    }
    Ok(EsEstimate {
        grad,
        pairs: results.into_iter().map(|(_, o)| o).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_gives_zero() {
        let phi = vec![0.3, -1.2, 2.0];
        for s in 0..20 {
            let e = es_gradient(&phi, 0.01, 3, s, 0, |_, _| Ok(RolloutLoss::ok(4.2))).unwrap();
            assert!(e.grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn single_pair_quadratic_closed_form() {
        let phi = vec![0.5, -0.25];
        let sigma = 0.1;
        let e = es_gradient(&phi, sigma, 1, 9, 3, |p, _| {
            Ok(RolloutLoss::ok(p.iter().map(|x| x * x).sum()))
        })
        .unwrap();
        let eta = perturbation(9, 3, 0, sigma, 2);
        let dot: f64 = phi.iter().zip(&eta).map(|(a, b)| a * b).sum();
        for (g, e) in e.grad.iter().zip(&eta) {
            let want = 2.0 * dot / (sigma * sigma) * e;
            assert!((g - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn pair_shares_rollout_seed() {
        let seen = std::sync::Mutex::new(Vec::new());
        es_gradient(&[0.0; 4], 0.01, 1, 5, 7, |_, s| {
            seen.lock().unwrap().push(s);
            Ok(RolloutLoss::ok(0.0))
        })
        .unwrap();
        let v = seen.into_inner().unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0], v[1]);
    }

    #[test]
    fn both_diverged_pair_is_skipped() {
        let e = es_gradient(&[1.0; 3], 0.01, 2, 1, 0, |p, _| {
            Ok(RolloutLoss {
                loss: p[0],
                diverged: true,
            })
        })
        .unwrap();
        assert!(e.all_skipped());
        assert!(e.grad.iter().all(|&g| g == 0.0));
    }
}
