//! Effective sample size and potential scale reduction.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use super::predictive::Flagged;
use crate::error::{Error, Result};

/// Traces shorter than this are rejected by `ess`.
pub const MIN_ESS_LEN: usize = 10;

/// Normalized autocorrelation `ρ_0..ρ_{S−1}` via zero-padded FFT.
/// Returns `None` for a constant trace.
pub fn autocorrelation(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat_n(Complex::new(0.0, 0.0), m - n))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if !(c0 > 1e-24 * scale * scale * n as f64 * m as f64) {
        return None;
    }
    Some(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// Geyer initial-positive-sequence ESS, capped at the trace length.
/// A constant trace returns `S` with the degeneracy flag set.
pub fn ess(x: &[f64]) -> Result<Flagged<f64>> {
    let s = x.len();
    if s < MIN_ESS_LEN {
        return Err(Error::contract(format!(
            "ESS needs at least {MIN_ESS_LEN} draws, got {s}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("trace contains non-finite values"));
    }
    let Some(rho) = autocorrelation(x) else {
        return Ok(Flagged {
            value: s as f64,
            flagged: true,
        });
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < s {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (-1.0 + 2.0 * sum).max(1e-12);
    Ok(Flagged {
        value: (s as f64 / tau).min(s as f64),
        flagged: false,
    })
}

/// Classical split-R̂ over the chains in `chains` (each split into `splits`
/// contiguous pieces; leading draws that do not divide evenly are dropped).
/// Degenerate input (zero within-chain variance) gives NaN with the flag set.
pub fn split_rhat(chains: &[&[f64]], splits: usize) -> Result<Flagged<f64>> {
    let pieces = split_pieces(chains, splits)?;
    Ok(rhat_of_pieces(&pieces))
}

/// Split-R̂ after pooled rank normalization `Φ⁻¹((r − 3/8)/(S + 1/4))`.
pub fn rank_normalized_rhat(chains: &[&[f64]], splits: usize) -> Result<Flagged<f64>> {
    let pieces = split_pieces(chains, splits)?;
    let lens: Vec<usize> = pieces.iter().map(|p| p.len()).collect();
    let pooled: Vec<f64> = pieces.concat();
    let z = rank_normalize(&pooled);
    let mut out = Vec::with_capacity(pieces.len());
    let mut at = 0;
    for l in lens {
        out.push(z[at..at + l].to_vec());
        at += l;
    }
    Ok(rhat_of_pieces(&out))
}

/// Average ranks (ties share the mean rank), mapped through the normal quantile.
pub fn rank_normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    ranks
        .iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (n as f64 + 0.25)))
        .collect()
}

fn split_pieces(chains: &[&[f64]], splits: usize) -> Result<Vec<Vec<f64>>> {
    if chains.is_empty() || splits == 0 {
        return Err(Error::contract(
            "R-hat needs at least one chain and one split",
        ));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::contract("chains differ in length"));
    }
    let n = len / splits;
    if n < 2 || chains.len() * splits < 2 {
        return Err(Error::contract(
            "R-hat needs at least two pieces of length two",
        ));
    }
    let skip = len - n * splits;
    Ok(chains
        .iter()
        .flat_map(|c| (0..splits).map(move |k| c[skip + k * n..skip + (k + 1) * n].to_vec()))
        .collect())
}

fn rhat_of_pieces(pieces: &[Vec<f64>]) -> Flagged<f64> {
    let m = pieces.len() as f64;
    let n = pieces[0].len() as f64;
    let means: Vec<f64> = pieces.iter().map(|p| p.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return Flagged {
            value: f64::NAN,
            flagged: true,
        };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Flagged {
        value: (var_plus / w).sqrt(),
        flagged: false,
    }
}
