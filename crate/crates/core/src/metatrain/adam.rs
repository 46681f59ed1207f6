//! Outer-loop optimiser state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::MetaParams;

/// Adam state around the meta-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterState {
    pub meta: MetaParams,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OuterState {
    /// Fresh state with β1 = 0.9, β2 = 0.99 and ε = 1e-8.
    pub fn new(meta: MetaParams, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::config("learning rate must be positive"));
        }
        let n = meta.values.len();
        Ok(OuterState {
            meta,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        })
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(outer: &OuterState, grad: &[f64]) -> Result<OuterState> {
    if grad.len() != outer.meta.values.len() {
        return Err(Error::contract(
            "gradient and meta-parameters differ in length",
        ));
    }
    let mut next = outer.clone();
    next.step += 1;
    let t = next.step as i32;
    let c1 = 1.0 - outer.beta1.powi(t);
    let c2 = 1.0 - outer.beta2.powi(t);
    for i in 0..grad.len() {
        let g = grad[i];
        next.m[i] = outer.beta1 * outer.m[i] + (1.0 - outer.beta1) * g;
        next.v[i] = outer.beta2 * outer.v[i] + (1.0 - outer.beta2) * g * g;
        let mh = next.m[i] / c1;
        let vh = next.v[i] / c2;
        next.meta.values[i] -= outer.learning_rate * mh / (vh.sqrt() + outer.eps);
    }
    Ok(next)
}

/// Rescales `grad` to norm `max_norm` when it is longer.
pub fn clip_global_norm(grad: &[f64], max_norm: f64) -> Result<Vec<f64>> {
    if !(max_norm > 0.0) {
        return Err(Error::config("clip threshold must be positive"));
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        let mut out: Vec<f64> = grad.iter().map(|g| g * s).collect();
        // Guard against rounding pushing the norm a hair above the threshold.
        let n2 = out.iter().map(|g| g * g).sum::<f64>().sqrt();
        if n2 > max_norm {
            let s2 = max_norm / n2;
            out.iter_mut().for_each(|g| *g *= s2);
        }
        Ok(out)
    } else {
        Ok(grad.to_vec())
    }
}
