use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{FeatureMatrix, FeatureNorm, COL_MOMENTUM, COL_THETA, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::rng::substream;

pub const HIDDEN: usize = 32;

/// Offsets of the flat meta-parameter vector, in storage order:
/// trunk weight `[32, 9]` row-major, trunk bias `[32]`, α-head weight `[32]`,
/// α-head bias, β-head weight `[32]`, β-head bias.
pub const TRUNK_W: usize = 0;
pub const TRUNK_B: usize = TRUNK_W + HIDDEN * NUM_FEATURES;
pub const ALPHA_W: usize = TRUNK_B + HIDDEN;
pub const ALPHA_B: usize = ALPHA_W + HIDDEN;
pub const BETA_W: usize = ALPHA_B + 1;
pub const BETA_B: usize = BETA_W + HIDDEN;
pub const META_PARAM_COUNT: usize = BETA_B + 1;

/// Weights of the learned sampler: a shared ReLU trunk `9 → 32` and two linear
/// heads `32 → 1` producing `α_φ` and `β_φ` for each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaParams {
    pub values: Vec<f64>,
    pub norm: FeatureNorm,
}

impl MetaParams {
    pub fn zeros(norm: FeatureNorm) -> Self {
        MetaParams {
            values: vec![0.0; META_PARAM_COUNT],
            norm,
        }
    }

    pub fn from_values(values: Vec<f64>, norm: FeatureNorm) -> Result<Self> {
        if values.len() != META_PARAM_COUNT {
            return Err(Error::contract(format!(
                "meta parameters need {META_PARAM_COUNT} values, got {}",
                values.len()
            )));
        }
        Ok(MetaParams { values, norm })
    }

    /// Trunk units 0 and 1 compute `ReLU(±r)` from the momentum column and the
    /// β head takes their difference, so `β = r` (in normalised units) and
    /// `α = 0`. Without normalisation the learned sampler then reduces to
    /// SGHMC with unit mass.
    pub fn momentum_identity(norm: FeatureNorm) -> Self {
        let mut m = MetaParams::zeros(norm);
        m.values[TRUNK_W + COL_MOMENTUM] = 1.0;
        m.values[TRUNK_W + NUM_FEATURES + COL_MOMENTUM] = -1.0;
        m.values[BETA_W] = 1.0;
        m.values[BETA_W + 1] = -1.0;
        m
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        MetaParams {
            values,
            norm: self.norm,
        }
    }
}

/// Trunk weights ~ N(0, 2/9), trunk bias and both heads zero, so the
/// untrained sampler outputs `α = β = 0`.
pub fn init_meta_params(seed: u64, norm: FeatureNorm) -> MetaParams {
    let mut rng = substream(seed, &[0x6d65_7461]);
    let mut m = MetaParams::zeros(norm);
    let std = (2.0 / NUM_FEATURES as f64).sqrt();
    for v in &mut m.values[TRUNK_W..TRUNK_B] {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = std * z;
    }
    m
}

#[inline]
fn trunk(values: &[f64], x: &[f64], hidden: &mut [f64; HIDDEN]) {
    let w = &values[TRUNK_W..TRUNK_B];
    let b = &values[TRUNK_B..ALPHA_W];
    for (h, (row, bh)) in hidden.iter_mut().zip(w.chunks_exact(NUM_FEATURES).zip(b)) {
        let mut acc = *bh;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *h = acc;
    }
}

#[inline]
fn head(values: &[f64], w0: usize, b: usize, hidden: &[f64; HIDDEN]) -> f64 {
    let mut acc = values[b];
    for (w, h) in values[w0..w0 + HIDDEN].iter().zip(hidden) {
        if *h > 0.0 {
            acc += w * h;
        }
    }
    acc
}

/// `(α, β)` for every row of `features`; each row is processed independently.
pub fn eval_alpha_beta(meta: &MetaParams, features: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = Vec::with_capacity(features.rows);
    let mut beta = Vec::with_capacity(features.rows);
    let mut h = [0.0; HIDDEN];
    for x in features.data.chunks_exact(NUM_FEATURES) {
        trunk(&meta.values, x, &mut h);
        alpha.push(head(&meta.values, ALPHA_W, ALPHA_B, &h));
        beta.push(head(&meta.values, BETA_W, BETA_B, &h));
    }
    (alpha, beta)
}

/// β only; used for the position update.
pub fn eval_beta(meta: &MetaParams, features: &FeatureMatrix) -> Vec<f64> {
    let mut h = [0.0; HIDDEN];
    features
        .data
        .chunks_exact(NUM_FEATURES)
        .map(|x| {
            trunk(&meta.values, x, &mut h);
            head(&meta.values, BETA_W, BETA_B, &h)
        })
        .collect()
}

/// Mean function `f_φ` of the kinetic parameterisation (the α head) and its
/// derivative with respect to the raw parameter value of the same row,
/// obtained by backpropagating through the trunk. The other feature columns
/// and the column scale factors are held fixed.
pub fn eval_mean_and_slope(meta: &MetaParams, features: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let mut f = Vec::with_capacity(features.rows);
    let mut slope = Vec::with_capacity(features.rows);
    let mut h = [0.0; HIDDEN];
    let v = &meta.values;
    let theta_scale = features.scales[COL_THETA];
    for x in features.data.chunks_exact(NUM_FEATURES) {
        trunk(v, x, &mut h);
        f.push(head(v, ALPHA_W, ALPHA_B, &h));
        let mut ds = 0.0;
        for (k, hk) in h.iter().enumerate() {
            if *hk > 0.0 {
                ds += v[ALPHA_W + k] * v[TRUNK_W + k * NUM_FEATURES + COL_THETA];
            }
        }
        slope.push(ds * theta_scale);
    }
    (f, slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::features::{build_features, FeatureBank};

    #[test]
    fn parameter_count() {
        assert_eq!(META_PARAM_COUNT, 9 * 32 + 32 + 2 * (32 + 1));
        assert_eq!(META_PARAM_COUNT, 386);
    }

    #[test]
    fn zero_heads_give_zero_outputs() {
        let m = init_meta_params(3, FeatureNorm::Rms);
        assert_eq!(m, init_meta_params(3, FeatureNorm::Rms));
        let bank = FeatureBank::zeros(3);
        let f = build_features(
            &[1.0, -2.0, 0.5],
            &[0.3, 0.1, -1.0],
            &[2.0, 1.0, 0.0],
            &bank,
            FeatureNorm::Rms,
        )
        .unwrap();
        let (a, b) = eval_alpha_beta(&m, &f);
        assert!(a.iter().chain(&b).all(|&v| v == 0.0));
        let (a, b) = eval_alpha_beta(&MetaParams::zeros(FeatureNorm::Rms), &f);
        assert!(a.iter().chain(&b).all(|&v| v == 0.0));
    }

    #[test]
    fn identity_construction_reproduces_momentum() {
        let bank = FeatureBank::zeros(3);
        let r = [0.3, -0.7, 1.9];
        let f = build_features(
            &[1.0, 2.0, 3.0],
            &r,
            &[0.5, 0.5, -0.5],
            &bank,
            FeatureNorm::None,
        )
        .unwrap();
        let (a, b) = eval_alpha_beta(&MetaParams::momentum_identity(FeatureNorm::None), &f);
        assert_eq!(b, r.to_vec());
        assert!(a.iter().all(|&v| v == 0.0));

        // Normalised: β equals the normalised momentum r / RMS(r).
        let f = build_features(
            &[1.0, 2.0, 3.0],
            &r,
            &[0.5, 0.5, -0.5],
            &bank,
            FeatureNorm::Rms,
        )
        .unwrap();
        let (_, b) = eval_alpha_beta(&MetaParams::momentum_identity(FeatureNorm::Rms), &f);
        let rms = (r.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        for (bi, ri) in b.iter().zip(r) {
            assert!((bi * rms - ri).abs() < 1e-12);
        }
    }
}
