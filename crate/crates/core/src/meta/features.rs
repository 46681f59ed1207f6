use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decay rates of the gradient running averages, fastest first.
pub const EMA_DECAYS: [f64; 6] = [0.1, 0.5, 0.9, 0.99, 0.999, 0.9999];

/// Columns per coordinate: gradient, parameter, momentum, then one running
/// average per entry of [`EMA_DECAYS`].
pub const NUM_FEATURES: usize = 9;
pub const COL_GRAD: usize = 0;
pub const COL_THETA: usize = 1;
pub const COL_MOMENTUM: usize = 2;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "grad",
    "theta",
    "momentum",
    "ema_0.1",
    "ema_0.5",
    "ema_0.9",
    "ema_0.99",
    "ema_0.999",
    "ema_0.9999",
];

/// Columns whose RMS falls below this are left untouched.
pub const NORM_GUARD: f64 = 1e-12;

/// How each feature column is rescaled across the `d` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureNorm {
    /// Root-mean-square over coordinates equal to 1.
    #[default]
    Rms,
    /// Euclidean norm over coordinates equal to 1.
    UnitL2,
    /// Raw values.
    None,
}

impl FeatureNorm {
    pub fn code(self) -> u8 {
        match self {
            FeatureNorm::Rms => 0,
            FeatureNorm::UnitL2 => 1,
            FeatureNorm::None => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FeatureNorm::Rms),
            1 => Some(FeatureNorm::UnitL2),
            2 => Some(FeatureNorm::None),
            _ => None,
        }
    }
}

/// Running averages `m ← ρ·m + (1−ρ)·g` of the stochastic gradient, one per decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    pub ema: Vec<Vec<f64>>,
    /// Number of updates applied so far.
    pub updates: u64,
}

impl FeatureBank {
    pub fn zeros(d: usize) -> Self {
        FeatureBank {
            ema: vec![vec![0.0; d]; EMA_DECAYS.len()],
            updates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.ema[0].len()
    }

    /// No bias correction is applied.
    pub fn update_emas(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.dim() {
            return Err(Error::contract("gradient length differs from feature bank"));
        }
        for (m, &rho) in self.ema.iter_mut().zip(&EMA_DECAYS) {
            for (mi, gi) in m.iter_mut().zip(grad) {
                *mi = rho * *mi + (1.0 - rho) * gi;
            }
        }
        self.updates += 1;
        Ok(())
    }
}

/// Per-coordinate features, `rows × 9` row-major, with the scale factor that
/// was applied to each column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub data: Vec<f64>,
    pub scales: [f64; NUM_FEATURES],
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * NUM_FEATURES..(i + 1) * NUM_FEATURES]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(NUM_FEATURES)
            .copied()
            .collect()
    }

    /// Raw (unnormalised) matrix.
    pub fn from_columns(cols: [&[f64]; NUM_FEATURES]) -> Result<Self> {
        let rows = cols[0].len();
        if cols.iter().any(|c| c.len() != rows) {
            return Err(Error::contract("feature columns differ in length"));
        }
        let mut data = Vec::with_capacity(rows * NUM_FEATURES);
        for i in 0..rows {
            for c in &cols {
                data.push(c[i]);
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite feature value"));
        }
        Ok(FeatureMatrix {
            rows,
            data,
            scales: [1.0; NUM_FEATURES],
        })
    }
}

/// Rescales every column according to `mode`. Scale factors compose into
/// `scales`, so normalising twice reports the combined factor.
pub fn normalize_features(mut m: FeatureMatrix, mode: FeatureNorm) -> FeatureMatrix {
    if mode == FeatureNorm::None || m.rows == 0 {
        return m;
    }
    for c in 0..NUM_FEATURES {
        let ss: f64 = m
            .data
            .iter()
            .skip(c)
            .step_by(NUM_FEATURES)
            .map(|v| v * v)
            .sum();
        let norm = match mode {
            FeatureNorm::Rms => (ss / m.rows as f64).sqrt(),
            FeatureNorm::UnitL2 => ss.sqrt(),
            FeatureNorm::None => unreachable!(),
        };
        if norm <= NORM_GUARD {
            continue;
        }
        let s = 1.0 / norm;
        for v in m.data.iter_mut().skip(c).step_by(NUM_FEATURES) {
            *v *= s;
        }
        m.scales[c] *= s;
    }
    m
}

/// Feature matrix `[g, θ, r, ema_0.1, …, ema_0.9999]`, normalised with `mode`.
pub fn build_features(
    theta: &[f64],
    momentum: &[f64],
    grad: &[f64],
    bank: &FeatureBank,
    mode: FeatureNorm,
) -> Result<FeatureMatrix> {
    let d = theta.len();
    if momentum.len() != d || grad.len() != d || bank.dim() != d {
        return Err(Error::contract("feature inputs differ in length"));
    }
    let e = &bank.ema;
    let raw = FeatureMatrix::from_columns([
        grad, theta, momentum, &e[0], &e[1], &e[2], &e[3], &e[4], &e[5],
    ])?;
    Ok(normalize_features(raw, mode))
}
