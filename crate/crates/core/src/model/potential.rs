use super::energy::EnergyModel;
use crate::data::DataBatch;
use crate::error::{Error, Result};

/// A differentiable energy over `R^d`. Samplers only see this interface; one
/// call to [`Potential::grad`] is one stochastic gradient evaluation.
pub trait Potential {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &[f64]) -> Result<f64> {
        (**self).value(theta)
    }
    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (**self).grad(theta)
    }
}

/// Network energy bound to one minibatch.
#[derive(Debug, Clone, Copy)]
pub struct BatchEnergy<'a> {
    pub model: &'a EnergyModel,
    pub batch: &'a DataBatch,
}

impl Potential for BatchEnergy<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.model.energy_value(theta, self.batch)
    }
    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.model.energy_grad(theta, self.batch)
    }
}

/// The prior part `λ‖θ‖²/T` of a network energy.
#[derive(Debug, Clone, Copy)]
pub struct PriorEnergy<'a>(pub &'a EnergyModel);

impl Potential for PriorEnergy<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.0.prior_energy(theta)
    }
    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.0.prior_grad(theta)
    }
}

/// Gaussian target `U(θ) = ½ (θ−μ)ᵀ P (θ−μ)` with a dense precision matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPotential {
    pub mean: Vec<f64>,
    /// Row-major `d × d`, symmetric positive definite.
    pub precision: Vec<f64>,
}

impl GaussianPotential {
    pub fn new(mean: Vec<f64>, precision: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if precision.len() != d * d {
            return Err(Error::contract("precision must be d×d"));
        }
        Ok(GaussianPotential { mean, precision })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Self {
        let d = mean.len();
        let mut precision = vec![0.0; d * d];
        for i in 0..d {
            precision[i * d + i] = 1.0 / variance;
        }
        GaussianPotential { mean, precision }
    }

    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Self {
        let d = mean.len();
        let mut precision = vec![0.0; d * d];
        for (i, v) in variances.iter().enumerate() {
            precision[i * d + i] = 1.0 / v;
        }
        GaussianPotential { mean, precision }
    }
}

impl Potential for GaussianPotential {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let g = self.grad(theta)?;
        Ok(0.5
            * g.iter()
                .zip(theta.iter().zip(&self.mean))
                .map(|(gi, (t, m))| gi * (t - m))
                .sum::<f64>())
    }

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if theta.len() != d {
            return Err(Error::contract("dimension mismatch"));
        }
        let diff: Vec<f64> = theta.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        Ok(self
            .precision
            .chunks_exact(d)
            .map(|row| row.iter().zip(&diff).map(|(p, x)| p * x).sum())
            .collect())
    }
}

/// Mixture of isotropic Gaussians applied independently to every coordinate:
/// `U(θ) = −Σ_j log Σ_k w_k N(θ_j; μ_k, s_k²)` (constants kept, so `exp(−U)`
/// is normalised).
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePotential {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub dim: usize,
}

impl MixturePotential {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>, dim: usize) -> Result<Self> {
        if weights.len() != means.len() || means.len() != stds.len() || weights.is_empty() {
            return Err(Error::config(
                "mixture components must have matching lengths",
            ));
        }
        if stds.iter().any(|&s| !(s > 0.0)) || weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::config("mixture weights and stds must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(MixturePotential {
            weights,
            means,
            stds,
            dim,
        })
    }

    /// Equal-weight two-mode mixture at `±separation/2`.
    pub fn two_modes(separation: f64, std: f64) -> Self {
        MixturePotential::new(
            vec![0.5, 0.5],
            vec![-separation / 2.0, separation / 2.0],
            vec![std, std],
            1,
        )
        .expect("valid mixture")
    }

    /// Log-density and its derivative at a scalar point.
    pub fn log_density_1d(&self, x: f64) -> (f64, f64) {
        let terms: Vec<(f64, f64)> = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(w, (m, s))| {
                let z = (x - m) / s;
                let lp = w.ln() - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z;
                (lp, -(x - m) / (s * s))
            })
            .collect();
        let mx = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        let ws: Vec<f64> = terms.iter().map(|t| (t.0 - mx).exp()).collect();
        let total: f64 = ws.iter().sum();
        let dlog = ws.iter().zip(&terms).map(|(w, t)| w * t.1).sum::<f64>() / total;
        (mx + total.ln(), dlog)
    }

    /// Index of the component whose mean is closest to `x`.
    pub fn basin(&self, x: f64) -> usize {
        let mut best = 0;
        for (k, m) in self.means.iter().enumerate() {
            if (x - m).abs() < (x - self.means[best]).abs() {
                best = k;
            }
        }
        best
    }
}

impl Potential for MixturePotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::contract("dimension mismatch"));
        }
        Ok(-theta.iter().map(|&x| self.log_density_1d(x).0).sum::<f64>())
    }

    fn grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim {
            return Err(Error::contract("dimension mismatch"));
        }
        Ok(theta.iter().map(|&x| -self.log_density_1d(x).1).collect())
    }
}

/// Coordinates with both gradients below this magnitude are compared in
/// absolute rather than relative terms.
pub const FD_RELATIVE_FLOOR: f64 = 1e-4;

/// Maximum relative error between `grad` and central finite differences of
/// `potential` over `coords` (all coordinates when `None`).
pub fn finite_diff_error<P: Potential + ?Sized>(
    potential: &P,
    theta: &[f64],
    grad: &[f64],
    epsilon: f64,
    coords: Option<&[usize]>,
) -> Result<f64> {
    if !(1e-8..=1e-2).contains(&epsilon) {
        return Err(Error::contract("epsilon must lie in [1e-8, 1e-2]"));
    }
    if grad.len() != theta.len() {
        return Err(Error::contract("gradient length differs from theta"));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let up = potential.value(&probe)?;
        probe[i] = orig - epsilon;
        let down = potential.value(&probe)?;
        probe[i] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let denom = grad[i].abs().max(fd.abs()).max(FD_RELATIVE_FLOOR);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    Ok(worst)
}

/// Checks `potential.grad` against central finite differences of
/// `potential.value`; returns the maximum relative error.
pub fn finite_diff_check<P: Potential + ?Sized>(
    potential: &P,
    theta: &[f64],
    epsilon: f64,
    coords: Option<&[usize]>,
) -> Result<f64> {
    let g = potential.grad(theta)?;
    finite_diff_error(potential, theta, &g, epsilon, coords)
}
