//! One-step transition kernels. Every kernel evaluates the stochastic gradient
//! exactly once, draws its noise from the supplied stream in coordinate order,
//! and leaves the state untouched when the proposed update is not finite.

use super::state::SamplerState;
use crate::error::{Error, Result};
use crate::meta::{build_features, eval_alpha_beta, eval_beta, eval_mean_and_slope, MetaParams};
use crate::model::Potential;
use crate::rng::Noise;

/// Per-step quantities used by the update-norm trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `‖θ_{t+1} − θ_t‖²`.
    pub delta_sq: f64,
    /// `‖β_φ‖²` of the position update (learned kernels only).
    pub beta_sq: Option<f64>,
}

fn gradient<P: Potential + ?Sized>(target: &P, state: &SamplerState) -> Result<Vec<f64>> {
    let g = target.grad(&state.theta)?;
    if g.len() != state.dim() {
        return Err(Error::contract("gradient length differs from θ"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(divergence(state, "non-finite gradient"));
    }
    Ok(g)
}

fn divergence(state: &SamplerState, reason: &str) -> Error {
    Error::Divergence {
        step: state.step + 1,
        reason: reason.to_string(),
    }
}

fn check_finite(state: &SamplerState, values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(divergence(state, &format!("non-finite {what}")))
    }
}

fn commit(state: &mut SamplerState, theta: Vec<f64>, momentum: Option<Vec<f64>>) -> f64 {
    let delta_sq = theta
        .iter()
        .zip(&state.theta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    state.theta = theta;
    if let Some(r) = momentum {
        state.momentum = r;
    }
    state.step += 1;
    delta_sq
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive")))
    }
}

/// SGLD: `θ ← θ − ε∇Ũ(θ) + ξ`, `ξ ~ N(0, 2εT)`. Momentum is not touched.
pub fn sgld_step<P: Potential + ?Sized>(
    state: &mut SamplerState,
    target: &P,
    eps: f64,
    temperature: f64,
    noise: &mut Noise,
) -> Result<StepInfo> {
    positive("step size", eps)?;
    let g = gradient(target, state)?;
    let sd = (2.0 * eps * temperature).sqrt();
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(&g)
        .map(|(t, gi)| t - eps * gi + sd * noise.standard_normal())
        .collect();
    check_finite(state, &theta, "θ")?;
    Ok(StepInfo {
        delta_sq: commit(state, theta, None),
        beta_sq: None,
    })
}

/// SGHMC with symplectic Euler ordering:
/// `r ← r − ε∇Ũ(θ) − εCM⁻¹r + ξ`, `ξ ~ N(0, 2CεT)`, then `θ ← θ + εM⁻¹r`.
pub fn sghmc_step<P: Potential + ?Sized>(
    state: &mut SamplerState,
    target: &P,
    eps: f64,
    friction: f64,
    mass: f64,
    temperature: f64,
    noise: &mut Noise,
) -> Result<StepInfo> {
    positive("step size", eps)?;
    positive("mass", mass)?;
    if !(friction >= 0.0) {
        return Err(Error::config("friction must be non-negative"));
    }
    let g = gradient(target, state)?;
    let minv = 1.0 / mass;
    let damp = eps * friction * minv;
    let sd = (2.0 * friction * eps * temperature).sqrt();
    let r: Vec<f64> = state
        .momentum
        .iter()
        .zip(&g)
        .map(|(ri, gi)| ri - eps * gi - damp * ri + sd * noise.standard_normal())
        .collect();
    let drift = eps * minv;
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(&r)
        .map(|(t, ri)| t + drift * ri)
        .collect();
    check_finite(state, &r, "momentum")?;
    check_finite(state, &theta, "θ")?;
    Ok(StepInfo {
        delta_sq: commit(state, theta, Some(r)),
        beta_sq: None,
    })
}

/// Preconditioned SGLD:
/// `V ← αV + (1−α)(g/n)²`, `G = 1 ⊘ (λ + √V)`, `θ ← θ − εG∇Ũ + ξ`,
/// `ξ ~ N(0, 2GεT)`. The curvature correction Γ is omitted.
#[allow(clippy::too_many_arguments)]
pub fn psgld_step<P: Potential + ?Sized>(
    state: &mut SamplerState,
    target: &P,
    eps: f64,
    alpha: f64,
    lambda: f64,
    n_data: usize,
    temperature: f64,
    noise: &mut Noise,
) -> Result<StepInfo> {
    positive("step size", eps)?;
    positive("psgld lambda", lambda)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("psgld alpha must lie in (0, 1)"));
    }
    let g = gradient(target, state)?;
    let inv_n = 1.0 / n_data.max(1) as f64;
    let v: Vec<f64> = state
        .precond
        .iter()
        .zip(&g)
        .map(|(vi, gi)| {
            let s = gi * inv_n;
            alpha * vi + (1.0 - alpha) * s * s
        })
        .collect();
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(g.iter().zip(&v))
        .map(|(t, (gi, vi))| {
            let gdiag = 1.0 / (lambda + vi.sqrt());
            t - eps * gdiag * gi
                + (2.0 * gdiag * eps * temperature).sqrt() * noise.standard_normal()
        })
        .collect();
    check_finite(state, &theta, "θ")?;
    state.precond = v;
    Ok(StepInfo {
        delta_sq: commit(state, theta, None),
        beta_sq: None,
    })
}

/// Preconditioner `G = 1 ⊘ (λ + √V)` implied by the current state.
pub fn psgld_preconditioner(state: &SamplerState, lambda: f64) -> Vec<f64> {
    state
        .precond
        .iter()
        .map(|v| 1.0 / (lambda + v.sqrt()))
        .collect()
}

/// Learned kernel:
/// `r ← r − ε[∇Ũ(θ) + α_φ + Cβ_φ] + ξ`, `ξ ~ N(0, 2CεT)`, then
/// `θ ← θ + εβ_φ(θ, r_new)`. The running averages are updated once, before
/// the first feature evaluation, with the gradient this step consumed.
pub fn l2e_step<P: Potential + ?Sized>(
    state: &mut SamplerState,
    target: &P,
    eps: f64,
    friction: f64,
    meta: &MetaParams,
    temperature: f64,
    noise: &mut Noise,
) -> Result<StepInfo> {
    positive("step size", eps)?;
    if !(friction >= 0.0) {
        return Err(Error::config("friction must be non-negative"));
    }
    let g = gradient(target, state)?;
    let mut bank = state.bank.clone();
    bank.update_emas(&g)?;
    let features = build_features(&state.theta, &state.momentum, &g, &bank, meta.norm)?;
    let (alpha, beta) = eval_alpha_beta(meta, &features);
    check_finite(state, &alpha, "alpha head output")?;
    check_finite(state, &beta, "beta head output")?;

    let sd = (2.0 * friction * eps * temperature).sqrt();
    let r: Vec<f64> = state
        .momentum
        .iter()
        .zip(g.iter().zip(alpha.iter().zip(&beta)))
        .map(|(ri, (gi, (ai, bi)))| {
            ri - eps * (gi + ai + friction * bi) + sd * noise.standard_normal()
        })
        .collect();
    check_finite(state, &r, "momentum")?;

    let features = build_features(&state.theta, &r, &g, &bank, meta.norm)?;
    let beta = eval_beta(meta, &features);
    check_finite(state, &beta, "beta head output")?;
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(&beta)
        .map(|(t, b)| t + eps * b)
        .collect();
    check_finite(state, &theta, "θ")?;

    let beta_sq = beta.iter().map(|b| b * b).sum();
    state.bank = bank;
    let delta_sq = commit(state, theta, Some(r));
    Ok(StepInfo {
        delta_sq,
        beta_sq: Some(beta_sq),
    })
}

/// Kinetic-energy parameterisation with `p(r | θ) = N(f_φ(θ), I)`:
/// `r ← r − ε[∇Ũ(θ) + f_φ∇_θf_φ + a(r − f_φ)] + ξ`, `ξ ~ N(0, 2εaT)`, then
/// `θ ← θ + ε(r_new − f_φ)`.
///
/// `f_φ` is the α head evaluated on features with the momentum column zeroed,
/// so it depends on θ and the gradient history only. `f_φ∇_θf_φ` is taken with
/// the gradient features and the normalisation scales held fixed, which makes
/// it the exact gradient of `½‖f_φ(θ)‖²` under that convention.
pub fn kinetic_l2e_step<P: Potential + ?Sized>(
    state: &mut SamplerState,
    target: &P,
    eps: f64,
    friction: f64,
    meta: &MetaParams,
    temperature: f64,
    noise: &mut Noise,
) -> Result<StepInfo> {
    positive("step size", eps)?;
    if !(friction >= 0.0) {
        return Err(Error::config("friction must be non-negative"));
    }
    let g = gradient(target, state)?;
    let mut bank = state.bank.clone();
    bank.update_emas(&g)?;
    let (f, slope) = kinetic_mean(meta, &state.theta, &g, &bank)?;
    check_finite(state, &f, "kinetic mean")?;
    check_finite(state, &slope, "kinetic mean slope")?;

    let damp = eps * friction;
    let sd = (2.0 * friction * eps * temperature).sqrt();
    let r: Vec<f64> = state
        .momentum
        .iter()
        .zip(g.iter().zip(f.iter().zip(&slope)))
        .map(|(ri, (gi, (fi, si)))| {
            let kin = fi * si;
            ri - eps * gi - eps * kin - damp * (ri - fi) + sd * noise.standard_normal()
        })
        .collect();
    check_finite(state, &r, "momentum")?;
    let theta: Vec<f64> = state
        .theta
        .iter()
        .zip(r.iter().zip(&f))
        .map(|(t, (ri, fi))| t + eps * (ri - fi))
        .collect();
    check_finite(state, &theta, "θ")?;
    state.bank = bank;
    Ok(StepInfo {
        delta_sq: commit(state, theta, Some(r)),
        beta_sq: None,
    })
}

/// `(f_φ(θ), ∂f_φ/∂θ)` per coordinate for the kinetic kernel.
pub fn kinetic_mean(
    meta: &MetaParams,
    theta: &[f64],
    grad: &[f64],
    bank: &crate::meta::FeatureBank,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let zeros = vec![0.0; theta.len()];
    let features = build_features(theta, &zeros, grad, bank, meta.norm)?;
    Ok(eval_mean_and_slope(meta, &features))
}
