use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arch::{Activation, ArchKind, ArchitectureConfig};
use super::params::{Layout, ParamVector};
use super::tape::{softmax_rows, NodeId, Tape};
use crate::data::{DataBatch, Labels};
use crate::error::{Error, Result};
use crate::rng::{substream, tag};

/// Observation model `p(y | x, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    /// Softmax over the network outputs.
    Categorical,
    /// Unit-variance Gaussian around the single network output.
    Gaussian,
}

/// Tempered posterior energy of a network:
///
/// `Ũ(θ) = [ (n/|B|) Σ_{i∈B} −log p(y_i | x_i, θ) + λ‖θ‖² ] / T`
///
/// Normalising constants of the likelihood and the prior are dropped, so
/// energies are only comparable within one model. The Gaussian prior has
/// variance `1/(2λ)` and is applied to every coordinate, biases included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub arch: ArchitectureConfig,
    pub prior_precision: f64,
    pub temperature: f64,
    pub likelihood: Likelihood,
    layout: Layout,
}

impl EnergyModel {
    pub fn new(
        arch: ArchitectureConfig,
        prior_precision: f64,
        temperature: f64,
        likelihood: Likelihood,
    ) -> Result<Self> {
        if !(prior_precision >= 0.0) || !prior_precision.is_finite() {
            return Err(Error::config("prior precision must be a non-negative real"));
        }
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::config("temperature must be positive"));
        }
        if likelihood == Likelihood::Gaussian && arch.outputs != 1 {
            return Err(Error::config("gaussian likelihood needs a single output"));
        }
        let layout = arch.layout()?;
        Ok(EnergyModel {
            arch,
            prior_precision,
            temperature,
            likelihood,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Prior variance `1/(2λ)`, infinite for a flat prior.
    pub fn prior_variance(&self) -> f64 {
        if self.prior_precision > 0.0 {
            0.5 / self.prior_precision
        } else {
            f64::INFINITY
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::contract(format!(
                "theta has {} coordinates, model expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("theta contains non-finite values"));
        }
        Ok(())
    }

    fn build<'t>(&self, tape: &mut Tape<'t>, inputs: &[f64]) -> NodeId {
        let x = tape.input(inputs.to_vec());
        let act = |tape: &mut Tape<'t>, n: NodeId| match self.arch.activation {
            Activation::Relu => tape.relu(n),
            Activation::Identity => n,
        };
        let tensors = self.layout.tensors();
        match &self.arch.kind {
            ArchKind::Mlp { widths } => {
                let layers = widths.len() - 1;
                let mut h = x;
                for (i, w) in widths.windows(2).enumerate() {
                    let (wt, bt) = (&tensors[2 * i], &tensors[2 * i + 1]);
                    let z = tape.dense(h, wt.offset, bt.offset, w[0], w[1]);
                    if i + 1 == layers {
                        h = z;
                    } else {
                        let a = act(tape, z);
                        h = if self.arch.residual && i > 0 && w[0] == w[1] {
                            tape.add(a, h)
                        } else {
                            a
                        };
                    }
                }
                h
            }
            ArchKind::Conv { channels, depth } => {
                let (c0, height, width) = (
                    self.arch.input_shape[0],
                    self.arch.input_shape[1],
                    self.arch.input_shape[2],
                );
                let mut h = x;
                let mut cin = c0;
                for i in 0..*depth {
                    let (wt, bt) = (&tensors[2 * i], &tensors[2 * i + 1]);
                    let z = tape.conv3x3(h, wt.offset, bt.offset, cin, *channels, height, width);
                    let a = act(tape, z);
                    h = if self.arch.residual && i > 0 {
                        tape.add(a, h)
                    } else {
                        a
                    };
                    cin = *channels;
                }
                let pooled = tape.avg_pool(h, *channels, height * width);
                let (wt, bt) = (&tensors[2 * depth], &tensors[2 * depth + 1]);
                tape.dense(pooled, wt.offset, bt.offset, *channels, self.arch.outputs)
            }
        }
    }

    fn check_inputs(&self, inputs: &[f64], rows: usize) -> Result<()> {
        if rows == 0 {
            return Err(Error::contract("empty batch"));
        }
        if inputs.len() != rows * self.arch.input_len() {
            return Err(Error::contract(format!(
                "batch of {rows} rows has {} input values, architecture expects {} per row",
                inputs.len(),
                self.arch.input_len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite input values"));
        }
        Ok(())
    }

    /// Network outputs (logits or regression means), `rows × outputs`, row-major.
    pub fn forward(&self, theta: &[f64], inputs: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_inputs(inputs, rows)?;
        let mut tape = Tape::new(theta, rows);
        let out = self.build(&mut tape, inputs);
        Ok(tape.value(out).to_vec())
    }

    /// ReLU on/off pattern of the network at `theta` on `inputs`. Along a
    /// single-coordinate move every pre-activation is affine while the pattern
    /// holds, so equal patterns at both ends mean no kink was crossed.
    pub fn activation_pattern(
        &self,
        theta: &[f64],
        inputs: &[f64],
        rows: usize,
    ) -> Result<Vec<bool>> {
        self.check_theta(theta)?;
        self.check_inputs(inputs, rows)?;
        let mut tape = Tape::new(theta, rows);
        self.build(&mut tape, inputs);
        Ok(tape.relu_pattern())
    }

    pub fn forward_batch(&self, theta: &[f64], batch: &DataBatch) -> Result<Vec<f64>> {
        self.forward(theta, &batch.inputs, batch.batch_size())
    }

    /// Class probabilities `rows × outputs` (categorical likelihood only).
    pub fn predict_proba(&self, theta: &[f64], inputs: &[f64], rows: usize) -> Result<Vec<f64>> {
        if self.likelihood != Likelihood::Categorical {
            return Err(Error::contract(
                "class probabilities need a categorical likelihood",
            ));
        }
        let logits = self.forward(theta, inputs, rows)?;
        Ok(softmax_rows(&logits, self.arch.outputs))
    }

    /// Per-example `log p(y_i | x_i, θ)` without dropped constants for the
    /// categorical case; the Gaussian case includes `−½ log 2π`.
    pub fn log_likelihoods(&self, theta: &[f64], batch: &DataBatch) -> Result<Vec<f64>> {
        let out = self.forward_batch(theta, batch)?;
        match (&batch.labels, self.likelihood) {
            (Labels::Class(y), Likelihood::Categorical) => {
                let k = self.arch.outputs;
                Ok(out
                    .chunks_exact(k)
                    .zip(y)
                    .map(|(row, &yi)| row[yi] - super::tape::log_sum_exp(row))
                    .collect())
            }
            (Labels::Real(y), Likelihood::Gaussian) => {
                let c = -0.5 * (2.0 * std::f64::consts::PI).ln();
                Ok(out
                    .iter()
                    .zip(y)
                    .map(|(f, yi)| c - 0.5 * (f - yi) * (f - yi))
                    .collect())
            }
            _ => Err(Error::contract("label kind does not match likelihood")),
        }
    }

    fn data_term<'t>(&self, tape: &mut Tape<'t>, batch: &DataBatch) -> Result<NodeId> {
        let out = self.build(tape, &batch.inputs);
        match (&batch.labels, self.likelihood) {
            (Labels::Class(y), Likelihood::Categorical) => {
                if let Some(&bad) = y.iter().find(|&&v| v >= self.arch.outputs) {
                    return Err(Error::contract(format!("label {bad} out of range")));
                }
                Ok(tape.softmax_xent(out, y, self.arch.outputs))
            }
            (Labels::Real(y), Likelihood::Gaussian) => Ok(tape.squared_error(out, y)),
            _ => Err(Error::contract("label kind does not match likelihood")),
        }
    }

    fn check_batch(&self, batch: &DataBatch) -> Result<()> {
        if batch.batch_size() > batch.dataset_size_n {
            return Err(Error::contract("batch larger than its dataset"));
        }
        self.check_inputs(&batch.inputs, batch.batch_size())
    }

    pub fn energy_value(&self, theta: &[f64], batch: &DataBatch) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let mut tape = Tape::new(theta, batch.batch_size());
        let loss = self.data_term(&mut tape, batch)?;
        let data = tape.value(loss)[0];
        Ok((batch.scale() * data + self.prior_term(theta)) / self.temperature)
    }

    pub fn energy_grad(&self, theta: &[f64], batch: &DataBatch) -> Result<Vec<f64>> {
        Ok(self.energy_and_grad(theta, batch)?.1)
    }

    /// Energy and its gradient from one tape.
    pub fn energy_and_grad(&self, theta: &[f64], batch: &DataBatch) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let mut tape = Tape::new(theta, batch.batch_size());
        let loss = self.data_term(&mut tape, batch)?;
        let data = tape.value(loss)[0];
        let mut g = tape.backward(loss);
        let scale = batch.scale();
        let inv_t = 1.0 / self.temperature;
        let two_lambda = 2.0 * self.prior_precision;
        for (gi, &ti) in g.iter_mut().zip(theta) {
            *gi = (scale * *gi + two_lambda * ti) * inv_t;
        }
        Ok(((scale * data + self.prior_term(theta)) * inv_t, g))
    }

    fn prior_term(&self, theta: &[f64]) -> f64 {
        self.prior_precision * theta.iter().map(|v| v * v).sum::<f64>()
    }

    /// Prior-only energy `λ‖θ‖²/T`.
    pub fn prior_energy(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.prior_term(theta) / self.temperature)
    }

    pub fn prior_grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let c = 2.0 * self.prior_precision / self.temperature;
        Ok(theta.iter().map(|t| c * t).collect())
    }

    pub fn init_params(&self, seed: u64) -> ParamVector {
        init_with_layout(&self.arch, &self.layout, seed)
    }
}

/// Gaussian initialisation with standard deviation `sqrt(2/fan_in)` per weight
/// tensor and zero biases; deterministic in `seed`.
pub fn init_params(arch: &ArchitectureConfig, seed: u64) -> Result<ParamVector> {
    let layout = arch.layout()?;
    Ok(init_with_layout(arch, &layout, seed))
}

fn init_with_layout(arch: &ArchitectureConfig, layout: &Layout, seed: u64) -> ParamVector {
    let _ = arch;
    let mut rng = substream(seed, &[tag::INIT]);
    let mut values = vec![0.0; layout.len()];
    for t in layout.tensors() {
        if t.is_bias() {
            continue;
        }
        let fan_in: usize = t.shape[1..].iter().product();
        let std = (2.0 / fan_in as f64).sqrt();
        for v in &mut values[t.range()] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = std * z;
        }
    }
    ParamVector {
        values,
        layout: layout.clone(),
    }
}
