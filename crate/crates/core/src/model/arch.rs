use serde::{Deserialize, Serialize};

use super::params::Layout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

/// Network family. Conv layers are 3×3, stride 1, zero padding 1, followed by
/// global average pooling and a dense head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchKind {
    /// `widths` lists every layer width including input and output,
    /// e.g. `[784, 32, 10]`.
    Mlp {
        widths: Vec<usize>,
    },
    Conv {
        channels: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    #[serde(flatten)]
    pub kind: ArchKind,
    #[serde(default)]
    pub activation: Activation,
    /// Skip connections between consecutive hidden layers of equal width.
    #[serde(default)]
    pub residual: bool,
    /// Per-example input dims: `[features]` for MLPs, `[C, H, W]` for conv nets.
    pub input_shape: Vec<usize>,
    pub outputs: usize,
}

pub const CONV_KERNEL: usize = 3;

impl ArchitectureConfig {
    pub fn mlp(widths: Vec<usize>, activation: Activation, residual: bool) -> Self {
        let input = widths.first().copied().unwrap_or(0);
        let outputs = widths.last().copied().unwrap_or(0);
        ArchitectureConfig {
            kind: ArchKind::Mlp { widths },
            activation,
            residual,
            input_shape: vec![input],
            outputs,
        }
    }

    pub fn conv(
        input_shape: [usize; 3],
        channels: usize,
        depth: usize,
        residual: bool,
        outputs: usize,
    ) -> Self {
        ArchitectureConfig {
            kind: ArchKind::Conv { channels, depth },
            activation: Activation::Relu,
            residual,
            input_shape: input_shape.to_vec(),
            outputs,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outputs == 0 || self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::config("architecture dims must be positive"));
        }
        match &self.kind {
            ArchKind::Mlp { widths } => {
                if widths.len() < 2 || widths.contains(&0) {
                    return Err(Error::config(
                        "mlp needs at least input and output widths, all positive",
                    ));
                }
                if self.input_shape != [widths[0]] || self.outputs != widths[widths.len() - 1] {
                    return Err(Error::config("mlp widths disagree with input/output dims"));
                }
            }
            ArchKind::Conv { channels, depth } => {
                if *channels == 0 || *depth == 0 {
                    return Err(Error::config("conv channels and depth must be positive"));
                }
                if self.input_shape.len() != 3 {
                    return Err(Error::config("conv input shape must be [C, H, W]"));
                }
            }
        }
        Ok(())
    }

    /// Parameter layout in storage order.
    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let mut l = Layout::new();
        match &self.kind {
            ArchKind::Mlp { widths } => {
                for (i, w) in widths.windows(2).enumerate() {
                    l.push(format!("layer{i}.weight"), vec![w[1], w[0]]);
                    l.push(format!("layer{i}.bias"), vec![w[1]]);
                }
            }
            ArchKind::Conv { channels, depth } => {
                let mut cin = self.input_shape[0];
                for i in 0..*depth {
                    l.push(
                        format!("conv{i}.weight"),
                        vec![*channels, cin, CONV_KERNEL, CONV_KERNEL],
                    );
                    l.push(format!("conv{i}.bias"), vec![*channels]);
                    cin = *channels;
                }
                l.push("head.weight", vec![self.outputs, *channels]);
                l.push("head.bias", vec![self.outputs]);
            }
        }
        Ok(l)
    }

    pub fn num_params(&self) -> Result<usize> {
        Ok(self.layout()?.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_parameter_counts() {
        let a = ArchitectureConfig::mlp(vec![1, 1], Activation::Identity, false);
        assert_eq!(a.num_params().unwrap(), 2);
        let b = ArchitectureConfig::mlp(vec![784, 32, 10], Activation::Relu, false);
        // shape arithmetic: 784*32 + 32 + 32*10 + 10
        assert_eq!(b.num_params().unwrap(), 25450);
    }

    #[test]
    fn conv_parameter_count() {
        let a = ArchitectureConfig::conv([1, 6, 6], 4, 2, true, 3);
        // conv0: 4*1*9+4, conv1: 4*4*9+4, head: 3*4+3
        assert_eq!(a.num_params().unwrap(), 40 + 148 + 15);
    }

    #[test]
    fn invalid_dims_rejected() {
        let a = ArchitectureConfig::mlp(vec![3, 0, 2], Activation::Relu, false);
        assert!(matches!(a.validate(), Err(Error::Config(_))));
        let c = ArchitectureConfig::conv([1, 6, 6], 0, 2, false, 3);
        assert!(c.layout().is_err());
    }
}
