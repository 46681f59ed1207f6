use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of one named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }

    /// Biases are 1-D tensors; everything else is a weight.
    pub fn is_bias(&self) -> bool {
        self.shape.len() == 1
    }
}

/// Ordered, contiguous tensor layout of a network's parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor directly after the previous one and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> usize {
        let offset = self.len();
        self.tensors.push(TensorSpec {
            name: name.into(),
            shape,
            offset,
        });
        offset
    }

    /// Builds a layout from explicit specs, checking contiguity.
    pub fn from_specs(tensors: Vec<TensorSpec>) -> Result<Self> {
        let mut next = 0;
        for t in &tensors {
            if t.offset != next {
                return Err(Error::contract(format!(
                    "tensor {} starts at {} but previous tensor ends at {next}",
                    t.name, t.offset
                )));
            }
            if t.shape.iter().any(|&s| s == 0) {
                return Err(Error::contract(format!("tensor {} has a zero dim", t.name)));
            }
            next += t.numel();
        }
        Ok(Layout { tensors })
    }

    /// A single anonymous tensor of length `d`.
    pub fn flat(d: usize) -> Self {
        let mut l = Layout::new();
        if d > 0 {
            l.push("theta", vec![d]);
        }
        l
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Total number of scalars `d`.
    pub fn len(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.numel())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the tensor owning coordinate `i`.
    pub fn tensor_of(&self, i: usize) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.range().contains(&i))
    }
}

/// Flat parameter vector `θ ∈ R^d` with its tensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::contract(format!(
                "{} values for a layout of {} scalars",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.get(name).map(|t| &self.values[t.range()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut l = Layout::new();
        assert_eq!(l.push("w", vec![3, 2]), 0);
        assert_eq!(l.push("b", vec![3]), 6);
        assert_eq!(l.len(), 9);
        assert_eq!(l.tensor_of(7).unwrap().name, "b");
        assert!(Layout::from_specs(vec![TensorSpec {
            name: "x".into(),
            shape: vec![2],
            offset: 1
        }])
        .is_err());
    }
}
