use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Named trainable tensor. The name doubles as the checkpoint record key.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Parameter {
        debug_assert!(tensor.requires_grad(), "parameters must require grad");
        Parameter {
            name: name.into(),
            tensor,
        }
    }
}

/// Ordered collection of a model's parameters with unique names. Order is
/// construction order and is what the optimizer and checkpoints key off.
#[derive(Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(TensorError::DuplicateName { name });
        }
        self.params.push(Parameter::new(name, tensor));
        Ok(())
    }

    pub fn extend(&mut self, other: ParamSet) -> Result<()> {
        for p in other.params {
            self.push(p.name, p.tensor)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn as_slice(&self) -> &[Parameter] {
        &self.params
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.tensor.zero_grad();
        }
    }

    /// Total parameter count (elements, not tensors).
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut set = ParamSet::new();
        set.push("w", Tensor::zeros_leaf(&[2])).unwrap();
        assert!(set.push("w", Tensor::zeros_leaf(&[2])).is_err());
    }
}
