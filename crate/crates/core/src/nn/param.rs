use alloc::string::String;
use alloc::vec::Vec;

use crate::{Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Ordinary learnable tensor.
    Weight,
    /// `n x 5` Gabor bank; clamped after every optimizer step.
    Gabor,
    /// Non-learnable state saved with checkpoints (BN running statistics).
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            kind,
            value,
            grad,
        }
    }

    pub fn weight(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self::new(name, ParamKind::Weight, value)
    }

    pub fn buffer(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self::new(name, ParamKind::Buffer, value)
    }

    pub fn is_learnable(&self) -> bool {
        self.kind != ParamKind::Buffer
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }
}

/// A differentiable stage. `backward` must follow the matching `forward`
/// and returns the gradient with respect to that forward's input.
pub trait Layer<T: Real> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>>;

    fn params<'a>(&'a self, _out: &mut Vec<&'a Param<T>>) {}

    fn params_mut<'a>(&'a mut self, _out: &mut Vec<&'a mut Param<T>>) {}

    fn zero_grad(&mut self) {
        let mut ps = Vec::new();
        self.params_mut(&mut ps);
        for p in ps {
            p.zero_grad();
        }
    }

    /// Number of learnable scalars (buffers excluded).
    fn num_learnable(&self) -> usize {
        let mut ps = Vec::new();
        self.params(&mut ps);
        ps.iter().filter(|p| p.is_learnable()).map(|p| p.value.len()).sum()
    }
}
