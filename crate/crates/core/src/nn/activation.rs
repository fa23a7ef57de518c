use alloc::vec::Vec;

use super::{Layer, Mode};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Real> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Train {
            self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        }
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(|| Error::invalid("relu: backward without forward"))?;
        if mask.len() != dy.len() {
            return Err(Error::invalid("relu: gradient size differs from forward input"));
        }
        let data = dy.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { T::zero() }).collect();
        Tensor::new(dy.shape(), data)
    }
}
