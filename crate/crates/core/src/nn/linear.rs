use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Layer, Mode, Param};
use crate::rng::{standard_normal, Rng};
use crate::{Error, Real, Result, Tensor};

/// Fully connected layer `y = x W^T + b` on `N x in` inputs.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let std = libm::sqrt(1.0 / inputs as f64);
        let w = (0..inputs * outputs).map(|_| T::lit(std * standard_normal(rng))).collect();
        Self {
            weight: Param::weight(format!("{name}.weight"), Tensor::new(&[outputs, inputs], w).expect("shape")),
            bias: Param::weight(format!("{name}.bias"), Tensor::zeros(&[outputs])),
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.dim(0)
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (inp, outp) = (self.inputs(), self.outputs());
        if x.rank() != 2 || x.dim(1) != inp {
            return Err(Error::shape("linear", x.shape(), self.weight.value.shape()));
        }
        let n = x.dim(0);
        let mut out = vec![T::zero(); n * outp];
        for row in out.chunks_exact_mut(outp) {
            row.copy_from_slice(self.bias.value.data());
        }
        T::gemm(
            n,
            inp,
            outp,
            T::one(),
            x.data(),
            (inp, 1),
            self.weight.value.data(),
            (1, inp),
            T::one(),
            &mut out,
            (outp, 1),
        );
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Tensor::new(&[n, outp], out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward without forward", self.weight.name)))?;
        let (n, inp, outp) = (x.dim(0), self.inputs(), self.outputs());
        if dy.shape() != [n, outp] {
            return Err(Error::shape("linear backward", dy.shape(), &[n, outp]));
        }
        T::gemm(
            outp,
            n,
            inp,
            T::one(),
            dy.data(),
            (1, outp),
            x.data(),
            (inp, 1),
            T::one(),
            self.weight.grad.data_mut(),
            (inp, 1),
        );
        for row in dy.data().chunks_exact(outp) {
            for (b, g) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *b += *g;
            }
        }
        let mut dx = vec![T::zero(); n * inp];
        T::gemm(
            n,
            outp,
            inp,
            T::one(),
            dy.data(),
            (outp, 1),
            self.weight.value.data(),
            (inp, 1),
            T::zero(),
            &mut dx,
            (inp, 1),
        );
        Tensor::new(&[n, inp], dx)
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.extend([&self.weight, &self.bias]);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.extend([&mut self.weight, &mut self.bias]);
    }
}
