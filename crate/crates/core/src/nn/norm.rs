use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Layer, Mode, Param};
use crate::{Error, Real, Result, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `(batch, height, width)`.
///
/// Training mode normalizes with the biased batch variance and updates the
/// running statistics with the unbiased one; eval mode uses the running
/// statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    shape: [usize; 4],
    train: bool,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self::with_gamma(name, channels, T::one())
    }

    pub fn with_gamma(name: &str, channels: usize, gamma: T) -> Self {
        Self {
            gamma: Param::weight(format!("{name}.gamma"), Tensor::full(&[channels], gamma)),
            beta: Param::weight(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Param::buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: Param::buffer(format!("{name}.running_var"), Tensor::ones(&[channels])),
            cache: None,
        }
    }

    pub fn name(&self) -> String {
        self.gamma.name.trim_end_matches(".gamma").into()
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(Error::shape("batch norm", x.shape(), self.gamma.value.shape()));
        }
        let hw = h * w;
        let count = n * hw;
        let train = mode == Mode::Train;
        if train && count < 2 {
            return Err(Error::invalid(format!(
                "{}: training mode needs more than one value per channel",
                self.name()
            )));
        }
        let eps = T::lit(BN_EPS);
        let momentum = T::lit(BN_MOMENTUM);
        let xd = x.data();
        let mut inv_std = vec![T::zero(); c];
        let mut mean = vec![T::zero(); c];
        for ch in 0..c {
            let (m, inv) = if train {
                let mut s = T::zero();
                for b in 0..n {
                    s += xd[(b * c + ch) * hw..][..hw].iter().copied().sum::<T>();
                }
                let m = s / T::from_usize(count).unwrap();
                let mut v = T::zero();
                for b in 0..n {
                    for &xv in &xd[(b * c + ch) * hw..][..hw] {
                        v += (xv - m) * (xv - m);
                    }
                }
                let var = v / T::from_usize(count).unwrap();
                let unbiased = v / T::from_usize(count - 1).unwrap();
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = (T::one() - momentum) * *rm + momentum * m;
                let rv = &mut self.running_var.value.data_mut()[ch];
                *rv = (T::one() - momentum) * *rv + momentum * unbiased;
                (m, T::one() / (var + eps).sqrt())
            } else {
                let rv = self.running_var.value.data()[ch];
                (self.running_mean.value.data()[ch], T::one() / (rv + eps).sqrt())
            };
            mean[ch] = m;
            inv_std[ch] = inv;
        }
        let (g, bt) = (self.gamma.value.data(), self.beta.value.data());
        let mut x_hat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (xd[i] - mean[ch]) * inv_std[ch];
                    x_hat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        self.cache = Some(Cache {
            x_hat,
            inv_std,
            shape: [n, c, h, w],
            train,
        });
        Tensor::new(x.shape(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward without forward", self.name())))?;
        let [n, c, h, w] = cache.shape;
        if dy.shape() != cache.shape {
            return Err(Error::shape("batch norm backward", dy.shape(), &cache.shape));
        }
        let hw = h * w;
        let count = T::from_usize(n * hw).unwrap();
        let dyd = dy.data();
        let mut dx = vec![T::zero(); dy.len()];
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xh) = (T::zero(), T::zero());
            for b in 0..n {
                let base = (b * c + ch) * hw;
                for (&d, &xh) in dyd[base..base + hw].iter().zip(&cache.x_hat[base..base + hw]) {
                    sum_dy += d;
                    sum_dy_xh += d * xh;
                }
            }
            self.gamma.grad.data_mut()[ch] += sum_dy_xh;
            self.beta.grad.data_mut()[ch] += sum_dy;
            let g = self.gamma.value.data()[ch];
            let k = g * cache.inv_std[ch];
            for b in 0..n {
                let base = (b * c + ch) * hw;
                for i in base..base + hw {
                    dx[i] = if cache.train {
                        k / count * (count * dyd[i] - sum_dy - cache.x_hat[i] * sum_dy_xh)
                    } else {
                        k * dyd[i]
                    };
                }
            }
        }
        Tensor::new(dy.shape(), dx)
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.extend([&self.gamma, &self.beta, &self.running_mean, &self.running_var]);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.extend([&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]);
    }
}
