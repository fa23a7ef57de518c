use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Layer, Mode, Param};
use crate::rng::{standard_normal, Rng};
use crate::{Error, Real, Result, Tensor};

/// Squeeze-and-excitation channel gate.
///
/// `z_c` is the spatial mean of channel `c`, the gate is
/// `s = sigmoid(theta2 . relu(theta1 . z))` and the output rescales each
/// channel by `s_c`. `theta1` is `C/r x C`, `theta2` is `C x C/r`; neither
/// has a bias.
#[derive(Debug, Clone)]
pub struct SqueezeExcite<T> {
    pub theta1: Param<T>,
    pub theta2: Param<T>,
    forced_scale: Option<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    /// Forward input, kept in training mode only.
    x: Option<Tensor<T>>,
    z: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    scale: Vec<T>,
}

impl<T: Real> SqueezeExcite<T> {
    pub fn new(name: &str, channels: usize, reduction: usize, rng: &mut Rng) -> Result<Self> {
        if reduction == 0 || reduction > channels || !channels.is_multiple_of(reduction) {
            return Err(Error::invalid(format!("SE reduction {reduction} must divide {channels} channels")));
        }
        let hidden = channels / reduction;
        let mut init = |rows: usize, cols: usize, gain: f64| {
            let std = libm::sqrt(gain / cols as f64);
            let d = (0..rows * cols).map(|_| T::lit(std * standard_normal(rng))).collect();
            Tensor::new(&[rows, cols], d).expect("shape")
        };
        let t1 = init(hidden, channels, 2.0);
        let t2 = init(channels, hidden, 1.0);
        Ok(Self {
            theta1: Param::weight(format!("{name}.theta1"), t1),
            theta2: Param::weight(format!("{name}.theta2"), t2),
            forced_scale: None,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.theta1.value.dim(1)
    }

    pub fn hidden(&self) -> usize {
        self.theta1.value.dim(0)
    }

    /// Replaces the computed gate with a constant (test hook for comparing
    /// against an ungated block).
    pub fn force_scale(&mut self, scale: Option<T>) {
        self.forced_scale = scale;
    }

    /// Channel descriptors `z` (`N x C`) of an input.
    pub fn squeeze(x: &Tensor<T>) -> Result<Vec<T>> {
        let (_, _, h, w) = x.dims4()?;
        let inv = T::one() / T::from_usize(h * w).unwrap();
        Ok(x.data().chunks_exact(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect())
    }

    /// Gate values `s` (`N x C`) for the last forward pass.
    pub fn last_scale(&self) -> Option<&[T]> {
        self.cache.as_ref().map(|c| c.scale.as_slice())
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Real> Layer<T> for SqueezeExcite<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(Error::shape("squeeze-excite", x.shape(), self.theta1.value.shape()));
        }
        let r = self.hidden();
        let z = Self::squeeze(x)?;
        let mut hidden_pre = vec![T::zero(); n * r];
        T::gemm(
            n,
            c,
            r,
            T::one(),
            &z,
            (c, 1),
            self.theta1.value.data(),
            (1, c),
            T::zero(),
            &mut hidden_pre,
            (r, 1),
        );
        let hidden: Vec<T> = hidden_pre.iter().map(|&v| v.max(T::zero())).collect();
        let mut a = vec![T::zero(); n * c];
        T::gemm(
            n,
            r,
            c,
            T::one(),
            &hidden,
            (r, 1),
            self.theta2.value.data(),
            (1, r),
            T::zero(),
            &mut a,
            (c, 1),
        );
        let scale: Vec<T> = match self.forced_scale {
            Some(s) => vec![s; n * c],
            None => a.into_iter().map(sigmoid).collect(),
        };
        let hw = h * w;
        let mut out = x.data().to_vec();
        for (plane, &s) in out.chunks_exact_mut(hw).zip(&scale) {
            for v in plane {
                *v *= s;
            }
        }
        self.cache = Some(Cache {
            x: (mode == Mode::Train).then(|| x.clone()),
            z,
            hidden_pre,
            hidden,
            scale,
        });
        Tensor::new(x.shape(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("squeeze-excite: backward without forward"))?;
        let x = cache
            .x
            .as_ref()
            .ok_or_else(|| Error::invalid("squeeze-excite: backward after eval forward"))?;
        let (n, c, h, w) = x.dims4()?;
        if dy.shape() != x.shape() {
            return Err(Error::shape("squeeze-excite backward", dy.shape(), x.shape()));
        }
        let (r, hw) = (self.hidden(), h * w);
        let xd = x.data();
        let dyd = dy.data();
        // Gradient through the gate: ds = sum over pixels of dy * x.
        let mut da = vec![T::zero(); n * c];
        let mut dx = vec![T::zero(); dy.len()];
        for p in 0..n * c {
            let s = cache.scale[p];
            let (xs, gs) = (&xd[p * hw..(p + 1) * hw], &dyd[p * hw..(p + 1) * hw]);
            let mut ds = T::zero();
            for i in 0..hw {
                ds += gs[i] * xs[i];
                dx[p * hw + i] = gs[i] * s;
            }
            da[p] = if self.forced_scale.is_some() {
                T::zero()
            } else {
                ds * s * (T::one() - s)
            };
        }
        // theta2 grad: da^T . hidden (C x r)
        T::gemm(
            c,
            n,
            r,
            T::one(),
            &da,
            (1, c),
            &cache.hidden,
            (r, 1),
            T::one(),
            self.theta2.grad.data_mut(),
            (r, 1),
        );
        let mut dh = vec![T::zero(); n * r];
        T::gemm(
            n,
            c,
            r,
            T::one(),
            &da,
            (c, 1),
            self.theta2.value.data(),
            (r, 1),
            T::zero(),
            &mut dh,
            (r, 1),
        );
        for (g, &pre) in dh.iter_mut().zip(&cache.hidden_pre) {
            if pre <= T::zero() {
                *g = T::zero();
            }
        }
        // theta1 grad: dh^T . z (r x C)
        T::gemm(
            r,
            n,
            c,
            T::one(),
            &dh,
            (1, r),
            &cache.z,
            (c, 1),
            T::one(),
            self.theta1.grad.data_mut(),
            (c, 1),
        );
        let mut dz = vec![T::zero(); n * c];
        T::gemm(
            n,
            r,
            c,
            T::one(),
            &dh,
            (r, 1),
            self.theta1.value.data(),
            (c, 1),
            T::zero(),
            &mut dz,
            (c, 1),
        );
        let inv = T::one() / T::from_usize(hw).unwrap();
        for (plane, &g) in dx.chunks_exact_mut(hw).zip(&dz) {
            let add = g * inv;
            for v in plane {
                *v += add;
            }
        }
        Tensor::new(dy.shape(), dx)
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.extend([&self.theta1, &self.theta2]);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.extend([&mut self.theta1, &mut self.theta2]);
    }
}
