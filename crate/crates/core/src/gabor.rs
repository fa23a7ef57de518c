//! Learnable 2D Gabor convolution.
//!
//! Each output channel's kernel is the real Gabor function
//!
//! ```text
//! g(x, y) = 1 / (2 pi sigma^2) * exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi f0 x' + phi)
//! x' =  x cos(theta) + y sin(theta)
//! y' = -x sin(theta) + y cos(theta)
//! ```
//!
//! sampled on integer offsets centred on the kernel middle (`x` along
//! columns, `y` along rows). Only the five scalars per kernel are learned;
//! the weight tensor is re-materialized on every forward pass and the
//! convolution weight gradient is contracted with the closed-form partials
//! of `g` to obtain parameter gradients.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::nn::{conv2d_backward, conv2d_forward, ConvGeom, Layer, Mode, Param, ParamKind};
use crate::{Error, Real, Result, Tensor};

pub const SIGMA_RANGE: (f64, f64) = (0.3, 20.0);
pub const F0_RANGE: (f64, f64) = (1e-3, 0.5);

/// Number of distinct (frequency, orientation) initialization pairs.
pub const INIT_PAIRS: usize = 40;

/// Column order of the `n x 5` parameter tensor.
pub const SIGMA: usize = 0;
pub const THETA: usize = 1;
pub const F0: usize = 2;
pub const PHI: usize = 3;
pub const GAMMA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborParams {
    pub sigma: f64,
    pub theta: f64,
    pub f0: f64,
    pub phi: f64,
    pub gamma: f64,
}

impl GaborParams {
    pub fn to_array(self) -> [f64; 5] {
        [self.sigma, self.theta, self.f0, self.phi, self.gamma]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            sigma: a[SIGMA],
            theta: a[THETA],
            f0: a[F0],
            phi: a[PHI],
            gamma: a[GAMMA],
        }
    }

    pub fn clamped(self) -> Self {
        Self {
            sigma: self.sigma.clamp(SIGMA_RANGE.0, SIGMA_RANGE.1),
            f0: self.f0.clamp(F0_RANGE.0, F0_RANGE.1),
            ..self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Clamps sigma and f0 in every row of an `n x 5` bank tensor.
pub fn clamp_bank<T: Real>(bank: &mut Tensor<T>) {
    for row in bank.data_mut().chunks_exact_mut(5) {
        row[SIGMA] = row[SIGMA].max(T::lit(SIGMA_RANGE.0)).min(T::lit(SIGMA_RANGE.1));
        row[F0] = row[F0].max(T::lit(F0_RANGE.0)).min(T::lit(F0_RANGE.1));
    }
}

struct Point<T> {
    value: T,
    /// d g / d (sigma, theta, f0, phi, gamma)
    partials: [T; 5],
}

fn evaluate<T: Real>(p: &[T], x: T, y: T) -> Point<T> {
    let (sigma, theta, f0, phi, gamma) = (p[SIGMA], p[THETA], p[F0], p[PHI], p[GAMMA]);
    let two = T::lit(2.0);
    let two_pi = T::lit(2.0 * PI);
    let (st, ct) = theta.sin_cos();
    let xr = x * ct + y * st;
    let yr = -x * st + y * ct;
    let s2 = sigma * sigma;
    let quad = xr * xr + gamma * gamma * yr * yr;
    let amp = T::one() / (two_pi * s2);
    let env = (-quad / (two * s2)).exp();
    let arg = two_pi * f0 * xr + phi;
    let (sa, ca) = arg.sin_cos();
    let value = amp * env * ca;
    let ae = amp * env;
    let d_sigma = value * (-two / sigma + quad / (s2 * sigma));
    // d x'/d theta = y', d y'/d theta = -x'
    let d_env_theta = -env * xr * yr * (T::one() - gamma * gamma) / s2;
    let d_theta = amp * (d_env_theta * ca - env * sa * two_pi * f0 * yr);
    let d_f0 = -ae * sa * two_pi * xr;
    let d_phi = -ae * sa;
    let d_gamma = -value * gamma * yr * yr / s2;
    Point {
        value,
        partials: [d_sigma, d_theta, d_f0, d_phi, d_gamma],
    }
}

fn offsets(size: usize) -> impl Iterator<Item = (usize, f64, f64)> {
    let half = (size / 2) as f64;
    (0..size * size).map(move |i| (i, (i % size) as f64 - half, (i / size) as f64 - half))
}

/// Materializes a `size x size` kernel (rows = y, columns = x).
pub fn gabor_kernel<T: Real>(p: &GaborParams, size: usize) -> Result<Tensor<T>> {
    if size.is_multiple_of(2) {
        return Err(Error::invalid(format!("Gabor kernel size {size} must be odd")));
    }
    let row: Vec<T> = p.to_array().iter().map(|&v| T::lit(v)).collect();
    let data = offsets(size).map(|(_, x, y)| evaluate(&row, T::lit(x), T::lit(y)).value).collect();
    Tensor::new(&[size, size], data)
}

/// Kernel values and the five partial-derivative maps for an `n x 5` bank.
/// Weights are `n x 1 x size x size`; partials are `n x 5 x size x size`.
fn materialize<T: Real>(bank: &Tensor<T>, size: usize, with_partials: bool) -> (Tensor<T>, Option<Vec<T>>) {
    let n = bank.dim(0);
    let area = size * size;
    let mut w = Vec::with_capacity(n * area);
    let mut parts = if with_partials {
        alloc::vec![T::zero(); n * 5 * area]
    } else {
        Vec::new()
    };
    for (k, row) in bank.data().chunks_exact(5).enumerate() {
        for (i, x, y) in offsets(size) {
            let pt = evaluate(row, T::lit(x), T::lit(y));
            w.push(pt.value);
            if with_partials {
                for (j, d) in pt.partials.iter().enumerate() {
                    parts[(k * 5 + j) * area + i] = *d;
                }
            }
        }
    }
    let w = Tensor::new(&[n, 1, size, size], w).expect("bank shape");
    (w, with_partials.then_some(parts))
}

/// A set of Gabor kernels with the layer geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    pub kernels: Vec<GaborParams>,
    pub kernel_size: usize,
    pub stride: usize,
    pub in_channels: usize,
}

impl GaborBank {
    /// Frequency/orientation grid initialization: pairs `(m, n)` with
    /// `m in 1..=5`, `n in 1..=8` in row-major order, kernel `k` taking pair
    /// `k mod 40`; `omega_m = (pi/2) * sqrt(2)^-m`, `f0 = omega / (2 pi)`,
    /// `theta_n = (pi/8)(n - 1)`, `sigma = pi / omega`, `gamma = 1`, `phi = 0`.
    pub fn init(n_kernels: usize) -> Result<Self> {
        if n_kernels == 0 {
            return Err(Error::invalid("Gabor bank needs at least one kernel"));
        }
        let kernels = (0..n_kernels)
            .map(|k| {
                let pair = k % INIT_PAIRS;
                let m = (pair / 8 + 1) as i32;
                let n = (pair % 8 + 1) as f64;
                let omega = PI / 2.0 * libm::pow(libm::sqrt(2.0), -f64::from(m));
                GaborParams {
                    sigma: PI / omega,
                    theta: PI / 8.0 * (n - 1.0),
                    f0: omega / (2.0 * PI),
                    phi: 0.0,
                    gamma: 1.0,
                }
            })
            .collect();
        Ok(Self {
            kernels,
            kernel_size: 7,
            stride: 2,
            in_channels: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.kernels.iter().flat_map(|p| p.to_array()).map(T::lit).collect();
        Tensor::new(&[self.kernels.len(), 5], data).expect("bank shape")
    }
}

/// 64-kernel bank as used by the model's first stage.
pub fn init_gabor_bank(n_kernels: usize) -> Result<GaborBank> {
    GaborBank::init(n_kernels)
}

/// Convolution layer whose kernels are generated from a learnable Gabor bank.
#[derive(Debug, Clone)]
pub struct GaborConv<T> {
    /// `n x 5` rows of `(sigma, theta, f0, phi, gamma)`.
    pub bank: Param<T>,
    pub kernel_size: usize,
    pub geom: ConvGeom,
    pub input_grad: bool,
    cache: Option<Tensor<T>>,
}

impl<T: Real> GaborConv<T> {
    pub fn new(name: impl Into<alloc::string::String>, bank: &GaborBank) -> Result<Self> {
        if bank.in_channels != 1 {
            return Err(Error::invalid("Gabor convolution supports a single input channel"));
        }
        if bank.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("Gabor kernel size must be odd"));
        }
        Ok(Self {
            bank: Param::new(name, ParamKind::Gabor, bank.to_tensor()),
            kernel_size: bank.kernel_size,
            geom: ConvGeom::new(bank.stride, bank.kernel_size / 2, 1),
            input_grad: false,
            cache: None,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.bank.value.dim(0)
    }

    pub fn kernels(&self) -> Vec<GaborParams> {
        self.bank
            .value
            .data()
            .chunks_exact(5)
            .map(|r| {
                let mut a = [0.0; 5];
                for (d, s) in a.iter_mut().zip(r) {
                    *d = s.as_f64();
                }
                GaborParams::from_array(a)
            })
            .collect()
    }

    /// Current kernels as an `n x 1 x k x k` weight tensor.
    pub fn weights(&self) -> Tensor<T> {
        materialize(&self.bank.value, self.kernel_size, false).0
    }

    /// Chain rule from a convolution weight gradient (`n x 1 x k x k`) to the
    /// `n x 5` parameter gradient.
    pub fn param_grad(&self, dw: &Tensor<T>) -> Tensor<T> {
        let (_, parts) = materialize(&self.bank.value, self.kernel_size, true);
        let parts = parts.expect("partials requested");
        let area = self.kernel_size * self.kernel_size;
        let n = self.out_channels();
        let mut g = alloc::vec![T::zero(); n * 5];
        for k in 0..n {
            let dwk = &dw.data()[k * area..(k + 1) * area];
            for j in 0..5 {
                let pj = &parts[(k * 5 + j) * area..(k * 5 + j + 1) * area];
                g[k * 5 + j] = dwk.iter().zip(pj).map(|(a, b)| *a * *b).sum();
            }
        }
        Tensor::new(&[n, 5], g).expect("bank shape")
    }
}

impl<T: Real> Layer<T> for GaborConv<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4()?;
        if c != 1 {
            return Err(Error::shape("gabor conv", x.shape(), &[0, 1, 0, 0]));
        }
        let y = conv2d_forward(x, &self.weights(), self.geom)?;
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("gabor conv: backward without training forward"))?;
        let w = self.weights();
        let (dx, dw) = conv2d_backward(&x, &w, dy, self.geom, self.input_grad)?;
        let g = self.param_grad(&dw);
        for (acc, d) in self.bank.grad.data_mut().iter_mut().zip(g.data()) {
            *acc += *d;
        }
        // Without an input gradient a placeholder is returned.
        Ok(dx.unwrap_or_else(|| Tensor::zeros(&[1])))
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.bank);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.bank);
    }
}
