//! Constant-Q spectrogram as a direct time-domain filterbank.
//!
//! Bin `k` has centre frequency `f_min * 2^(k / bins_per_octave)` and a
//! Hann-windowed complex kernel of `ceil(Q * sr / f_k)` samples, where
//! `Q = 1 / (2^(1 / bins_per_octave) - 1)`. Frames are spaced `hop` samples
//! apart and span the longest kernel; shorter kernels are centred in the
//! frame. Output cells are `20 log10(|X| + 1e-10)`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AudioClip, ClipMeta};
use crate::{Error, Result, Tensor};

/// Magnitude floor added before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CqtParams {
    pub sample_rate: u32,
    pub hop_seconds: f64,
    pub f_min: f64,
    /// Nominal upper frequency. The bin layout is fixed by `f_min`, `n_bins`
    /// and `bins_per_octave`; this field only takes part in validation.
    pub f_max: f64,
    pub n_bins: usize,
    pub bins_per_octave: usize,
}

impl Default for CqtParams {
    fn default() -> Self {
        Self {
            sample_rate: 32_000,
            hop_seconds: 0.025,
            f_min: 10.0,
            f_max: 16_000.0,
            n_bins: 255,
            bins_per_octave: 24,
        }
    }
}

impl CqtParams {
    pub fn quality(&self) -> f64 {
        1.0 / (libm::exp2(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    pub fn center_frequency(&self, bin: usize) -> f64 {
        self.f_min * libm::exp2(bin as f64 / self.bins_per_octave as f64)
    }

    /// Fractional bin position of frequency `f`.
    pub fn bin_of(&self, f: f64) -> f64 {
        self.bins_per_octave as f64 * libm::log2(f / self.f_min)
    }

    pub fn hop_samples(&self) -> usize {
        libm::round(self.hop_seconds * f64::from(self.sample_rate)) as usize
    }

    pub fn kernel_len(&self, bin: usize) -> usize {
        libm::ceil(self.quality() * f64::from(self.sample_rate) / self.center_frequency(bin)) as usize
    }

    pub fn longest_kernel(&self) -> usize {
        self.kernel_len(0)
    }

    pub fn n_frames(&self, n_samples: usize) -> Option<usize> {
        let window = self.longest_kernel();
        (n_samples >= window).then(|| (n_samples - window) / self.hop_samples() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = f64::from(self.sample_rate) / 2.0;
        let top_edge = self.f_min * libm::exp2(self.n_bins as f64 / self.bins_per_octave as f64);
        if self.sample_rate == 0 || self.n_bins == 0 || self.bins_per_octave == 0 || !(self.f_min > 0.0) || !(self.f_max > self.f_min) {
            return Err(Error::invalid(alloc::format!("invalid CQT parameters {self:?}")));
        }
        if top_edge > nyquist {
            return Err(Error::invalid(alloc::format!(
                "top CQT bin edge {top_edge:.1} Hz exceeds Nyquist {nyquist} Hz"
            )));
        }
        if self.hop_samples() == 0 {
            return Err(Error::invalid("CQT hop rounds to zero samples"));
        }
        Ok(())
    }
}

/// Log-magnitude constant-Q image, `n_bins x n_frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Tensor<f32>,
    pub params: CqtParams,
    pub meta: ClipMeta,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.dim(0)
    }

    pub fn n_frames(&self) -> usize {
        self.values.dim(1)
    }

    /// Mean log-magnitude per bin across frames.
    pub fn bin_profile(&self) -> Vec<f64> {
        let (bins, frames) = (self.n_bins(), self.n_frames());
        let d = self.values.data();
        (0..bins)
            .map(|k| d[k * frames..(k + 1) * frames].iter().map(|&v| f64::from(v)).sum::<f64>() / frames as f64)
            .collect()
    }
}

struct Kernel {
    offset: usize,
    re: Vec<f32>,
    im: Vec<f32>,
}

/// Precomputed kernels for one parameter set; reuse across clips.
pub struct CqtFilterbank {
    params: CqtParams,
    kernels: Vec<Kernel>,
    window: usize,
    hop: usize,
}

impl CqtFilterbank {
    pub fn new(params: CqtParams) -> Result<Self> {
        params.validate()?;
        let window = params.longest_kernel();
        let sr = f64::from(params.sample_rate);
        let kernels = (0..params.n_bins)
            .map(|k| {
                let len = params.kernel_len(k);
                let f = params.center_frequency(k);
                let hann: Vec<f64> = (0..len).map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64)).collect();
                let norm: f64 = hann.iter().sum();
                let (mut re, mut im) = (Vec::with_capacity(len), Vec::with_capacity(len));
                for (n, w) in hann.iter().enumerate() {
                    let phase = -2.0 * PI * f * n as f64 / sr;
                    re.push((w * libm::cos(phase) / norm) as f32);
                    im.push((w * libm::sin(phase) / norm) as f32);
                }
                Kernel {
                    offset: (window - len) / 2,
                    re,
                    im,
                }
            })
            .collect();
        Ok(Self {
            params,
            kernels,
            window,
            hop: params.hop_samples(),
        })
    }

    pub fn params(&self) -> &CqtParams {
        &self.params
    }

    pub fn transform(&self, clip: &AudioClip) -> Result<Spectrogram> {
        if clip.sample_rate != self.params.sample_rate {
            return Err(Error::invalid(alloc::format!(
                "clip sample rate {} does not match CQT rate {}",
                clip.sample_rate,
                self.params.sample_rate
            )));
        }
        let x = &clip.samples;
        let frames = self.params.n_frames(x.len()).ok_or(Error::ClipTooShort {
            required: self.window,
            actual: x.len(),
        })?;
        let bins = self.kernels.len();
        let mut out = vec![0f32; bins * frames];
        for j in 0..frames {
            let start = j * self.hop;
            for (k, ker) in self.kernels.iter().enumerate() {
                let s = start + ker.offset;
                let (re, im) = dot2(&x[s..s + ker.re.len()], &ker.re, &ker.im);
                let mag = libm::sqrt(re * re + im * im);
                out[k * frames + j] = (20.0 * libm::log10(mag + LOG_FLOOR)) as f32;
            }
        }
        Ok(Spectrogram {
            values: Tensor::new(&[bins, frames], out)?,
            params: self.params,
            meta: clip.meta.clone(),
        })
    }
}

/// `(x . a, x . b)` with lane-split accumulators so the loop vectorizes.
fn dot2(x: &[f32], a: &[f32], b: &[f32]) -> (f64, f64) {
    const LANES: usize = 8;
    let mut acc_a = [0f32; LANES];
    let mut acc_b = [0f32; LANES];
    let chunks = x.len() / LANES;
    for c in 0..chunks {
        let i = c * LANES;
        let xs = &x[i..i + LANES];
        let as_ = &a[i..i + LANES];
        let bs = &b[i..i + LANES];
        for l in 0..LANES {
            acc_a[l] += xs[l] * as_[l];
            acc_b[l] += xs[l] * bs[l];
        }
    }
    let mut ra: f64 = acc_a.iter().map(|&v| f64::from(v)).sum();
    let mut rb: f64 = acc_b.iter().map(|&v| f64::from(v)).sum();
    for i in chunks * LANES..x.len() {
        ra += f64::from(x[i] * a[i]);
        rb += f64::from(x[i] * b[i]);
    }
    (ra, rb)
}

/// One-shot transform; build a [`CqtFilterbank`] when processing many clips.
pub fn cqt(clip: &AudioClip, params: CqtParams) -> Result<Spectrogram> {
    CqtFilterbank::new(params)?.transform(clip)
}
