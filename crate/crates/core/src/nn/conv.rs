use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Layer, Mode, Param};
use crate::rng::{standard_normal, Rng};
use crate::{Error, Real, Result, Tensor};

/// Stride, zero padding and group count of a 2D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeom {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self { stride, padding, groups }
    }

    pub fn out_size(&self, input: usize, kernel: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        (padded >= kernel && self.stride > 0).then(|| (padded - kernel) / self.stride + 1)
    }
}

struct Dims {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    cg_in: usize,
    cg_out: usize,
}

impl Dims {
    fn check<T: Real>(x: &Tensor<T>, w: &Tensor<T>, g: ConvGeom) -> Result<Self> {
        let (n, c_in, h, wd) = x.dims4()?;
        let (c_out, cg_in, kh, kw) = w.dims4()?;
        if g.groups == 0 || c_in % g.groups != 0 || c_out % g.groups != 0 {
            return Err(Error::invalid(format!(
                "conv2d: {c_in} input / {c_out} output channels not divisible by {} groups",
                g.groups
            )));
        }
        if cg_in != c_in / g.groups {
            return Err(Error::shape("conv2d", x.shape(), w.shape()));
        }
        let (ho, wo) = match (g.out_size(h, kh), g.out_size(wd, kw)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::shape("conv2d", x.shape(), w.shape())),
        };
        Ok(Self {
            n,
            c_in,
            h,
            w: wd,
            c_out,
            kh,
            kw,
            ho,
            wo,
            cg_in,
            cg_out: c_out / g.groups,
        })
    }

    fn k(&self) -> usize {
        self.cg_in * self.kh * self.kw
    }

    fn pointwise(&self, g: ConvGeom) -> bool {
        self.kh == 1 && self.kw == 1 && g.stride == 1 && g.padding == 0
    }
}

/// Unfolds input channels `ch0..ch0 + cg` of one image into `cols`
/// (`cg * kh * kw` rows by `ho * wo` columns).
fn im2col<T: Real>(img: &[T], d: &Dims, g: ConvGeom, ch0: usize, cols: &mut [T]) {
    let hw_out = d.ho * d.wo;
    for ci in 0..d.cg_in {
        let plane = &img[(ch0 + ci) * d.h * d.w..(ch0 + ci + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (ci * d.kh + ky) * d.kw + kx;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..d.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * d.wo..(oy + 1) * d.wo];
                    if iy < 0 || iy >= d.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= d.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into the image gradient.
fn col2im<T: Real>(cols: &[T], d: &Dims, g: ConvGeom, ch0: usize, img: &mut [T]) {
    let hw_out = d.ho * d.wo;
    for ci in 0..d.cg_in {
        let plane = &mut img[(ch0 + ci) * d.h * d.w..(ch0 + ci + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let row = (ci * d.kh + ky) * d.kw + kx;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..d.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for ox in 0..d.wo {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] += src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Grouped 2D cross-correlation of `x` (`N x C_in x H x W`) with `w`
/// (`C_out x C_in/groups x kh x kw`); no bias.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, geom: ConvGeom) -> Result<Tensor<T>> {
    let d = Dims::check(x, w, geom)?;
    let (hw_in, hw_out, k) = (d.h * d.w, d.ho * d.wo, d.k());
    let mut out = vec![T::zero(); d.n * d.c_out * hw_out];
    let mut cols = if d.pointwise(geom) {
        Vec::new()
    } else {
        vec![T::zero(); k * hw_out]
    };
    let (xd, wd) = (x.data(), w.data());
    for n in 0..d.n {
        let img = &xd[n * d.c_in * hw_in..(n + 1) * d.c_in * hw_in];
        for g in 0..geom.groups {
            let b: &[T] = if d.pointwise(geom) {
                &img[g * d.cg_in * hw_in..(g + 1) * d.cg_in * hw_in]
            } else {
                im2col(img, &d, geom, g * d.cg_in, &mut cols);
                &cols
            };
            let o = (n * d.c_out + g * d.cg_out) * hw_out;
            T::gemm(
                d.cg_out,
                k,
                hw_out,
                T::one(),
                &wd[g * d.cg_out * k..],
                (k, 1),
                b,
                (hw_out, 1),
                T::zero(),
                &mut out[o..o + d.cg_out * hw_out],
                (hw_out, 1),
            );
        }
    }
    Tensor::new(&[d.n, d.c_out, d.ho, d.wo], out)
}

/// Gradients of [`conv2d_forward`]: `(dL/dx, dL/dw)`. `dL/dx` is skipped
/// when `need_dx` is false.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    geom: ConvGeom,
    need_dx: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>)> {
    let d = Dims::check(x, w, geom)?;
    if dy.shape() != [d.n, d.c_out, d.ho, d.wo] {
        return Err(Error::shape("conv2d backward", dy.shape(), &[d.n, d.c_out, d.ho, d.wo]));
    }
    let (hw_in, hw_out, k) = (d.h * d.w, d.ho * d.wo, d.k());
    let pointwise = d.pointwise(geom);
    let mut dw = vec![T::zero(); w.len()];
    let mut dx = if need_dx { vec![T::zero(); x.len()] } else { Vec::new() };
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * hw_out] };
    let mut dcols = if pointwise || !need_dx {
        Vec::new()
    } else {
        vec![T::zero(); k * hw_out]
    };
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    for n in 0..d.n {
        let img = &xd[n * d.c_in * hw_in..(n + 1) * d.c_in * hw_in];
        for g in 0..geom.groups {
            let dyg = &dyd[(n * d.c_out + g * d.cg_out) * hw_out..][..d.cg_out * hw_out];
            let b: &[T] = if pointwise {
                &img[g * d.cg_in * hw_in..(g + 1) * d.cg_in * hw_in]
            } else {
                im2col(img, &d, geom, g * d.cg_in, &mut cols);
                &cols
            };
            // dW_g += dY_g . cols^T
            T::gemm(
                d.cg_out,
                hw_out,
                k,
                T::one(),
                dyg,
                (hw_out, 1),
                b,
                (1, hw_out),
                T::one(),
                &mut dw[g * d.cg_out * k..(g + 1) * d.cg_out * k],
                (k, 1),
            );
            if !need_dx {
                continue;
            }
            // dcols = W_g^T . dY_g
            let wg = &wd[g * d.cg_out * k..(g + 1) * d.cg_out * k];
            if pointwise {
                let o = n * d.c_in * hw_in + g * d.cg_in * hw_in;
                T::gemm(
                    k,
                    d.cg_out,
                    hw_out,
                    T::one(),
                    wg,
                    (1, k),
                    dyg,
                    (hw_out, 1),
                    T::zero(),
                    &mut dx[o..o + d.cg_in * hw_in],
                    (hw_out, 1),
                );
            } else {
                T::gemm(
                    k,
                    d.cg_out,
                    hw_out,
                    T::one(),
                    wg,
                    (1, k),
                    dyg,
                    (hw_out, 1),
                    T::zero(),
                    &mut dcols,
                    (hw_out, 1),
                );
                let dimg = &mut dx[n * d.c_in * hw_in..(n + 1) * d.c_in * hw_in];
                col2im(&dcols, &d, geom, g * d.cg_in, dimg);
            }
        }
    }
    let dx = if need_dx { Some(Tensor::new(x.shape(), dx)?) } else { None };
    Ok((dx, Tensor::new(w.shape(), dw)?))
}

/// Bias-free grouped convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub geom: ConvGeom,
    /// Skip the input gradient (first layer of a network).
    pub input_grad: bool,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    /// He-normal initialised weights, `std = sqrt(2 / fan_in)`.
    pub fn he_normal(name: impl Into<String>, c_in: usize, c_out: usize, kernel: usize, geom: ConvGeom, rng: &mut Rng) -> Self {
        let fan_in = c_in / geom.groups * kernel * kernel;
        let std = libm::sqrt(2.0 / fan_in as f64);
        let shape = [c_out, c_in / geom.groups, kernel, kernel];
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(std * standard_normal(rng))).collect();
        Self::from_weight(name, Tensor::new(&shape, data).expect("shape"), geom)
    }

    pub fn from_weight(name: impl Into<String>, weight: Tensor<T>, geom: ConvGeom) -> Self {
        Self {
            weight: Param::weight(name, weight),
            geom,
            input_grad: true,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight.value, self.geom)?;
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid(format!("{}: backward without training forward", self.weight.name)))?;
        let (dx, dw) = conv2d_backward(&x, &self.weight.value, dy, self.geom, self.input_grad)?;
        for (g, d) in self.weight.grad.data_mut().iter_mut().zip(dw.data()) {
            *g += *d;
        }
        Ok(dx.unwrap_or_else(|| Tensor::zeros(&[1])))
    }

    fn params<'a>(&'a self, out: &mut Vec<&'a Param<T>>) {
        out.push(&self.weight);
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param<T>>) {
        out.push(&mut self.weight);
    }
}
