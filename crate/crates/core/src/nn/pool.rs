use alloc::vec;
use alloc::vec::Vec;

use super::{ConvGeom, Layer, Mode};
use crate::{Error, Real, Result, Tensor};

/// Max pooling with implicit `-inf` padding.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }
}

impl<T: Real> Layer<T> for MaxPool2d {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let geom = ConvGeom::new(self.stride, self.padding, 1);
        let (ho, wo) = match (geom.out_size(h, self.kernel), geom.out_size(w, self.kernel)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::invalid("max pool window larger than padded input")),
        };
        let xd = x.data();
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut arg = vec![0usize; out.len()];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut bi = base;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let i = base + iy as usize * w + ix as usize;
                            if xd[i] > best {
                                best = xd[i];
                                bi = i;
                            }
                        }
                    }
                    let o = (plane * ho + oy) * wo + ox;
                    out[o] = best;
                    arg[o] = bi;
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((arg, x.shape().to_vec()));
        }
        Tensor::new(&[n, c, ho, wo], out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (arg, shape) = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("max pool: backward without forward"))?;
        if arg.len() != dy.len() {
            return Err(Error::invalid("max pool: gradient size differs from forward output"));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&i, &g) in arg.iter().zip(dy.data()) {
            d[i] += g;
        }
        Ok(dx)
    }
}

/// Mean over the spatial axes: `N x C x H x W -> N x C`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    shape: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Real> Layer<T> for GlobalAvgPool {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let hw = h * w;
        let scale = T::one() / T::from_usize(hw).unwrap();
        let out = x.data().chunks_exact(hw).map(|p| p.iter().copied().sum::<T>() * scale).collect();
        self.shape = Some([n, c, h, w]);
        Tensor::new(&[n, c], out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.shape.ok_or_else(|| Error::invalid("global pool: backward without forward"))?;
        let hw = shape[2] * shape[3];
        if dy.len() * hw != shape.iter().product::<usize>() {
            return Err(Error::shape("global pool backward", dy.shape(), &shape));
        }
        let scale = T::one() / T::from_usize(hw).unwrap();
        let mut out = Vec::with_capacity(dy.len() * hw);
        for &g in dy.data() {
            out.extend(core::iter::repeat_n(g * scale, hw));
        }
        Tensor::new(&shape, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_close, numeric_grad};
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn max_pool_halves_and_picks_maxima() {
        let x = Tensor::<f64>::new(&[1, 1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let mut p = MaxPool2d::new(3, 2, 1);
        let y = p.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        let dx = p.backward(&Tensor::<f64>::ones(&[1, 1, 2, 2])).unwrap();
        assert_eq!(dx.sum_all(), 4.0);
        assert_eq!(dx.data()[15], 1.0);
    }

    #[test]
    fn pooling_gradients_match_finite_differences() {
        let mut rng = seeded(7);
        let x = Tensor::<f64>::new(&[2, 3, 7, 6], (0..252).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut mp = MaxPool2d::new(3, 2, 1);
        let y = mp.forward(&x, Mode::Train).unwrap();
        let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = mp.backward(&Tensor::new(y.shape(), r.clone()).unwrap()).unwrap();
        let n = numeric_grad(&x, 1e-6, |xp| {
            let y = MaxPool2d::new(3, 2, 1).forward(xp, Mode::Eval).unwrap();
            y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
        });
        check_close(dx.data(), n.data(), 1e-4).unwrap();

        let mut gap = GlobalAvgPool::new();
        let y = gap.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = gap.backward(&Tensor::new(&[2, 3], r.clone()).unwrap()).unwrap();
        let n = numeric_grad(&x, 1e-6, |xp| {
            let y = GlobalAvgPool::new().forward(xp, Mode::Eval).unwrap();
            y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
        });
        check_close(dx.data(), n.data(), 1e-4).unwrap();
    }
}
