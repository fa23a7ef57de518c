//! Dense row-major tensors of rank 1 to 4.
//!
//! Operations exposed here take inputs by reference and return new tensors;
//! any result containing NaN or an infinity is reported as
//! [`Error::NonFinite`] instead of being returned. Layers in [`crate::nn`]
//! work on the raw buffers directly for speed and check finiteness at model
//! boundaries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result};

pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Max,
    Exp,
    Log,
    Relu,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul | Self::Max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
    /// Index of the maximum, flattened row-major over the reduced axes.
    /// Ties resolve to the lowest index.
    ArgMax,
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("rank must be 1..={MAX_RANK}"),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "dimensions must be positive".into(),
        });
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        validate_shape(shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expects {len} elements, got {}", data.len()),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        validate_shape(shape).expect("valid shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Shape as `(batch, channels, height, width)`; fails unless rank 4.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected (batch, channel, height, width)".into(),
            }),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn into_reshaped(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.into()))
        }
    }

    fn finite(self, context: &str) -> Result<Self> {
        self.ensure_finite(context)?;
        Ok(self)
    }

    /// Matrix product of an `M x K` and a `K x N` tensor.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k, k2, n) = match (self.shape.as_slice(), rhs.shape.as_slice()) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => return Err(Error::shape("matmul", &self.shape, &rhs.shape)),
        };
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &rhs.shape));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &self.data,
            (k, 1),
            &rhs.data,
            (n, 1),
            T::zero(),
            &mut out,
            (n, 1),
        );
        Self::new(&[m, n], out)?.finite("matmul")
    }

    /// Applies `op` per element. Binary ops take `rhs` of the same shape, a
    /// single-element tensor, or a tensor whose shape is a suffix of `self`'s
    /// (repeated along the leading axes).
    pub fn elementwise(&self, op: Elementwise, rhs: Option<&Self>) -> Result<Self> {
        let data: Vec<T> = if op.is_binary() {
            let rhs = rhs.ok_or_else(|| Error::invalid(format!("{op:?} needs a second operand")))?;
            let f = |a: T, b: T| match op {
                Elementwise::Add => a + b,
                Elementwise::Sub => a - b,
                Elementwise::Mul => a * b,
                Elementwise::Max => a.max(b),
                _ => unreachable!(),
            };
            if rhs.len() == 1 {
                let b = rhs.data[0];
                self.data.iter().map(|&a| f(a, b)).collect()
            } else if self.shape.ends_with(&rhs.shape) {
                self.data.iter().zip(rhs.data.iter().cycle()).map(|(&a, &b)| f(a, b)).collect()
            } else {
                return Err(Error::shape("elementwise", &self.shape, &rhs.shape));
            }
        } else {
            if rhs.is_some() {
                return Err(Error::invalid(format!("{op:?} is unary")));
            }
            let f = |a: T| match op {
                Elementwise::Exp => a.exp(),
                Elementwise::Log => a.ln(),
                Elementwise::Relu => a.max(T::zero()),
                _ => unreachable!(),
            };
            self.data.iter().map(|&a| f(a)).collect()
        };
        Self::new(&self.shape, data)?.finite("elementwise")
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.elementwise(Elementwise::Add, Some(rhs))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.elementwise(Elementwise::Sub, Some(rhs))
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.elementwise(Elementwise::Mul, Some(rhs))
    }

    pub fn relu(&self) -> Result<Self> {
        self.elementwise(Elementwise::Relu, None)
    }

    pub fn exp(&self) -> Result<Self> {
        self.elementwise(Elementwise::Exp, None)
    }

    pub fn ln(&self) -> Result<Self> {
        self.elementwise(Elementwise::Log, None)
    }

    /// Reduces over `axes`, which are removed from the output shape. Reducing
    /// every axis yields a single-element tensor of shape `[1]`.
    pub fn reduce(&self, op: Reduction, axes: &[usize]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("reduce: no axes given"));
        }
        let rank = self.rank();
        let mut reduced = [false; MAX_RANK];
        for &a in axes {
            if a >= rank || reduced[a] {
                return Err(Error::invalid(format!("reduce: invalid axis {a} for shape {:?}", self.shape)));
            }
            reduced[a] = true;
        }

        let mut out_shape: Vec<usize> = (0..rank).filter(|&a| !reduced[a]).map(|a| self.shape[a]).collect();
        let red_count: usize = axes.iter().map(|&a| self.shape[a]).product();
        let out_len: usize = out_shape.iter().product();
        if out_shape.is_empty() {
            out_shape.push(1);
        }

        // Row-major strides of the kept and reduced sub-spaces.
        let mut kept_stride = [0usize; MAX_RANK];
        let mut red_stride = [0usize; MAX_RANK];
        let (mut ks, mut rs) = (1usize, 1usize);
        for a in (0..rank).rev() {
            if reduced[a] {
                red_stride[a] = rs;
                rs *= self.shape[a];
            } else {
                kept_stride[a] = ks;
                ks *= self.shape[a];
            }
        }

        let mut acc = vec![T::zero(); out_len];
        let mut best = vec![T::neg_infinity(); out_len];
        let mut best_idx = vec![0usize; out_len];
        let mut idx = [0usize; MAX_RANK];
        for &v in &self.data {
            let (mut o, mut r) = (0, 0);
            for a in 0..rank {
                if reduced[a] {
                    r += idx[a] * red_stride[a];
                } else {
                    o += idx[a] * kept_stride[a];
                }
            }
            match op {
                Reduction::Sum | Reduction::Mean => acc[o] += v,
                Reduction::Max | Reduction::ArgMax => {
                    // Strict comparison keeps the first (lowest) index on ties;
                    // row-major iteration visits reduced indices in order.
                    if v > best[o] {
                        best[o] = v;
                        best_idx[o] = r;
                    }
                }
            }
            for a in (0..rank).rev() {
                idx[a] += 1;
                if idx[a] < self.shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }

        let data = match op {
            Reduction::Sum => acc,
            Reduction::Mean => {
                let n = T::from_usize(red_count).expect("count fits");
                acc.into_iter().map(|v| v / n).collect()
            }
            Reduction::Max => best,
            Reduction::ArgMax => best_idx.into_iter().map(|i| T::from_usize(i).expect("index fits")).collect(),
        };
        Self::new(&out_shape, data)?.finite("reduce")
    }

    pub fn sum_all(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean_all(&self) -> T {
        self.sum_all() / T::from_usize(self.len()).expect("len fits")
    }

    /// Slices the leading (batch) axis: items `start..end`.
    pub fn slice_batch(&self, start: usize, end: usize) -> Result<Self> {
        let n = self.shape[0];
        if start >= end || end > n {
            return Err(Error::invalid(format!("batch slice {start}..{end} of {n}")));
        }
        let item: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self::new(&shape, self.data[start * item..end * item].to_vec())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Self]) -> Result<Self> {
        let first = items.first().ok_or(Error::Empty("stack"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &t.shape));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = Vec::with_capacity(first.rank() + 1);
        shape.push(items.len());
        shape.extend_from_slice(&first.shape);
        Self::new(&shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let a = t(&[2, 2], &[1., 0., 0., 1.]);
        let b = t(&[2, 2], &[3., 4., 5., 6.]);
        assert_eq!(a.matmul(&b).unwrap(), b);
        let c = t(&[1, 2], &[1., 2.]).matmul(&t(&[2, 1], &[3., 4.])).unwrap();
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = crate::rng::seeded(5);
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = t(&[m, k], &a).matmul(&t(&[k, n], &b)).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                let g = got.data()[i * n + j];
                assert!((g - s).abs() <= 1e-6 * s.abs().max(1e-12), "{g} vs {s}");
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = t(&[2, 3], &[0.; 6]).matmul(&t(&[2, 3], &[0.; 6])).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[3], &[-1., 0., 2.]).relu().unwrap().data(), &[0., 0., 2.]);
        assert_eq!(t(&[2], &[1., 2.]).add(&t(&[2], &[3., 4.])).unwrap().data(), &[4., 6.]);
        assert_eq!(t(&[1], &[0.]).exp().unwrap().data(), &[1.]);
        let bias = t(&[2], &[10., 20.]);
        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(x.add(&bias).unwrap().data(), &[11., 22., 13., 24.]);
        assert_eq!(
            x.elementwise(Elementwise::Max, Some(&t(&[1], &[2.5]))).unwrap().data(),
            &[2.5, 2.5, 3., 4.]
        );
    }

    #[test]
    fn elementwise_rejects_bad_broadcast_and_non_finite() {
        let x = t(&[2, 3], &[1.; 6]);
        assert!(x.add(&t(&[2], &[1., 1.])).is_err());
        assert!(matches!(t(&[1], &[0.]).ln(), Err(Error::NonFinite(_))));
    }

    #[test]
    fn reduce_examples() {
        let m = t(&[2, 2], &[1., 3., 5., 7.]);
        assert_eq!(m.reduce(Reduction::Mean, &[0, 1]).unwrap().data(), &[4.]);
        assert_eq!(m.reduce(Reduction::Sum, &[0]).unwrap().data(), &[6., 10.]);
        assert_eq!(m.reduce(Reduction::Max, &[1]).unwrap().data(), &[3., 7.]);
        let v = t(&[3], &[0.2, 0.9, 0.9]);
        assert_eq!(v.reduce(Reduction::ArgMax, &[0]).unwrap().data(), &[1.]);
        let ones = Tensor::<f64>::ones(&[2, 3, 4, 5]);
        assert_eq!(ones.reduce(Reduction::Sum, &[0, 1, 2, 3]).unwrap().data(), &[120.]);
        assert!(m.reduce(Reduction::Sum, &[]).is_err());
        assert!(m.reduce(Reduction::Sum, &[2]).is_err());
    }

    #[test]
    fn identity_times_a_is_exact() {
        let mut rng = crate::rng::seeded(9);
        let a: Vec<f32> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = Tensor::new(&[4, 3], a).unwrap();
        assert_eq!(Tensor::eye(4).matmul(&a).unwrap(), a);
    }

    proptest! {
        #[test]
        fn sum_is_independent_of_axis_order(
            dims in proptest::collection::vec(1usize..4, 4),
            seed in any::<u64>(),
            perm in Just([2usize, 0, 3, 1]).prop_shuffle(),
        ) {
            let mut rng = crate::rng::seeded(seed);
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Tensor::new(&dims, data.clone()).unwrap();
            let axes = &perm[..3];
            let mut sorted = axes.to_vec();
            sorted.sort_unstable();
            let a = x.reduce(Reduction::Sum, axes).unwrap();
            let b = x.reduce(Reduction::Sum, &sorted).unwrap();
            for (p, q) in a.data().iter().zip(b.data()) {
                prop_assert!((p - q).abs() <= 1e-6 * p.abs().max(1.0));
            }
            // Inputs are untouched.
            prop_assert_eq!(x.data(), data.as_slice());
        }
    }
}
