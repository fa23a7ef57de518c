use alloc::vec::Vec;

use crate::{Error, Real, Result, Tensor};

/// Row-wise softmax of an `N x K` tensor, stabilized by max subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::InvalidShape {
            shape: logits.shape().to_vec(),
            reason: "softmax expects N x K logits".into(),
        });
    }
    let k = logits.dim(1);
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: T = e.iter().copied().sum();
        out.extend(e.into_iter().map(|v| v / s));
    }
    Tensor::new(logits.shape(), out)
}

/// Mean negative log-likelihood over the batch and its gradient with respect
/// to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let p = softmax(logits)?;
    let (n, k) = (logits.dim(0), logits.dim(1));
    if labels.len() != n {
        return Err(Error::invalid(alloc::format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_classes: k,
        });
    }
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut loss = T::zero();
    let mut grad = p.into_data();
    for (i, &y) in labels.iter().enumerate() {
        let row = &mut grad[i * k..(i + 1) * k];
        // log p_y via log-sum-exp on the raw logits for accuracy near 0.
        let lrow = &logits.data()[i * k..(i + 1) * k];
        let m = lrow.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + lrow.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss += lse - lrow[y];
        row[y] -= T::one();
        for g in row.iter_mut() {
            *g *= inv_n;
        }
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, Tensor::new(&[n, k], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_close, numeric_grad};
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (l, _) = softmax_cross_entropy(&Tensor::<f64>::full(&[3, 4], 0.7), &[0, 1, 3]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn saturated_logits_give_tiny_loss() {
        let logits = Tensor::<f64>::from_f64(&[2, 4], &[20., 0., 0., 0., 0., 0., 20., 0.]).unwrap();
        let (l, _) = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        assert!(l < 1e-8 && l > 0.0);
    }

    #[test]
    fn rows_sum_to_one_and_labels_checked() {
        let mut rng = seeded(1);
        let logits = Tensor::<f64>::new(&[5, 4], (0..20).map(|_| rng.random_range(-30.0..30.0)).collect()).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 1, 2, 3, 4]),
            Err(Error::LabelOutOfRange { label: 4, .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(2);
        for _ in 0..10 {
            let logits = Tensor::<f64>::new(&[3, 4], (0..12).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let labels = [rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4)];
            let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
            let n = numeric_grad(&logits, 1e-6, |l| softmax_cross_entropy(l, &labels).unwrap().0);
            for (a, b) in g.data().iter().zip(n.data()) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
            check_close(g.data(), n.data(), 1e-4).unwrap();
        }
    }
}
