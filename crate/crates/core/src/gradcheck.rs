//! Central finite differences for verifying analytic gradients.
//!
//! Relative error is `|a - n| / max(|a|, |n|, GRAD_FLOOR)`; the floor keeps
//! entries whose true gradient is essentially zero from dominating through
//! rounding noise in the numeric estimate.

use alloc::format;
use alloc::string::String;

use crate::{Real, Tensor};

pub const GRAD_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// `dL/dx` by central differences with step `h`, one element at a time.
pub fn numeric_grad<T: Real>(x: &Tensor<T>, h: f64, mut loss: impl FnMut(&Tensor<T>) -> f64) -> Tensor<T> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + T::lit(h);
        let plus = loss(&probe);
        probe.data_mut()[i] = orig - T::lit(h);
        let minus = loss(&probe);
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = T::lit((plus - minus) / (2.0 * h));
    }
    grad
}

/// Largest relative error between two gradient buffers, or a description of
/// the worst entry when it exceeds `tol`.
pub fn check_close<T: Real>(analytic: &[T], numeric: &[T], tol: f64) -> Result<f64, String> {
    if analytic.len() != numeric.len() {
        return Err(format!("length {} vs {}", analytic.len(), numeric.len()));
    }
    let mut worst = (0.0f64, 0usize);
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = relative_error(a.as_f64(), n.as_f64());
        if !(e <= worst.0) {
            worst = (e, i);
        }
    }
    if worst.0 <= tol {
        Ok(worst.0)
    } else {
        let i = worst.1;
        Err(format!(
            "entry {i}: analytic {} vs numeric {} (relative error {:.3e} > {tol:.1e})",
            analytic[i], numeric[i], worst.0
        ))
    }
}
