//! AdamW with decoupled weight decay.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gabor::clamp_bank;
use crate::nn::{Param, ParamKind};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Per step, for every learnable parameter:
///
/// ```text
/// p <- p - lr * wd * p
/// m <- b1 m + (1 - b1) g;   v <- b2 v + (1 - b2) g^2
/// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
///
/// Gabor banks are clamped to their valid ranges afterwards. Buffers are
/// left alone. Moment state is keyed by parameter name.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    state: BTreeMap<String, Moments<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        if !(config.lr > 0.0) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::invalid("AdamW needs lr > 0 and betas in [0, 1)"));
        }
        if !(config.eps > 0.0) || !(config.weight_decay >= 0.0) {
            return Err(Error::invalid("AdamW needs eps > 0 and weight decay >= 0"));
        }
        Ok(Self {
            config,
            step: 0,
            state: BTreeMap::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Fails without touching any parameter if a
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        for p in params.iter() {
            if p.is_learnable() && !p.grad.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::lit(1.0 - libm::pow(c.beta1, f64::from(t)));
        let bc2 = T::lit(1.0 - libm::pow(c.beta2, f64::from(t)));
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        let decay = T::one() - T::lit(c.lr * c.weight_decay);
        for p in params.iter_mut() {
            if !p.is_learnable() {
                continue;
            }
            let n = p.value.len();
            let mom = self.state.entry(p.name.clone()).or_insert_with(|| Moments {
                m: alloc::vec![T::zero(); n],
                v: alloc::vec![T::zero(); n],
            });
            if mom.m.len() != n {
                return Err(Error::invalid(format!("optimizer state for {} has the wrong size", p.name)));
            }
            let Param { value, grad, .. } = &mut **p;
            for (((w, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(&mut mom.m).zip(&mut mom.v) {
                if c.weight_decay != 0.0 {
                    *w *= decay;
                }
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            }
            if p.kind == ParamKind::Gabor {
                clamp_bank(&mut p.value);
            }
            if !p.value.all_finite() {
                return Err(Error::NonFinite(format!("parameter {} after update", p.name)));
            }
        }
        Ok(())
    }
}
