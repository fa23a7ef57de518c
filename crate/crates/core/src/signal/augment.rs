use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::Tensor;

/// Frequency (row) and time (column) masking. Each mask width is drawn
/// uniformly from `min..=max`; positions are uniform over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecAugmentPolicy {
    pub freq_masks: usize,
    pub min_freq_width: usize,
    pub max_freq_width: usize,
    pub time_masks: usize,
    pub min_time_width: usize,
    pub max_time_width: usize,
}

impl Default for SpecAugmentPolicy {
    fn default() -> Self {
        Self {
            freq_masks: 2,
            min_freq_width: 0,
            max_freq_width: 20,
            time_masks: 2,
            min_time_width: 0,
            max_time_width: 40,
        }
    }
}

impl SpecAugmentPolicy {
    pub fn none() -> Self {
        Self {
            freq_masks: 0,
            time_masks: 0,
            ..Self::default()
        }
    }

    /// The default policy with widths scaled from a 256-pixel image to `size`.
    pub fn scaled_to(size: usize) -> Self {
        let d = Self::default();
        let scale = |w: usize| (w * size).div_ceil(256);
        Self {
            max_freq_width: scale(d.max_freq_width),
            max_time_width: scale(d.max_time_width),
            ..d
        }
    }
}

/// Masks rows and columns of a `1 x H x W` image with the image mean.
pub fn spec_augment(img: &Tensor<f32>, policy: &SpecAugmentPolicy, rng: &mut Rng) -> Tensor<f32> {
    let mut out = img.clone();
    if policy.freq_masks == 0 && policy.time_masks == 0 {
        return out;
    }
    let shape = img.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let fill = img.mean_all();
    let data = out.data_mut();
    let draw = |min: usize, max: usize, extent: usize, rng: &mut Rng| {
        let width = rng.random_range(min..=max.max(min)).min(extent);
        let start = rng.random_range(0..=extent - width);
        (start, width)
    };
    for _ in 0..policy.freq_masks {
        let (r0, n) = draw(policy.min_freq_width, policy.max_freq_width, h, rng);
        for r in r0..r0 + n {
            data[r * w..(r + 1) * w].fill(fill);
        }
    }
    for _ in 0..policy.time_masks {
        let (c0, n) = draw(policy.min_time_width, policy.max_time_width, w, rng);
        for r in 0..h {
            data[r * w + c0..r * w + c0 + n].fill(fill);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec::Vec;

    fn image(seed: u64) -> Tensor<f32> {
        let mut rng = seeded(seed);
        let d: Vec<f32> = (0..256 * 256).map(|_| rng.random_range(-3.0..3.0)).collect();
        Tensor::new(&[1, 256, 256], d).unwrap()
    }

    #[test]
    fn zero_mask_policy_is_identity() {
        let img = image(1);
        assert_eq!(spec_augment(&img, &SpecAugmentPolicy::none(), &mut seeded(2)), img);
    }

    #[test]
    fn one_frequency_mask_changes_full_rows() {
        let img = image(3);
        for h in [1usize, 7, 20] {
            let policy = SpecAugmentPolicy {
                freq_masks: 1,
                min_freq_width: h,
                max_freq_width: h,
                time_masks: 0,
                ..SpecAugmentPolicy::default()
            };
            let out = spec_augment(&img, &policy, &mut seeded(h as u64));
            let changed = out.data().iter().zip(img.data()).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 256 * h);
        }
    }

    #[test]
    fn same_seed_same_masks() {
        let img = image(4);
        let p = SpecAugmentPolicy::default();
        assert_eq!(spec_augment(&img, &p, &mut seeded(9)), spec_augment(&img, &p, &mut seeded(9)));
        assert_ne!(spec_augment(&img, &p, &mut seeded(9)), img);
    }

    #[test]
    fn scaled_policy_keeps_proportions() {
        let p = SpecAugmentPolicy::scaled_to(64);
        assert_eq!((p.max_freq_width, p.max_time_width), (5, 10));
    }
}
