//! Audio-side processing: clips and their segmentation, the constant-Q
//! filterbank, conversion of spectrograms into model inputs, and SpecAugment.

mod augment;
mod clip;
mod cqt;
mod image;
mod segment;

pub use augment::{spec_augment, SpecAugmentPolicy};
pub use clip::{AudioClip, ClassLabel, ClipMeta};
pub use cqt::{cqt, CqtFilterbank, CqtParams, Spectrogram, LOG_FLOOR};
pub use image::{bilinear_resize, image_input, standardize, to_model_input, VARIANCE_FLOOR};
pub use segment::{segment, segment_offsets, Segmentation};
