//! Numerical core of the GSE ResNeXt underwater acoustic classifier.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds without the standard library (an allocator is required). File
//! formats, audio IO, the training driver and the command-line tool live in
//! the `gse` companion crate.
//!
//! Layout:
//!
//! * [`tensor`]: dense row-major tensors generic over [`Real`] (`f32` for
//!   training, `f64` for gradient checks).
//! * [`signal`]: audio clips, segmentation, the constant-Q filterbank, model
//!   input resizing and SpecAugment masking.
//! * [`gabor`]: the learnable 2D Gabor convolution layer.
//! * [`nn`]: layers with analytic backward passes and the GSE ResNeXt model.
//! * [`protocol`]: fold plans for the three evaluation tasks and the
//!   temporal-proximity experiment grids.
//! * [`optim`], [`metrics`]: AdamW, confusion matrices, MCC and the
//!   steady-state epoch detector.
//! * [`gradcheck`]: central finite-difference helpers used by the gradient
//!   suites.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod real;

pub mod gabor;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod protocol;
pub mod rng;
pub mod signal;
pub mod tensor;

pub use error::{Error, Result};
pub use real::{Precision, Real};
pub use tensor::Tensor;
