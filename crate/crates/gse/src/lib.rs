//! File formats, audio IO, the synthetic ship-noise corpus, the training
//! driver and the reporting used by the `gse` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod gset;
pub mod manifest;
pub mod report;
pub mod synth;
pub mod train;
pub mod wav;

pub use error::{GseError, Result};
