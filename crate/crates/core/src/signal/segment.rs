use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::{Error, Result};

/// Fixed-length windowing of recordings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Segmentation {
    pub seg_seconds: f64,
    pub overlap_seconds: f64,
}

impl Default for Segmentation {
    fn default() -> Self {
        Self {
            seg_seconds: 30.0,
            overlap_seconds: 15.0,
        }
    }
}

impl Segmentation {
    pub fn without_overlap(self) -> Self {
        Self {
            overlap_seconds: 0.0,
            ..self
        }
    }

    pub fn hop_seconds(&self) -> f64 {
        self.seg_seconds - self.overlap_seconds
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.seg_seconds > 0.0) || !(self.overlap_seconds >= 0.0) || !(self.hop_seconds() > 0.0) {
            return Err(Error::invalid(alloc::format!(
                "segmentation needs 0 <= overlap < length, got {self:?}"
            )));
        }
        Ok(())
    }
}

const OFFSET_EPS: f64 = 1e-9;

/// Start offsets (seconds, relative to the span start) of every full segment
/// inside a span of `duration` seconds. Offsets are `k * hop`; a trailing
/// remainder shorter than one segment is dropped.
pub fn segment_offsets(duration: f64, seg: Segmentation) -> Result<Vec<f64>> {
    seg.validate()?;
    let hop = seg.hop_seconds();
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let start = f64::from(k) * hop;
        if start + seg.seg_seconds > duration + OFFSET_EPS {
            break;
        }
        out.push(start);
        k += 1;
    }
    Ok(out)
}

/// Cuts `clip` into overlapping fixed-length segments, each carrying its
/// absolute offset within the source recording.
pub fn segment(clip: &AudioClip, seg: Segmentation) -> Result<Vec<AudioClip>> {
    seg.validate()?;
    let sr = f64::from(clip.sample_rate);
    let seg_len = libm::round(seg.seg_seconds * sr) as usize;
    if clip.samples.len() < seg_len {
        return Err(Error::ClipTooShort {
            required: seg_len,
            actual: clip.samples.len(),
        });
    }
    let offsets = segment_offsets(clip.duration(), seg)?;
    Ok(offsets
        .into_iter()
        .map(|off| {
            let start = (libm::round(off * sr) as usize).min(clip.samples.len() - seg_len);
            let mut meta = clip.meta.clone();
            meta.start_offset = clip.meta.start_offset + off;
            AudioClip {
                samples: clip.samples[start..start + seg_len].to_vec(),
                sample_rate: clip.sample_rate,
                meta,
            }
        })
        .collect())
}
