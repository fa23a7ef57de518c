use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Vessel classes of the four-class problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Tug,
    Passenger,
    Cargo,
    Tanker,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [Self::Tug, Self::Passenger, Self::Cargo, Self::Tanker];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tug => "tug",
            Self::Passenger => "passenger",
            Self::Cargo => "cargo",
            Self::Tanker => "tanker",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(alloc::format!("unknown class label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub recording_id: String,
    pub class_label: ClassLabel,
    /// Seconds from the start of the source recording.
    pub start_offset: f64,
    pub vessel_id: Option<String>,
}

/// A labelled mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub meta: ClipMeta,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, meta: ClipMeta) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::Empty("audio clip"));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::invalid(alloc::format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
            meta,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Copy with every sample multiplied by `gain`, without range checks.
    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            ..self.clone()
        }
    }
}
