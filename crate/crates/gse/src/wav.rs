//! RIFF/WAVE reading (PCM16 or float32, first channel) and PCM16 writing.

use std::path::Path;

use gse_core::signal::{AudioClip, ClipMeta};

use crate::error::{GseError, Result};

const PCM16_SCALE: f32 = 32768.0;

pub fn load_wav(path: &Path, meta: ClipMeta) -> Result<AudioClip> {
    let wav_err = |source| GseError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels.max(1));
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| f32::from(v) / PCM16_SCALE))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v.clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(GseError::format(path, format!("unsupported encoding {fmt:?} {bits}-bit")));
        }
    };
    if samples.is_empty() {
        return Err(GseError::format(path, "zero-length audio"));
    }
    Ok(AudioClip::new(samples, spec.sample_rate, meta)?)
}

/// Duration in seconds from the header alone.
pub fn wav_duration(path: &Path) -> Result<f64> {
    let reader = hound::WavReader::open(path).map_err(|source| GseError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(f64::from(reader.duration()) / f64::from(reader.spec().sample_rate))
}

/// Mono PCM16; samples are rounded to the nearest step of 1/32768.
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| GseError::io(dir, e))?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| GseError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let q = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
