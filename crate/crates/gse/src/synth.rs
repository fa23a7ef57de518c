//! Synthetic ship-radiated noise.
//!
//! A recording is the sum of a propeller blade-rate comb, engine tonals and
//! tilted Gaussian broadband noise, propagated to a receiver whose range
//! follows a piecewise-linear track. Propagation loss is
//! `20 log10(r) + 0.05 (f/1000)^2 r/1000` dB (spherical spreading plus
//! absorption in dB/km), applied frame by frame in the frequency domain with
//! 50% overlapped periodic Hann windows. White ambient noise at a fixed level
//! is added at the receiver, then the clip is peak-normalized.

use std::f64::consts::PI;
use std::path::Path;

use gse_core::rng::{derive_seed, seeded, standard_normal, Rng};
use gse_core::signal::{AudioClip, ClassLabel, ClipMeta};
use rand::Rng as _;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{GseError, Result};

const FRAME: usize = 2048;
/// Peak level after normalization.
pub const PEAK: f64 = 0.95;

/// Parameters of one synthetic vessel recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProfile {
    pub class_label: ClassLabel,
    /// Shaft rotation rate in Hz at the start of the recording.
    pub shaft_rate: f64,
    pub n_blades: u32,
    /// Number of blade-rate multiples in the comb.
    pub comb_harmonics: usize,
    /// Amplitude (at 1 m) of the first comb line; line `h` has `level / sqrt(h)`.
    pub comb_level: f64,
    /// `(frequency Hz, amplitude at 1 m)` engine lines.
    pub engine_harmonics: Vec<(f64, f64)>,
    /// RMS of the broadband component at 1 m.
    pub broadband_level: f64,
    /// Broadband slope in dB per octave relative to 1 kHz.
    pub broadband_tilt: f64,
    /// `(time s, range m)` points, linearly interpolated and held at the ends.
    pub distance_track: Vec<(f64, f64)>,
    /// Ambient noise RMS at the receiver in dB re full scale; `None` disables it.
    pub noise_floor: Option<f64>,
    /// Fractional change of the shaft rate across the recording.
    #[serde(default)]
    pub shaft_drift: f64,
}

impl SynthProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GseError::Config(format!("synth profile ({}): {m}", self.class_label)));
        if !(self.shaft_rate > 0.0) || self.n_blades == 0 {
            return bad("shaft rate and blade count must be positive");
        }
        if self.distance_track.is_empty() {
            return bad("empty distance track");
        }
        if self.distance_track.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("distance track times must increase");
        }
        if self.distance_track.iter().any(|&(t, r)| !t.is_finite() || !(r > 0.0)) {
            return bad("ranges must be positive");
        }
        if self.comb_level < 0.0 || self.broadband_level < 0.0 || self.engine_harmonics.iter().any(|&(f, a)| f <= 0.0 || a < 0.0) {
            return bad("levels must be non-negative and frequencies positive");
        }
        if !(self.shaft_drift > -0.9) {
            return bad("shaft drift must exceed -0.9");
        }
        Ok(())
    }

    pub fn range_at(&self, t: f64) -> f64 {
        let track = &self.distance_track;
        if t <= track[0].0 {
            return track[0].1;
        }
        for w in track.windows(2) {
            if t <= w[1].0 {
                let a = (t - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + a * (w[1].1 - w[0].1);
            }
        }
        track[track.len() - 1].1
    }
}

/// Propagation loss in dB at frequency `f` (Hz) and range `r` (m).
pub fn transmission_loss_db(f: f64, r: f64) -> f64 {
    20.0 * r.log10() + 0.05 * (f / 1000.0).powi(2) * r / 1000.0
}

fn tilt_gain(f: f64, tilt: f64) -> f64 {
    10f64.powf(tilt * (f.max(10.0) / 1000.0).log2() / 20.0)
}

/// Received waveform before ambient noise and normalization.
fn propagate(profile: &SynthProfile, duration: f64, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    let n = (duration * sr).round() as usize;
    let nyquist = sr / 2.0;
    // Tonal source
    let mut tonal = vec![0.0; n];
    let bpf = profile.shaft_rate * f64::from(profile.n_blades);
    let drift = profile.shaft_drift;
    for h in 1..=profile.comb_harmonics {
        let f = bpf * h as f64;
        if f * (1.0 + drift.max(0.0)) >= nyquist || profile.comb_level == 0.0 {
            continue;
        }
        let a = profile.comb_level / (h as f64).sqrt();
        let phase0 = rng.random_range(0.0..2.0 * PI);
        for (i, v) in tonal.iter_mut().enumerate() {
            let t = i as f64 / sr;
            // integral of f (1 + drift t / T)
            *v += a * (2.0 * PI * f * (t + drift * t * t / (2.0 * duration)) + phase0).cos();
        }
    }
    for &(f, a) in &profile.engine_harmonics {
        if f >= nyquist || a == 0.0 {
            continue;
        }
        let phase0 = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * f / sr;
        for (i, v) in tonal.iter_mut().enumerate() {
            *v += a * (w * i as f64 + phase0).cos();
        }
    }
    // Broadband source: white noise, shaped below.
    let mut noise: Vec<f64> = if profile.broadband_level > 0.0 {
        (0..n).map(|_| standard_normal(rng)).collect()
    } else {
        vec![0.0; n]
    };
    let bins = FRAME / 2 + 1;
    let freqs: Vec<f64> = (0..FRAME).map(|k| k.min(FRAME - k) as f64 * sr / FRAME as f64).collect();
    let tilt: Vec<f64> = freqs.iter().map(|&f| tilt_gain(f, profile.broadband_tilt)).collect();
    // Normalize the shaping so broadband RMS equals broadband_level.
    let mean_sq = tilt[..bins].iter().map(|g| g * g).sum::<f64>() / bins as f64;
    let noise_gain = profile.broadband_level / mean_sq.sqrt();
    for v in &mut noise {
        *v *= noise_gain;
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(FRAME);
    let inv = planner.plan_fft_inverse(FRAME);
    let hop = FRAME / 2;
    let window: Vec<f64> = (0..FRAME).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / FRAME as f64).cos()).collect();
    let mut out = vec![0.0; n + FRAME];
    let mut a = vec![Complex::new(0.0, 0.0); FRAME];
    let mut b = vec![Complex::new(0.0, 0.0); FRAME];
    // Frames start at -hop so every sample is covered by two windows.
    let mut start: isize = -(hop as isize);
    while start < n as isize {
        for i in 0..FRAME {
            let j = start + i as isize;
            let (t, s) = if j >= 0 && (j as usize) < n {
                (tonal[j as usize], noise[j as usize])
            } else {
                (0.0, 0.0)
            };
            a[i] = Complex::new(t * window[i], 0.0);
            b[i] = Complex::new(s * window[i], 0.0);
        }
        fwd.process(&mut a);
        fwd.process(&mut b);
        let centre = (start as f64 + FRAME as f64 / 2.0) / sr;
        let r = profile.range_at(centre.clamp(0.0, duration));
        for k in 0..FRAME {
            let g = 10f64.powf(-transmission_loss_db(freqs[k], r) / 20.0);
            a[k] = (a[k] + b[k] * tilt[k]) * g;
        }
        inv.process(&mut a);
        for (i, v) in a.iter().enumerate() {
            let j = start + i as isize;
            if j >= 0 && (j as usize) < n {
                out[j as usize] += v.re / FRAME as f64;
            }
        }
        start += hop as isize;
    }
    out.truncate(n);
    out
}

/// Received waveform with ambient noise, before peak normalization.
pub fn render(profile: &SynthProfile, duration: f64, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    profile.validate()?;
    if !(duration > 0.0) || sample_rate == 0 {
        return Err(GseError::Config("duration and sample rate must be positive".into()));
    }
    let mut rng = seeded(derive_seed(seed, "synth/source"));
    let mut x = propagate(profile, duration, sample_rate, &mut rng);
    if let Some(db) = profile.noise_floor {
        let level = 10f64.powf(db / 20.0);
        let mut amb = seeded(derive_seed(seed, "synth/ambient"));
        for v in &mut x {
            *v += level * standard_normal(&mut amb);
        }
    }
    Ok(x)
}

/// Peak-normalized synthetic recording. Fails for durations under 30 s.
pub fn synth_ship_noise(profile: &SynthProfile, duration: f64, sample_rate: u32, seed: u64, meta: ClipMeta) -> Result<AudioClip> {
    if duration < 30.0 {
        return Err(GseError::Config(format!("synthetic recordings need at least 30 s, got {duration}")));
    }
    let x = render(profile, duration, sample_rate, seed)?;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { PEAK / peak } else { 0.0 };
    let samples = x.iter().map(|v| (v * scale) as f32).collect();
    Ok(AudioClip::new(samples, sample_rate, meta)?)
}

/// Per-class ranges from which recording profiles are drawn. Every
/// `[lo, hi]` pair is sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub class_label: ClassLabel,
    pub shaft_rate: [f64; 2],
    pub blades: Vec<u32>,
    pub comb_harmonics: usize,
    /// Comb level in dB relative to the broadband RMS.
    pub comb_level_db: [f64; 2],
    pub engine_fundamental: [f64; 2],
    pub engine_harmonics: usize,
    /// Level of the engine fundamental in dB relative to the broadband RMS.
    pub engine_level_db: [f64; 2],
    /// Level drop per engine harmonic in dB.
    pub engine_rolloff_db: f64,
    pub broadband_tilt: [f64; 2],
    pub start_range: [f64; 2],
    pub end_range: [f64; 2],
    pub shaft_drift: [f64; 2],
    pub noise_floor: f64,
}

fn uniform(rng: &mut Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 20.0)
}

impl ClassProfile {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            self.shaft_rate,
            self.comb_level_db,
            self.engine_fundamental,
            self.engine_level_db,
            self.broadband_tilt,
            self.start_range,
            self.end_range,
            self.shaft_drift,
        ];
        if pairs.iter().any(|p| !(p[0] <= p[1]) || !p[0].is_finite() || !p[1].is_finite()) {
            return Err(GseError::Config(format!("{}: every range needs lo <= hi", self.class_label)));
        }
        if self.blades.is_empty() || self.blades.contains(&0) {
            return Err(GseError::Config(format!("{}: blade counts must be positive", self.class_label)));
        }
        if !(self.shaft_rate[0] > 0.0 && self.engine_fundamental[0] > 0.0 && self.start_range[0] > 0.0 && self.end_range[0] > 0.0) {
            return Err(GseError::Config(format!(
                "{}: rates, frequencies and ranges must be positive",
                self.class_label
            )));
        }
        Ok(())
    }

    /// Draws the profile of one recording of `duration` seconds.
    pub fn sample(&self, duration: f64, rng: &mut Rng) -> SynthProfile {
        let blades = self.blades[rng.random_range(0..self.blades.len())];
        let f0 = uniform(rng, self.engine_fundamental);
        let e0 = uniform(rng, self.engine_level_db);
        let engine_harmonics = (1..=self.engine_harmonics)
            .map(|k| (f0 * k as f64, db(e0 - self.engine_rolloff_db * (k - 1) as f64)))
            .collect();
        SynthProfile {
            class_label: self.class_label,
            shaft_rate: uniform(rng, self.shaft_rate),
            n_blades: blades,
            comb_harmonics: self.comb_harmonics,
            comb_level: db(uniform(rng, self.comb_level_db)),
            engine_harmonics,
            broadband_level: 1.0,
            broadband_tilt: uniform(rng, self.broadband_tilt),
            distance_track: vec![(0.0, uniform(rng, self.start_range)), (duration, uniform(rng, self.end_range))],
            noise_floor: Some(self.noise_floor),
            shaft_drift: uniform(rng, self.shaft_drift),
        }
    }
}

/// Class profile set, loadable from TOML (`[[class]]` tables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate: u32,
    #[serde(rename = "class")]
    pub classes: Vec<ClassProfile>,
}

/// Shipped defaults (also in `configs/synth_profiles.toml`).
pub const DEFAULT_PROFILES: &str = include_str!("../../../configs/synth_profiles.toml");

impl Default for SynthConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PROFILES).expect("shipped profiles parse")
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| GseError::Config(format!("synth profiles: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GseError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            GseError::Config(m) => GseError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(GseError::Config("sample_rate must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(GseError::Config("no class profiles".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        Ok(())
    }

    pub fn profile(&self, class: ClassLabel) -> Option<&ClassProfile> {
        self.classes.iter().find(|c| c.class_label == class)
    }
}

/// One recording of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub recording_id: String,
    pub vessel_id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub profile: SynthProfile,
}

/// Recording plan for `per_class` recordings of each of the first `classes`
/// profiles.
pub fn plan_corpus(cfg: &SynthConfig, classes: usize, per_class: usize, duration: f64, seed: u64) -> Result<Vec<CorpusItem>> {
    if classes == 0 || classes > cfg.classes.len() {
        return Err(GseError::Usage(format!("--classes must be in 1..={}", cfg.classes.len())));
    }
    let mut items = Vec::new();
    for c in &cfg.classes[..classes] {
        for i in 0..per_class {
            let id = format!("{}_{i:03}", c.class_label);
            let rec_seed = derive_seed(seed, &id);
            let mut rng = seeded(derive_seed(rec_seed, "profile"));
            items.push(CorpusItem {
                recording_id: id.clone(),
                vessel_id: format!("v{}", &format!("{rec_seed:016x}")[..8]),
                seed: rec_seed,
                duration_s: duration,
                profile: c.sample(duration, &mut rng),
            });
        }
    }
    Ok(items)
}

impl CorpusItem {
    pub fn meta(&self) -> ClipMeta {
        ClipMeta {
            recording_id: self.recording_id.clone(),
            class_label: self.profile.class_label,
            start_offset: 0.0,
            vessel_id: Some(self.vessel_id.clone()),
        }
    }

    pub fn render(&self, sample_rate: u32) -> Result<AudioClip> {
        synth_ship_noise(&self.profile, self.duration_s, sample_rate, self.seed, self.meta())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tone(range: f64) -> SynthProfile {
        SynthProfile {
            class_label: ClassLabel::Cargo,
            shaft_rate: 1.0,
            n_blades: 4,
            comb_harmonics: 0,
            comb_level: 0.0,
            engine_harmonics: vec![(100.0, 1.0)],
            broadband_level: 0.0,
            broadband_tilt: 0.0,
            distance_track: vec![(0.0, range)],
            noise_floor: None,
            shaft_drift: 0.0,
        }
    }

    fn spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf[..x.len() / 2].iter().map(|c| c.norm()).collect()
    }

    #[test]
    fn single_harmonic_peaks_at_its_bin() {
        let x = render(&single_tone(1.0), 2.0, 8000, 1).unwrap();
        let s = spectrum(&x);
        let peak = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        // 2 s of audio: 0.5 Hz per bin
        assert_eq!(peak, 200);
    }

    #[test]
    fn same_seed_same_samples() {
        let mut p = single_tone(50.0);
        p.broadband_level = 1.0;
        p.noise_floor = Some(-40.0);
        p.comb_harmonics = 5;
        p.comb_level = 2.0;
        let meta = ClipMeta {
            recording_id: "x".into(),
            class_label: ClassLabel::Cargo,
            start_offset: 0.0,
            vessel_id: None,
        };
        let a = synth_ship_noise(&p, 30.0, 4000, 9, meta.clone()).unwrap();
        let b = synth_ship_noise(&p, 30.0, 4000, 9, meta.clone()).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, synth_ship_noise(&p, 30.0, 4000, 10, meta.clone()).unwrap().samples);
        assert!((a.samples.iter().fold(0.0f32, |m, v| m.max(v.abs())) - PEAK as f32).abs() < 1e-6);
        assert!(synth_ship_noise(&p, 29.0, 4000, 9, meta).is_err());
    }

    #[test]
    fn far_recording_loses_high_band_energy() {
        let profile = |r: f64| SynthProfile {
            broadband_level: 1.0,
            engine_harmonics: vec![],
            ..single_tone(r)
        };
        let band = |x: &[f64]| {
            let s = spectrum(x);
            let lo = s.len() * 4000 / 16000;
            s[lo..].iter().map(|v| v * v).sum::<f64>()
        };
        let near = render(&profile(100.0), 1.0, 32000, 3).unwrap();
        let far = render(&profile(1000.0), 1.0, 32000, 3).unwrap();
        let drop = 10.0 * (band(&near) / band(&far)).log10();
        // Oracle: flat source spectrum integrated through the loss formula.
        let received = |r: f64| {
            (4000..16000)
                .map(|f| 10f64.powf(-transmission_loss_db(f as f64, r) / 10.0))
                .sum::<f64>()
        };
        let expected = 10.0 * (received(100.0) / received(1000.0)).log10();
        assert!(drop > 10.0, "{drop}");
        assert!((drop - expected).abs() < 1.0, "{drop} vs {expected}");
    }

    #[test]
    fn bad_tracks_are_rejected() {
        let mut p = single_tone(1.0);
        p.distance_track.clear();
        assert!(render(&p, 1.0, 8000, 0).is_err());
        p.distance_track = vec![(10.0, 1.0), (5.0, 2.0)];
        assert!(render(&p, 1.0, 8000, 0).is_err());
    }

    #[test]
    fn range_interpolates_and_holds() {
        let mut p = single_tone(1.0);
        p.distance_track = vec![(0.0, 100.0), (10.0, 300.0)];
        assert_eq!(p.range_at(-1.0), 100.0);
        assert_eq!(p.range_at(5.0), 200.0);
        assert_eq!(p.range_at(99.0), 300.0);
    }

    #[test]
    fn default_profiles_cover_four_classes() {
        let cfg = SynthConfig::default();
        let labels: Vec<ClassLabel> = cfg.classes.iter().map(|c| c.class_label).collect();
        assert_eq!(labels, ClassLabel::ALL);
        let items = plan_corpus(&cfg, 4, 3, 150.0, 1).unwrap();
        assert_eq!(items.len(), 12);
        assert_eq!(items, plan_corpus(&cfg, 4, 3, 150.0, 1).unwrap());
    }
}
