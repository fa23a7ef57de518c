//! Spectrogram cache. Each segment's CQT image is stored as
//! `<cache>/<cache_key>/<segment_id>.gset` (`n_bins x n_frames`, f32).

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use gse_core::protocol::{filter_eligible, recording_segments, split_task2, RecordingEntry, SegmentRef, Task2Options};
use gse_core::signal::{image_input, AudioClip, ClipMeta, CqtFilterbank};
use gse_core::Tensor;

use crate::config::RunConfig;
use crate::error::{GseError, Result};
use crate::gset;
use crate::manifest::ManifestRow;
use crate::wav::load_wav;

pub fn cache_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.cache.join(cfg.cache_key())
}

pub fn entry_path(dir: &Path, seg: &SegmentRef) -> PathBuf {
    dir.join(format!("{}.gset", seg.id()))
}

/// Eligible manifest rows as protocol entries.
pub fn eligible(rows: &[ManifestRow]) -> Result<Vec<RecordingEntry>> {
    let entries: Vec<RecordingEntry> = rows.iter().map(ManifestRow::entry).collect();
    Ok(filter_eligible(&entries)?)
}

/// Every segment any task can ask for: whole-recording segments under the
/// task 1 and task 3 overlap settings plus the task 2 fifth segments.
pub fn required_segments(recs: &[RecordingEntry], cfg: &RunConfig) -> Result<Vec<SegmentRef>> {
    let mut by_key = BTreeMap::new();
    let mut add = |s: SegmentRef| {
        by_key.entry(s.id()).or_insert(s);
    };
    for task in [1, 3] {
        for rec in recs {
            recording_segments(rec, cfg.task_segmentation(task))?.into_iter().for_each(&mut add);
        }
    }
    let opts = Task2Options {
        segmentation: cfg.task_segmentation(2),
        drop_short: cfg.protocol.task2_drop_short,
    };
    split_task2(recs, opts)?.folds.into_iter().flatten().for_each(&mut add);
    Ok(by_key.into_values().collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessReport {
    pub written: usize,
    pub replaced: usize,
    pub skipped: usize,
}

/// Computes missing or corrupt cache entries; valid ones are left alone.
pub fn preprocess(rows: &[ManifestRow], cfg: &RunConfig) -> Result<PreprocessReport> {
    let recs = eligible(rows)?;
    let dir = cache_dir(cfg);
    let segments = required_segments(&recs, cfg)?;
    let paths: HashMap<&str, &Path> = rows.iter().map(|r| (r.recording_id.as_str(), r.path.as_path())).collect();
    let mut pending: BTreeMap<&str, Vec<&SegmentRef>> = BTreeMap::new();
    let mut report = PreprocessReport::default();
    for s in &segments {
        let p = entry_path(&dir, s);
        if gset::is_valid(&p) {
            report.skipped += 1;
        } else {
            if p.exists() {
                report.replaced += 1;
            }
            pending.entry(s.recording_id.as_str()).or_default().push(s);
        }
    }
    if pending.is_empty() {
        return Ok(report);
    }
    let bank = CqtFilterbank::new(cfg.cqt)?;
    let seg_len = cfg.segmentation.seg_seconds;
    for (id, segs) in pending {
        let path = paths[id];
        let meta = ClipMeta {
            recording_id: id.to_string(),
            class_label: segs[0].class_label,
            start_offset: 0.0,
            vessel_id: None,
        };
        let clip = load_wav(path, meta)?;
        if clip.sample_rate != cfg.cqt.sample_rate {
            return Err(GseError::Data(format!(
                "{}: sample rate {} differs from cqt.sample_rate {}",
                path.display(),
                clip.sample_rate,
                cfg.cqt.sample_rate
            )));
        }
        for s in segs {
            let values = segment_spectrogram(&bank, &clip, s, seg_len)
                .map_err(|e| GseError::Data(format!("{}: segment {}: {e}", path.display(), s.id())))?;
            gset::save(&entry_path(&dir, s), &values)?;
            report.written += 1;
        }
    }
    report.written -= report.replaced;
    Ok(report)
}

/// CQT image of one segment of an in-memory recording.
pub fn segment_spectrogram(bank: &CqtFilterbank, clip: &AudioClip, seg: &SegmentRef, seg_seconds: f64) -> Result<Tensor<f32>> {
    let sr = f64::from(clip.sample_rate);
    let start = (seg.start_offset * sr).round() as usize;
    let len = (seg_seconds * sr).round() as usize;
    let end = start + len;
    if end > clip.samples.len() {
        return Err(GseError::Data(format!(
            "segment {} ends at sample {end} past the recording end {}",
            seg.id(),
            clip.samples.len()
        )));
    }
    let piece = AudioClip::new(
        clip.samples[start..end].to_vec(),
        clip.sample_rate,
        ClipMeta {
            start_offset: seg.start_offset,
            ..clip.meta.clone()
        },
    )?;
    Ok(bank.transform(&piece)?.values)
}

/// A model-ready segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    /// `1 x size x size`, standardized.
    pub image: Tensor<f32>,
}

/// Model inputs keyed by segment id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub size: usize,
    samples: HashMap<String, Sample>,
}

impl Dataset {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            samples: HashMap::new(),
        }
    }

    pub fn insert(&mut self, sample: Sample) {
        self.samples.insert(sample.id.clone(), sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.get(id)
    }

    /// Looks up every segment, in order.
    pub fn select(&self, segs: &[SegmentRef]) -> Result<Vec<&Sample>> {
        segs.iter()
            .map(|s| {
                self.samples
                    .get(&s.id())
                    .ok_or_else(|| GseError::Data(format!("segment {} is not loaded", s.id())))
            })
            .collect()
    }
}

/// Reads cached spectrograms for `segs` and resizes them to model inputs.
pub fn load_dataset(segs: &[SegmentRef], cfg: &RunConfig) -> Result<Dataset> {
    let dir = cache_dir(cfg);
    let mut ds = Dataset::new(cfg.model.input_size);
    for s in segs {
        let p = entry_path(&dir, s);
        if !p.exists() {
            return Err(GseError::Data(format!("missing cache entry {}; run preprocess first", p.display())));
        }
        let values: Tensor<f32> = gset::load(&p)?;
        ds.insert(Sample {
            id: s.id(),
            label: s.class_label.index(),
            image: image_input(&values, cfg.model.input_size)?,
        });
    }
    Ok(ds)
}
