//! Fold plans for the three evaluation tasks and the temporal-proximity
//! experiment grids.
//!
//! * Task 1: all segments shuffled and stratified by class into 5 folds.
//! * Task 2: each recording cut into 5 contiguous fifths; fold `i` holds
//!   every recording's `i`-th fifth. Trained on one end fifth, tested on the
//!   other four.
//! * Task 3: whole recordings stratified into 5 folds.
//!
//! Fold numbers in pairs and experiment runs are 1-based.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded, shuffle};
use crate::signal::{segment_offsets, ClassLabel, Segmentation};
use crate::{Error, Result};

/// Recordings must be strictly longer than this to be used.
pub const MIN_DURATION_S: f64 = 90.0;
pub const NUM_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub class_label: ClassLabel,
    pub duration_s: f64,
    pub vessel_id: Option<String>,
}

/// One 30 s segment of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub recording_id: String,
    pub class_label: ClassLabel,
    pub start_offset: f64,
}

/// Offsets are kept to the millisecond so identifiers are stable.
pub fn round_offset(offset: f64) -> f64 {
    libm::round(offset * 1000.0) / 1000.0
}

impl SegmentRef {
    pub fn new(recording_id: impl Into<String>, class_label: ClassLabel, start_offset: f64) -> Self {
        Self {
            recording_id: recording_id.into(),
            class_label,
            start_offset: round_offset(start_offset),
        }
    }

    /// `<recording_id>_<offset>`; also the spectrogram cache file stem.
    pub fn id(&self) -> String {
        format!("{}_{}", self.recording_id, self.start_offset)
    }

    fn key(&self) -> (String, u64) {
        (self.recording_id.clone(), libm::round(self.start_offset * 1000.0) as u64)
    }
}

/// Segments of a whole recording.
pub fn recording_segments(rec: &RecordingEntry, seg: Segmentation) -> Result<Vec<SegmentRef>> {
    Ok(segment_offsets(rec.duration_s, seg)?
        .into_iter()
        .map(|o| SegmentRef::new(rec.recording_id.clone(), rec.class_label, o))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPair {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub task: u8,
    pub seed: u64,
    pub folds: Vec<Vec<SegmentRef>>,
    pub pairs: Vec<FoldPair>,
}

impl FoldPlan {
    /// Segments of the given 1-based folds, in fold order.
    pub fn segments(&self, folds: &[usize]) -> Result<Vec<SegmentRef>> {
        let mut out = Vec::new();
        for &f in folds {
            let fold = f
                .checked_sub(1)
                .and_then(|i| self.folds.get(i))
                .ok_or_else(|| Error::invalid(format!("fold {f} out of range 1..={}", self.folds.len())))?;
            out.extend(fold.iter().cloned());
        }
        Ok(out)
    }

    pub fn num_segments(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Checks that no segment appears twice and that every pair has disjoint
    /// train and test fold sets.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for s in self.folds.iter().flatten() {
            if !seen.insert(s.key()) {
                return Err(Error::invalid(format!("segment {} appears in two folds", s.id())));
            }
        }
        for p in &self.pairs {
            if p.train.is_empty() || p.test.is_empty() {
                return Err(Error::invalid(format!("pair {} has an empty side", p.label)));
            }
            if p.train.iter().any(|f| p.test.contains(f)) {
                return Err(Error::invalid(format!("pair {} trains on a test fold", p.label)));
            }
            if p.train.iter().chain(&p.test).any(|&f| f == 0 || f > self.folds.len()) {
                return Err(Error::invalid(format!("pair {} names a missing fold", p.label)));
            }
        }
        Ok(())
    }
}

fn leave_one_out(k: usize) -> Vec<FoldPair> {
    (1..=k)
        .map(|t| FoldPair {
            train: (1..=k).filter(|&f| f != t).collect(),
            test: vec![t],
            label: format!("fold{t}"),
        })
        .collect()
}

/// Keeps recordings strictly longer than 90 s.
pub fn filter_eligible(entries: &[RecordingEntry]) -> Result<Vec<RecordingEntry>> {
    let kept: Vec<RecordingEntry> = entries.iter().filter(|e| e.duration_s > MIN_DURATION_S).cloned().collect();
    if kept.is_empty() {
        return Err(Error::Empty("eligible recordings"));
    }
    Ok(kept)
}

fn group_by_class<T: Clone>(items: &[T], class: impl Fn(&T) -> ClassLabel) -> Vec<(ClassLabel, Vec<T>)> {
    ClassLabel::ALL
        .iter()
        .map(|&c| (c, items.iter().filter(|i| class(i) == c).cloned().collect::<Vec<T>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

fn require_per_class<T>(groups: &[(ClassLabel, Vec<T>)], k: usize) -> Result<()> {
    for (c, v) in groups {
        if v.len() < k {
            return Err(Error::TooFewPerClass {
                class: c.name().to_string(),
                count: v.len(),
                required: k,
            });
        }
    }
    Ok(())
}

/// Task 1: shuffle each class with the seed and deal its segments
/// round-robin into `k` folds, continuing the rotation across classes so
/// fold sizes stay within one of each other.
pub fn split_task1(segments: &[SegmentRef], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut groups = group_by_class(segments, |s| s.class_label);
    require_per_class(&groups, k)?;
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (c, items) in &mut groups {
        shuffle(items, &mut seeded(derive_seed(seed, &format!("task1/{c}"))));
        for (j, s) in items.iter().enumerate() {
            folds[(next + j) % k].push(s.clone());
        }
        next = (next + items.len()) % k;
    }
    let plan = FoldPlan {
        task: 1,
        seed,
        folds,
        pairs: leave_one_out(k),
    };
    plan.validate()?;
    Ok(plan)
}

/// How recordings are cut into fifths for Task 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Task2Options {
    pub segmentation: Segmentation,
    /// Skip recordings whose fifths are shorter than one segment instead of
    /// failing.
    pub drop_short: bool,
}

/// `(start, length)` of the five fifths: `floor(D / 5)` seconds each, the
/// remainder appended to the last.
pub fn fifths(duration_s: f64) -> [(f64, f64); NUM_FOLDS] {
    let len = libm::floor(duration_s / NUM_FOLDS as f64);
    core::array::from_fn(|i| {
        let start = len * i as f64;
        let l = if i + 1 == NUM_FOLDS { duration_s - start } else { len };
        (start, l)
    })
}

/// Task 2: fold `i` is the `i`-th temporal fifth of every recording. Pairs
/// train on fold 1 and test on 2..5, and the mirror.
pub fn split_task2(recordings: &[RecordingEntry], opts: Task2Options) -> Result<FoldPlan> {
    if recordings.is_empty() {
        return Err(Error::Empty("recordings"));
    }
    opts.segmentation.validate()?;
    let mut folds = vec![Vec::new(); NUM_FOLDS];
    for rec in recordings {
        let parts = fifths(rec.duration_s);
        let short = parts.iter().any(|&(_, l)| l + 1e-9 < opts.segmentation.seg_seconds);
        if short {
            if opts.drop_short {
                continue;
            }
            return Err(Error::FifthTooShort {
                recording_id: rec.recording_id.clone(),
                fifth_seconds: parts[0].1,
                segment_seconds: opts.segmentation.seg_seconds,
            });
        }
        for (fold, &(start, len)) in folds.iter_mut().zip(&parts) {
            for o in segment_offsets(len, opts.segmentation)? {
                fold.push(SegmentRef::new(rec.recording_id.clone(), rec.class_label, start + o));
            }
        }
    }
    if folds.iter().any(Vec::is_empty) {
        return Err(Error::Empty("task 2 folds"));
    }
    let plan = FoldPlan {
        task: 2,
        seed: 0,
        folds,
        pairs: vec![
            FoldPair {
                train: vec![1],
                test: vec![2, 3, 4, 5],
                label: "train1".into(),
            },
            FoldPair {
                train: vec![5],
                test: vec![1, 2, 3, 4],
                label: "train5".into(),
            },
        ],
    };
    plan.validate()?;
    Ok(plan)
}

/// Task 3: each class's recordings, in seeded order, go to the fold holding
/// the fewest recordings of that class, then the fewest recordings overall,
/// then the earliest position in a seeded fold order.
pub fn split_task3(recordings: &[RecordingEntry], k: usize, seed: u64, seg: Segmentation) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid("need at least two folds"));
    }
    let mut groups = group_by_class(recordings, |r| r.class_label);
    require_per_class(&groups, k)?;
    let mut totals = vec![0usize; k];
    let mut folds = vec![Vec::new(); k];
    for (c, recs) in &mut groups {
        let mut rng = seeded(derive_seed(seed, &format!("task3/{c}")));
        shuffle(recs, &mut rng);
        let mut order: Vec<usize> = (0..k).collect();
        shuffle(&mut order, &mut rng);
        let mut per_class = vec![0usize; k];
        for rec in recs.iter() {
            let f = *order.iter().min_by_key(|&&f| (per_class[f], totals[f])).expect("k >= 2");
            per_class[f] += 1;
            totals[f] += 1;
            folds[f].extend(recording_segments(rec, seg)?);
        }
    }
    let plan = FoldPlan {
        task: 3,
        seed,
        folds,
        pairs: leave_one_out(k),
    };
    plan.validate()?;
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Single-fifth training sets at growing temporal distance.
    A,
    /// Adjacent training sets of shrinking size.
    B,
    /// Size crossed with distance.
    C,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "a",
            Self::B => "b",
            Self::C => "c",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            other => Err(Error::invalid(format!("unknown experiment kind {other:?}"))),
        }
    }
}

/// One training/testing configuration of an experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub label: String,
    pub train: Vec<usize>,
    pub test: usize,
    /// Number of fifths trained on.
    pub size: usize,
    /// Fold distance from the test fifth to the nearest training fifth.
    pub distance: usize,
    /// Uses test fifth 5 instead of 1.
    pub mirrored: bool,
}

impl ExperimentRun {
    pub fn pair(&self) -> FoldPair {
        FoldPair {
            train: self.train.clone(),
            test: vec![self.test],
            label: self.label.clone(),
        }
    }
}

/// Training sets `(first fold, size)` against test fold 1.
fn grid(kind: ExperimentKind) -> Vec<(usize, usize)> {
    match kind {
        ExperimentKind::A => (2..=5).map(|f| (f, 1)).collect(),
        ExperimentKind::B => (1..=4).rev().map(|s| (2, s)).collect(),
        ExperimentKind::C => (1..=3).flat_map(|s| (2..=6 - s).map(move |f| (f, s))).collect(),
    }
}

/// The runs of an experiment: the grid against test fifth 1, then the same
/// grid reflected (`f -> 6 - f`) against test fifth 5.
pub fn experiment_plan(kind: ExperimentKind) -> Vec<ExperimentRun> {
    let mut runs = Vec::new();
    for mirrored in [false, true] {
        for &(first, size) in &grid(kind) {
            let map = |f: usize| if mirrored { NUM_FOLDS + 1 - f } else { f };
            let mut train: Vec<usize> = (first..first + size).map(map).collect();
            train.sort_unstable();
            let test = map(1);
            let distance = first - 1;
            let side = if mirrored { "m" } else { "" };
            runs.push(ExperimentRun {
                label: format!("{kind}{side}-s{size}-d{distance}"),
                train,
                test,
                size,
                distance,
                mirrored,
            });
        }
    }
    runs
}

/// The Task-2 plan with its pairs replaced by an experiment grid.
pub fn experiment_fold_plan(task2: &FoldPlan, kind: ExperimentKind) -> Result<FoldPlan> {
    if task2.task != 2 || task2.folds.len() != NUM_FOLDS {
        return Err(Error::invalid("experiments need a five-fold task 2 plan"));
    }
    let plan = FoldPlan {
        pairs: experiment_plan(kind).iter().map(ExperimentRun::pair).collect(),
        ..task2.clone()
    };
    plan.validate()?;
    Ok(plan)
}
