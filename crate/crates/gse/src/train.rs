//! Training loop, fold evaluation and experiment aggregation.

use std::collections::BTreeSet;
use std::time::Instant;

use gse_core::metrics::{aggregate, steady_state_epoch, Aggregate, ConfusionMatrix, Metrics, Tolerance};
use gse_core::nn::{softmax_cross_entropy, GseResNeXt, Layer, Mode, ModelConfig, Param};
use gse_core::optim::{AdamW, AdamWConfig};
use gse_core::protocol::{experiment_plan, ExperimentKind, FoldPlan};
use gse_core::rng::{derive_seed, seeded, shuffle, Rng};
use gse_core::signal::{spec_augment, SpecAugmentPolicy};
use gse_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::cache::{Dataset, Sample};
use crate::error::{GseError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Share of the training folds held out, per class, for validation.
    pub val_fraction: f64,
    /// SpecAugment during training. `None` scales the default policy to
    /// the model input size.
    pub augment: Option<SpecAugmentPolicy>,
    pub steady_tol_pp: f64,
    pub steady_window: usize,
    pub steady_tolerance: Tolerance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            epochs: 50,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.1,
            augment: None,
            steady_tol_pp: 2.0,
            steady_window: 3,
            steady_tolerance: Tolerance::Absolute,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(GseError::Config("train.lr must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 0.5) {
            return Err(GseError::Config("train.val_fraction must lie in (0, 0.5)".into()));
        }
        if self.epochs == 0 || self.batch_size < 2 {
            return Err(GseError::Config(
                "train.epochs must be positive and train.batch_size at least 2".into(),
            ));
        }
        AdamW::<f32>::new(self.adamw()).map_err(|e| GseError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn augment_policy(&self, input_size: usize) -> SpecAugmentPolicy {
        self.augment.unwrap_or_else(|| SpecAugmentPolicy::scaled_to(input_size))
    }
}

/// Which parts of the network are switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    #[default]
    None,
    /// Without squeeze-and-excitation.
    Se,
    /// Plain first convolution instead of the Gabor bank.
    Gabor,
    /// Plain ResNeXt.
    Both,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Self::None, Self::Se, Self::Gabor, Self::Both];

    pub fn apply(self, cfg: &ModelConfig) -> ModelConfig {
        let mut c = cfg.clone();
        c.use_se &= !matches!(self, Self::Se | Self::Both);
        c.use_gabor &= !matches!(self, Self::Gabor | Self::Both);
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Se => "se",
            Self::Gabor => "gabor",
            Self::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mcc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub steady_state_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn val_mcc(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.val_mcc).collect()
    }
}

/// Outcome of training one fresh model on one fold pair.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub history: TrainHistory,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub test_ids: Vec<String>,
    pub test_labels: Vec<usize>,
    pub predictions: Vec<usize>,
    pub model: GseResNeXt<f32>,
}

fn stack(samples: &[&Sample], aug: Option<(&SpecAugmentPolicy, &mut Rng)>) -> Result<Tensor<f32>> {
    let imgs: Vec<Tensor<f32>> = match aug {
        Some((policy, rng)) => samples.iter().map(|s| spec_augment(&s.image, policy, rng)).collect(),
        None => samples.iter().map(|s| s.image.clone()).collect(),
    };
    let refs: Vec<&Tensor<f32>> = imgs.iter().collect();
    Ok(Tensor::stack(&refs)?)
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Eval-mode predictions and latents, in batches.
pub fn predict(model: &mut GseResNeXt<f32>, samples: &[&Sample], batch: usize) -> Result<(Vec<usize>, Vec<Vec<f32>>)> {
    let (mut preds, mut latents) = (Vec::new(), Vec::new());
    for chunk in samples.chunks(batch.max(1)) {
        let (logits, z) = model.predict(&stack(chunk, None)?)?;
        logits.ensure_finite("logits")?;
        let k = logits.dim(1);
        preds.extend(logits.data().chunks_exact(k).map(argmax));
        let d = z.dim(1);
        latents.extend(z.data().chunks_exact(d).map(<[f32]>::to_vec));
    }
    Ok((preds, latents))
}

fn confusion(model: &mut GseResNeXt<f32>, samples: &[&Sample], k: usize, batch: usize) -> Result<(ConfusionMatrix, Vec<usize>)> {
    let (preds, _) = predict(model, samples, batch)?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok((ConfusionMatrix::from_predictions(&preds, &labels, k)?, preds))
}

/// Stratified hold-out: `round(n * fraction)` samples of each class, at
/// least one and never the whole class.
pub fn stratified_split<'a>(samples: &[&'a Sample], fraction: f64, k: usize, rng: &mut Rng) -> Result<(Vec<&'a Sample>, Vec<&'a Sample>)> {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in 0..k {
        let mut members: Vec<&Sample> = samples.iter().copied().filter(|s| s.label == c).collect();
        if members.is_empty() {
            return Err(GseError::Data(format!("class {c} has no training segments")));
        }
        shuffle(&mut members, rng);
        let n_val = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len().saturating_sub(1).max(1));
        if members.len() == 1 {
            train.extend(members);
            continue;
        }
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    Ok((train, val))
}

/// One optimizer step on a batch; returns the batch loss.
pub fn train_step(model: &mut GseResNeXt<f32>, opt: &mut AdamW<f32>, x: &Tensor<f32>, labels: &[usize]) -> Result<f64> {
    model.zero_grad();
    let logits = model.forward(x, Mode::Train)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    if !loss.is_finite() {
        return Err(gse_core::Error::NonFinite("training loss".into()).into());
    }
    model.backward(&dlogits)?;
    let mut params: Vec<&mut Param<f32>> = Vec::new();
    model.params_mut(&mut params);
    opt.step(&mut params)?;
    Ok(f64::from(loss))
}

/// Trains a fresh model on `train` and evaluates it on `test`.
pub fn train_pair(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train: &[&Sample],
    test: &[&Sample],
    seed: u64,
    label: &str,
) -> Result<RunOutcome> {
    run_pair(model_cfg, cfg, train, test, seed, label).map_err(|e| e.in_run(label))
}

fn run_pair(model_cfg: &ModelConfig, cfg: &TrainConfig, train: &[&Sample], test: &[&Sample], seed: u64, label: &str) -> Result<RunOutcome> {
    if train.is_empty() || test.is_empty() {
        return Err(GseError::Data("empty train or test set".into()));
    }
    let k = model_cfg.num_classes;
    let mut rng = seeded(derive_seed(seed, &format!("{label}/train")));
    let (fit, val) = stratified_split(train, cfg.val_fraction, k, &mut rng)?;
    let test_ids: BTreeSet<&str> = test.iter().map(|s| s.id.as_str()).collect();
    if let Some(s) = train.iter().find(|s| test_ids.contains(s.id.as_str())) {
        return Err(GseError::Data(format!("segment {} is in both training and test sets", s.id)));
    }
    assert!(val.iter().all(|s| !test_ids.contains(s.id.as_str())), "validation overlaps test");

    let mut model = GseResNeXt::<f32>::new(model_cfg, derive_seed(seed, &format!("{label}/model")))?;
    let mut opt = AdamW::new(cfg.adamw())?;
    let policy = cfg.augment_policy(model_cfg.input_size);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        shuffle(&mut order, &mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            // batch norm needs two samples
            if idx.len() < 2 {
                continue;
            }
            let batch: Vec<&Sample> = idx.iter().map(|&i| fit[i]).collect();
            let x = stack(&batch, Some((&policy, &mut rng)))?;
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            loss_sum += train_step(&mut model, &mut opt, &x, &labels)? * batch.len() as f64;
            seen += batch.len();
        }
        let val_mcc = if val.is_empty() {
            0.0
        } else {
            confusion(&mut model, &val, k, cfg.batch_size)?.0.mcc()
        };
        records.push(EpochRecord {
            epoch,
            train_loss: if seen == 0 { 0.0 } else { loss_sum / seen as f64 },
            val_mcc,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    let series: Vec<f64> = records.iter().map(|r| r.val_mcc).collect();
    let steady = steady_state_epoch(&series, cfg.steady_tol_pp, cfg.steady_window, cfg.steady_tolerance);
    let (cm, predictions) = confusion(&mut model, test, k, cfg.batch_size)?;
    Ok(RunOutcome {
        label: label.to_string(),
        history: TrainHistory {
            records,
            steady_state_epoch: steady,
        },
        metrics: cm.metrics(),
        confusion: cm,
        test_ids: test.iter().map(|s| s.id.clone()).collect(),
        test_labels: test.iter().map(|s| s.label).collect(),
        predictions,
        model,
    })
}

/// Summary of one fold run as written to results files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub label: String,
    pub train_folds: Vec<usize>,
    pub test_folds: Vec<usize>,
    pub mcc: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub steady_state_epoch: Option<usize>,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone)]
pub struct KFoldOutcome {
    pub folds: Vec<FoldResult>,
    pub runs: Vec<RunOutcome>,
    pub mcc: Aggregate,
}

/// Trains one model per pair of `plan`. `on_run` sees each finished run
/// before the next starts.
pub fn kfold_evaluate(
    plan: &FoldPlan,
    data: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    mut on_run: impl FnMut(&RunOutcome),
) -> Result<KFoldOutcome> {
    if plan.pairs.is_empty() {
        return Err(GseError::Data("fold plan has no pairs".into()));
    }
    let mut folds = Vec::new();
    let mut runs = Vec::new();
    for pair in &plan.pairs {
        let train = data.select(&plan.segments(&pair.train)?)?;
        let test = data.select(&plan.segments(&pair.test)?)?;
        let run = train_pair(model_cfg, cfg, &train, &test, seed, &pair.label)?;
        on_run(&run);
        folds.push(FoldResult {
            label: pair.label.clone(),
            train_folds: pair.train.clone(),
            test_folds: pair.test.clone(),
            mcc: run.metrics.mcc,
            accuracy: run.metrics.accuracy,
            macro_f1: run.metrics.macro_f1,
            steady_state_epoch: run.history.steady_state_epoch,
            confusion: run.confusion.rows(),
        });
        runs.push(run);
    }
    let mcc = aggregate(&folds.iter().map(|f| f.mcc).collect::<Vec<_>>())?;
    Ok(KFoldOutcome { folds, runs, mcc })
}

/// One averaged point of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPoint {
    pub size: usize,
    pub distance: usize,
    pub runs: usize,
    pub mean_mcc: f64,
    pub std_mcc: f64,
}

/// Averages experiment fold results over runs sharing `(size, distance)`,
/// ordered by size, then distance.
pub fn experiment_points(kind: ExperimentKind, folds: &[FoldResult]) -> Result<Vec<ExperimentPoint>> {
    let runs = experiment_plan(kind);
    let mut keys: Vec<(usize, usize)> = runs.iter().map(|r| (r.size, r.distance)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(size, distance)| {
            let vals: Vec<f64> = runs
                .iter()
                .filter(|r| r.size == size && r.distance == distance)
                .map(|r| {
                    folds
                        .iter()
                        .find(|f| f.label == r.label)
                        .map(|f| f.mcc)
                        .ok_or_else(|| GseError::Data(format!("missing experiment run {}", r.label)))
                })
                .collect::<Result<_>>()?;
            let agg = aggregate(&vals)?;
            Ok(ExperimentPoint {
                size,
                distance,
                runs: vals.len(),
                mean_mcc: agg.mean,
                std_mcc: agg.std,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gse_core::rng::standard_normal;

    /// Four classes told apart by which quadrant of the image is bright.
    pub fn toy_samples(n_per_class: usize, size: usize, seed: u64) -> Vec<Sample> {
        let mut rng = seeded(seed);
        let mut out = Vec::new();
        for c in 0..4 {
            for i in 0..n_per_class {
                let h = size / 2;
                let data: Vec<f32> = (0..size * size)
                    .map(|p| {
                        let (r, col) = (p / size, p % size);
                        let q = (r / h) * 2 + col / h;
                        let base = if q == c { 1.5 } else { 0.0 };
                        (base + 0.5 * standard_normal(&mut rng)) as f32
                    })
                    .collect();
                out.push(Sample {
                    id: format!("c{c}_{i}"),
                    label: c,
                    image: Tensor::new(&[1, size, size], data).unwrap(),
                });
            }
        }
        out
    }

    fn tiny() -> ModelConfig {
        ModelConfig::scaled(16, 2, 16)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn smoke_run_is_finite_and_deterministic() {
        let s = toy_samples(16, 16, 1);
        let refs: Vec<&Sample> = s.iter().collect();
        let (train, test) = refs.split_at(48);
        let train: Vec<&Sample> = train.iter().chain(&refs[56..]).copied().collect();
        let test: Vec<&Sample> = test[..8].to_vec();
        let a = train_pair(&tiny(), &quick(), &train, &test, 5, "p").unwrap();
        assert_eq!(a.history.records.len(), 2);
        assert!(a.history.records.iter().all(|r| r.train_loss.is_finite()));
        assert_eq!(a.confusion.total(), test.len() as u64);
        let b = train_pair(&tiny(), &quick(), &train, &test, 5, "p").unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.history.val_mcc(), b.history.val_mcc());
    }

    #[test]
    fn leakage_is_rejected() {
        let s = toy_samples(4, 16, 2);
        let refs: Vec<&Sample> = s.iter().collect();
        let e = train_pair(&tiny(), &quick(), &refs, &refs[..2], 1, "leak").unwrap_err();
        assert!(e.to_string().contains("both training and test"));
        assert!(e.to_string().contains("leak"));
    }

    #[test]
    fn stratified_split_keeps_every_class() {
        let s = toy_samples(10, 8, 3);
        let refs: Vec<&Sample> = s.iter().collect();
        let (train, val) = stratified_split(&refs, 0.1, 4, &mut seeded(0)).unwrap();
        assert_eq!((train.len(), val.len()), (36, 4));
        for c in 0..4 {
            assert_eq!(val.iter().filter(|s| s.label == c).count(), 1);
        }
        let ids: BTreeSet<&str> = train.iter().map(|s| s.id.as_str()).collect();
        assert!(val.iter().all(|s| !ids.contains(s.id.as_str())));
        assert!(stratified_split(&refs[..10], 0.1, 4, &mut seeded(0)).is_err());
    }

    #[test]
    fn ablations_switch_components() {
        let base = ModelConfig::default();
        let flags: Vec<(bool, bool)> = Ablation::ALL
            .iter()
            .map(|a| {
                let c = a.apply(&base);
                (c.use_gabor, c.use_se)
            })
            .collect();
        assert_eq!(flags, [(true, true), (true, false), (false, true), (false, false)]);
    }

    #[test]
    fn experiment_points_average_mirrors() {
        let folds: Vec<FoldResult> = experiment_plan(ExperimentKind::A)
            .iter()
            .map(|r| FoldResult {
                label: r.label.clone(),
                train_folds: r.train.clone(),
                test_folds: vec![r.test],
                mcc: if r.mirrored { 0.5 } else { 0.7 } - 0.1 * r.distance as f64,
                accuracy: 0.0,
                macro_f1: 0.0,
                steady_state_epoch: None,
                confusion: vec![],
            })
            .collect();
        let pts = experiment_points(ExperimentKind::A, &folds).unwrap();
        assert_eq!(pts.len(), 4);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!((p.size, p.distance, p.runs), (1, i + 1, 2));
            assert!((p.mean_mcc - (0.6 - 0.1 * (i + 1) as f64)).abs() < 1e-12);
            assert!((p.std_mcc - 0.1).abs() < 1e-12);
        }
    }
}
