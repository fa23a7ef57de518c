//! The work behind each `gse` subcommand.

use std::path::{Path, PathBuf};

use gse_core::protocol::{
    experiment_fold_plan, recording_segments, split_task1, split_task2, split_task3, ExperimentKind, FoldPlan, Task2Options,
};

use crate::cache::{eligible, load_dataset, preprocess, PreprocessReport};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::error::{GseError, Result};
use crate::manifest::{read_manifest, write_manifest, ManifestRow};
use crate::report::{
    convergence_svg, experiment_csv, experiment_svg, fold_bar_svg, history_csv, latents_csv, summarize, summary_csv, summary_text,
    write_kernel_png, write_text, Curve, PlanSummary, ResultsFile, SummaryRow,
};
use crate::synth::{plan_corpus, SynthConfig};
use crate::train::{experiment_points, kfold_evaluate, predict, Ablation, KFoldOutcome};
use crate::wav::write_wav;

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub classes: usize,
    pub per_class: usize,
    pub duration: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub profiles: Option<PathBuf>,
}

/// Writes `<out>/wav/<id>.wav` for every planned recording and
/// `<out>/manifest.csv`.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<ManifestRow>> {
    let cfg = match &args.profiles {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if !(args.duration > 0.0) || args.per_class == 0 {
        return Err(GseError::Usage("--duration and --per-class must be positive".into()));
    }
    let items = plan_corpus(&cfg, args.classes, args.per_class, args.duration, args.seed)?;
    let mut rows = Vec::with_capacity(items.len());
    for item in &items {
        let clip = item.render(cfg.sample_rate)?;
        let path = args.out.join("wav").join(format!("{}.wav", item.recording_id));
        write_wav(&path, &clip.samples, clip.sample_rate)?;
        rows.push(ManifestRow {
            recording_id: item.recording_id.clone(),
            path,
            class_label: item.profile.class_label,
            vessel_id: item.vessel_id.clone(),
            duration_s: clip.duration(),
        });
    }
    write_manifest(&args.out.join("manifest.csv"), &rows)?;
    Ok(rows)
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessReport> {
    preprocess(&read_manifest(&cfg.paths.manifest)?, cfg)
}

/// The fold plan of a task over the manifest's eligible recordings.
pub fn task_plan(cfg: &RunConfig, rows: &[ManifestRow], task: u8) -> Result<FoldPlan> {
    let recs = eligible(rows)?;
    let k = cfg.protocol.folds;
    Ok(match task {
        1 => {
            let mut segs = Vec::new();
            for r in &recs {
                segs.extend(recording_segments(r, cfg.task_segmentation(1))?);
            }
            split_task1(&segs, k, cfg.seed)?
        }
        2 => split_task2(
            &recs,
            Task2Options {
                segmentation: cfg.task_segmentation(2),
                drop_short: cfg.protocol.task2_drop_short,
            },
        )?,
        3 => split_task3(&recs, k, cfg.seed, cfg.task_segmentation(3))?,
        t => return Err(GseError::Usage(format!("task must be 1, 2 or 3, got {t}"))),
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub results: ResultsFile,
}

fn write_run(cfg: &RunConfig, dir: &Path, name: &str, ablation: Ablation, plan: &FoldPlan, out: &KFoldOutcome) -> Result<ResultsFile> {
    let hash = cfg.hash();
    std::fs::create_dir_all(dir).map_err(|e| GseError::io(dir, e))?;
    write_text(&dir.join("config.toml"), &format!("# config_hash={hash}\n{}", cfg.to_toml()))?;
    let results = ResultsFile {
        config_hash: hash.clone(),
        name: name.into(),
        ablation: ablation.name().into(),
        plan: PlanSummary::of(plan),
        folds: out.folds.clone(),
        aggregate: out.mcc,
        points: None,
    };
    write_text(
        &dir.join("folds.svg"),
        &fold_bar_svg(&hash, &format!("{name} ({}) per-fold MCC", ablation.name()), &out.folds),
    )?;
    let curves: Vec<Curve> = out
        .runs
        .iter()
        .map(|r| Curve {
            name: &r.label,
            records: &r.history.records,
            steady_state_epoch: r.history.steady_state_epoch,
        })
        .collect();
    write_text(
        &dir.join("convergence.svg"),
        &convergence_svg(&hash, &format!("{name} validation MCC"), &curves),
    )?;
    for run in &out.runs {
        write_text(
            &dir.join(format!("history-{}.csv", run.label)),
            &history_csv(&hash, &run.history.records),
        )?;
        save_checkpoint(&dir.join(format!("checkpoint-{}", run.label)), &run.model, &hash)?;
    }
    results.save(&dir.join("results.json"))?;
    Ok(results)
}

/// Trains and evaluates every pair of a task plan.
pub fn cmd_run(cfg: &RunConfig, task: u8, ablation: Ablation, latents: bool) -> Result<RunSummary> {
    let rows = read_manifest(&cfg.paths.manifest)?;
    let plan = task_plan(cfg, &rows, task)?;
    let data = load_dataset(&plan.folds.concat(), cfg)?;
    let model = ablation.apply(&cfg.model);
    let name = format!("task{task}");
    let dir = cfg.paths.out.join(format!("{name}-{}", ablation.name()));
    let out = kfold_evaluate(&plan, &data, &model, &cfg.train, cfg.seed, |r| {
        eprintln!("{name} {}: MCC {:.2}%", r.label, r.metrics.mcc * 100.0);
    })?;
    if latents {
        for (run, pair) in out.runs.iter().zip(&plan.pairs) {
            let test = data.select(&plan.segments(&pair.test)?)?;
            let (preds, z) = predict(&mut run.model.clone(), &test, cfg.train.batch_size)?;
            let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
            let ids: Vec<String> = test.iter().map(|s| s.id.clone()).collect();
            write_text(
                &dir.join(format!("latents-{}.csv", run.label)),
                &latents_csv(&cfg.hash(), &ids, &labels, &preds, &z),
            )?;
        }
    }
    let results = write_run(cfg, &dir, &name, ablation, &plan, &out)?;
    Ok(RunSummary { dir, results })
}

/// Runs an experiment grid over the Task-2 fifths.
pub fn cmd_experiment(cfg: &RunConfig, kind: ExperimentKind, ablation: Ablation) -> Result<RunSummary> {
    let rows = read_manifest(&cfg.paths.manifest)?;
    let task2 = task_plan(cfg, &rows, 2)?;
    let plan = experiment_fold_plan(&task2, kind)?;
    let data = load_dataset(&plan.folds.concat(), cfg)?;
    let model = ablation.apply(&cfg.model);
    let name = format!("experiment-{kind}");
    let dir = cfg.paths.out.join(format!("{name}-{}", ablation.name()));
    let out = kfold_evaluate(&plan, &data, &model, &cfg.train, cfg.seed, |r| {
        eprintln!("{name} {}: MCC {:.2}%", r.label, r.metrics.mcc * 100.0);
    })?;
    let points = experiment_points(kind, &out.folds)?;
    let mut results = write_run(cfg, &dir, &name, ablation, &plan, &out)?;
    let hash = cfg.hash();
    write_text(&dir.join("experiment.csv"), &experiment_csv(&hash, &points))?;
    write_text(
        &dir.join("experiment.svg"),
        &experiment_svg(&hash, &format!("experiment ({kind}) averaged MCC"), &points),
    )?;
    results.points = Some(points);
    results.save(&dir.join("results.json"))?;
    Ok(RunSummary { dir, results })
}

/// Writes `summary.txt` and `summary.csv` into `dir`.
pub fn cmd_report(dir: &Path) -> Result<Vec<SummaryRow>> {
    let rows = summarize(dir)?;
    write_text(&dir.join("summary.txt"), &summary_text(&rows))?;
    write_text(&dir.join("summary.csv"), &summary_csv(&rows))?;
    Ok(rows)
}

/// Renders the checkpoint's first-layer kernels; returns the grid width.
pub fn cmd_kernels(checkpoint: &Path, out: &Path) -> Result<usize> {
    let (model, hash) = load_checkpoint(checkpoint)?;
    write_kernel_png(out, &model.stem.weights(), 4, &hash)
}
