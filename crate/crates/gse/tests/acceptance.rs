//! Acceptance checks. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p gse --test acceptance -- 1 4`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;

use gse::cache::{eligible, load_dataset, required_segments, Dataset};
use gse::commands::{cmd_experiment, cmd_preprocess, cmd_run, cmd_synth, task_plan, SynthArgs};
use gse::config::RunConfig;
use gse::manifest::ManifestRow;
use gse::report::{convergence_svg, write_text, Curve};
use gse::train::{kfold_evaluate, train_step, Ablation, RunOutcome};
use gse_core::gabor::{init_gabor_bank, GaborBank, GaborConv, GaborParams};
use gse_core::gradcheck::{check_close, numeric_grad};
use gse_core::metrics::ConfusionMatrix;
use gse_core::nn::{softmax_cross_entropy, BatchNorm2d, Conv2d, ConvGeom, GseResNeXt, Layer, Linear, Mode, ModelConfig, SqueezeExcite};
use gse_core::optim::AdamW;
use gse_core::protocol::{
    experiment_plan, fifths, filter_eligible, recording_segments, split_task1, split_task2, split_task3, ExperimentKind, FoldPlan,
    RecordingEntry, Task2Options,
};
use gse_core::rng::{seeded, Rng};
use gse_core::signal::{cqt, AudioClip, ClassLabel, ClipMeta, CqtParams, Segmentation};
use gse_core::Tensor;

type Check = Result<String, String>;
type Trial<'a> = Box<dyn FnMut(&mut Rng) -> Result<f64, String> + 'a>;
type Criterion = (u32, &'static str, fn() -> Check);

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const CORPUS_SEED: u64 = 1000;
const CONVERGENCE_EPOCHS: usize = 20;

fn rand_tensor(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Compares input and parameter gradients of `L = sum(y * r)` against central
/// differences. Returns the worst relative error.
fn check_layer<L: Layer<f64> + Clone>(layer: &L, x: &Tensor<f64>, input_grad: bool, rng: &mut Rng) -> Result<f64, String> {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let eval = |l: &L, x: &Tensor<f64>| l.clone().forward(x, Mode::Train).unwrap();
    let r = rand_tensor(eval(layer, x).shape(), rng);
    let mut live = layer.clone();
    live.zero_grad();
    live.forward(x, Mode::Train).map_err(|e| e.to_string())?;
    let dx = live.backward(&r).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    if input_grad {
        let num = numeric_grad(x, H, |xp| dot(&eval(layer, xp), &r));
        worst = worst.max(check_close(dx.data(), num.data(), TOL).map_err(|e| format!("input: {e}"))?);
    }
    let mut ps = Vec::new();
    live.params(&mut ps);
    for (i, p) in ps.iter().enumerate() {
        if !p.is_learnable() {
            continue;
        }
        let num = numeric_grad(&p.value, H, |v| {
            let mut probe = layer.clone();
            let mut qs = Vec::new();
            probe.params_mut(&mut qs);
            qs[i].value = v.clone();
            dot(&eval(&probe, x), &r)
        });
        worst = worst.max(check_close(p.grad.data(), num.data(), TOL).map_err(|e| format!("{}: {e}", p.name))?);
    }
    Ok(worst)
}

fn gradient_suite() -> Check {
    let mut rng = seeded(2024);
    let mut report = Vec::new();
    let mut run = |name: &str, rng: &mut Rng, mut one: Trial| -> Result<(), String> {
        let mut worst = 0.0f64;
        for i in 0..10 {
            worst = worst.max(one(rng).map_err(|e| format!("{name} config {i}: {e}"))?);
        }
        report.push(format!("{name} {worst:.1e}"));
        Ok(())
    };

    run(
        "gabor",
        &mut rng,
        Box::new(|rng| {
            let n = rng.random_range(1..=3);
            let kernels = (0..n)
                .map(|_| GaborParams {
                    sigma: rng.random_range(0.8..4.0),
                    theta: rng.random_range(-PI..PI),
                    f0: rng.random_range(0.02..0.45),
                    phi: rng.random_range(-PI..PI),
                    gamma: rng.random_range(0.5..2.0),
                })
                .collect();
            let bank = GaborBank {
                kernels,
                kernel_size: 7,
                stride: 2,
                in_channels: 1,
            };
            let mut layer = GaborConv::<f64>::new("gabor", &bank).map_err(|e| e.to_string())?;
            layer.input_grad = true;
            let side = rng.random_range(7..=10);
            let x = rand_tensor(&[2, 1, side, side], rng);
            check_layer(&layer, &x, true, rng)
        }),
    )?;
    run(
        "grouped conv",
        &mut rng,
        Box::new(|rng| {
            let groups = rng.random_range(1..=4);
            let cin = groups * rng.random_range(1..=2);
            let cout = groups * rng.random_range(1..=2);
            let k = [1, 3][rng.random_range(0..2)];
            let geom = ConvGeom::new(rng.random_range(1..=2), rng.random_range(0..=k / 2), groups);
            let layer = Conv2d::<f64>::he_normal("conv", cin, cout, k, geom, rng);
            let side = rng.random_range(3..=5);
            let x = rand_tensor(&[2, cin, side, side], rng);
            check_layer(&layer, &x, true, rng)
        }),
    )?;
    run(
        "batch norm",
        &mut rng,
        Box::new(|rng| {
            let c = rng.random_range(1..=4);
            let mut layer = BatchNorm2d::<f64>::new("bn", c);
            layer.gamma.value = rand_tensor(&[c], rng);
            layer.beta.value = rand_tensor(&[c], rng);
            let x = rand_tensor(&[rng.random_range(2..=4), c, rng.random_range(1..=3), rng.random_range(2..=3)], rng);
            check_layer(&layer, &x, true, rng)
        }),
    )?;
    run(
        "squeeze-excite",
        &mut rng,
        Box::new(|rng| {
            let r = rng.random_range(1..=4);
            let ch = r * rng.random_range(1..=3);
            let layer = SqueezeExcite::<f64>::new("se", ch, r, rng).map_err(|e| e.to_string())?;
            let x = rand_tensor(&[rng.random_range(1..=3), ch, rng.random_range(1..=3), 2], rng);
            check_layer(&layer, &x, true, rng)
        }),
    )?;
    run(
        "linear",
        &mut rng,
        Box::new(|rng| {
            let (i, o) = (rng.random_range(1..=6), rng.random_range(1..=5));
            let mut layer = Linear::<f64>::new("fc", i, o, rng);
            layer.bias.value = rand_tensor(&[o], rng);
            let x = rand_tensor(&[rng.random_range(1..=4), i], rng);
            check_layer(&layer, &x, true, rng)
        }),
    )?;
    run(
        "softmax-CE",
        &mut rng,
        Box::new(|rng| {
            let (n, k) = (rng.random_range(1..=5), rng.random_range(2..=6));
            let logits = rand_tensor(&[n, k], rng).map(|v| 3.0 * v);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let (_, g) = softmax_cross_entropy(&logits, &labels).map_err(|e| e.to_string())?;
            let num = numeric_grad(&logits, 1e-6, |l| softmax_cross_entropy(l, &labels).unwrap().0);
            check_close(g.data(), num.data(), 1e-4)
        }),
    )?;
    Ok(format!("10 configurations each, worst relative error: {}", report.join(", ")))
}

fn architecture() -> Check {
    let cfg = ModelConfig::default();
    let mut model = GseResNeXt::<f32>::new(&cfg, 0).map_err(|e| e.to_string())?;
    let shapes = model.trace_shapes(&Tensor::zeros(&[1, 1, 256, 256])).map_err(|e| e.to_string())?;
    let sides: Vec<usize> = shapes.iter().map(|s| s.height).collect();
    let want = [128, 64, 64, 32, 16, 8, 1, 1];
    if sides != want || shapes.iter().any(|s| s.height != s.width) {
        return Err(format!("spatial sizes {sides:?}, expected {want:?}"));
    }
    let logits = shapes.last().unwrap().channels;
    if logits != 4 {
        return Err(format!("{logits} logits"));
    }
    let n = model.param_count();
    if !(13_200_000..=16_200_000).contains(&n) {
        return Err(format!("{n} parameters outside [13.2M, 16.2M]"));
    }
    Ok(format!(
        "outputs 128/64/64/32/16/8/1, 4 logits, {n} parameters (SE reduction ratio {} assumed)",
        cfg.se_reduction
    ))
}

fn gabor_init() -> Check {
    let bank = init_gabor_bank(64).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (k, p) in bank.kernels.iter().enumerate() {
        let (m, n) = ((k % 40) / 8 + 1, (k % 40) % 8 + 1);
        let mut omega = PI / (2.0 * 2f64.sqrt());
        for _ in 1..m {
            omega /= 2f64.sqrt();
        }
        let theta = (n - 1) as f64 * PI / 8.0;
        let errs = [p.f0 * 2.0 * PI - omega, p.theta - theta, p.sigma - PI / omega, p.gamma - 1.0, p.phi];
        worst = errs.iter().fold(worst, |w, e| w.max(e.abs()));
    }
    if worst > 1e-12 {
        return Err(format!("largest deviation {worst:e}"));
    }
    let cfg = ModelConfig::default();
    let gabor = GseResNeXt::<f32>::new(&cfg, 0).map_err(|e| e.to_string())?.first_layer_learnable();
    let plain = GseResNeXt::<f32>::new(&ModelConfig { use_gabor: false, ..cfg }, 0)
        .map_err(|e| e.to_string())?
        .first_layer_learnable();
    if (gabor, plain) != (320, 3136) {
        return Err(format!("first layer learnable {gabor} (Gabor) vs {plain} (plain)"));
    }
    Ok(format!("64 kernels within {worst:.1e}; first layer 320 vs 3136 parameters"))
}

fn tone(f: f64, sr: u32, seconds: f64) -> AudioClip {
    let n = (seconds * f64::from(sr)) as usize;
    let s = (0..n)
        .map(|i| (0.5 * (2.0 * PI * f * i as f64 / f64::from(sr)).sin()) as f32)
        .collect();
    let meta = ClipMeta {
        recording_id: "tone".into(),
        class_label: ClassLabel::Tug,
        start_offset: 0.0,
        vessel_id: None,
    };
    AudioClip::new(s, sr, meta).unwrap()
}

fn cqt_localization() -> Check {
    let params = CqtParams::default();
    let mut rng = seeded(7);
    let peak = |f: f64| -> Result<i64, String> {
        let spec = cqt(&tone(f, params.sample_rate, 4.0), params).map_err(|e| e.to_string())?;
        let prof = spec.bin_profile();
        Ok((0..prof.len()).max_by(|&a, &b| prof[a].total_cmp(&prof[b])).unwrap() as i64)
    };
    let mut worst = (0i64, 0i64);
    for _ in 0..20 {
        let f = 20.0 * (7000.0f64 / 20.0).powf(rng.random_range(0.0..1.0));
        let k = peak(f)?;
        let want = (24.0 * (f / 10.0).log2()).round() as i64;
        if (k - want).abs() > 1 {
            return Err(format!("{f:.1} Hz peaks at bin {k}, expected {want}"));
        }
        let shift = peak(2.0 * f)? - k;
        if (shift - 24).abs() > 1 {
            return Err(format!("octave above {f:.1} Hz moves the peak by {shift} bins"));
        }
        worst = (worst.0.max((k - want).abs()), worst.1.max((shift - 24).abs()));
    }
    Ok(format!(
        "20 tones in 20..7000 Hz; bin offset <= {}, octave shift 24 +- {}",
        worst.0, worst.1
    ))
}

fn metrics() -> Check {
    let mut rng = seeded(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c: Vec<u64> = (0..4).map(|_| rng.random_range(0..60)).collect();
        let m = ConfusionMatrix::from_counts(2, c.clone()).map_err(|e| e.to_string())?;
        // rows are truth, columns prediction; class 1 is positive
        let (tn, fp, fn_, tp) = (c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        let want = if den == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / den };
        worst = worst.max((m.mcc() - want).abs());
    }
    if worst > 1e-10 {
        return Err(format!("2x2 MCC deviates by {worst:e}"));
    }
    let labels: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let constant = ConfusionMatrix::from_predictions(&vec![2; 400], &labels, 4).map_err(|e| e.to_string())?;
    if constant.mcc() != 0.0 || (constant.accuracy() - 0.25).abs() > 1e-12 {
        return Err(format!(
            "constant predictor: MCC {} accuracy {}",
            constant.mcc(),
            constant.accuracy()
        ));
    }
    let perfect = ConfusionMatrix::from_predictions(&labels, &labels, 4).map_err(|e| e.to_string())?;
    if (perfect.mcc() - 1.0).abs() > 1e-12 {
        return Err(format!("perfect predictor: MCC {}", perfect.mcc()));
    }
    Ok(format!(
        "1000 2x2 matrices within {worst:.1e}; constant predictor 0 / 0.25; perfect 1"
    ))
}

fn random_manifest(rng: &mut Rng) -> Vec<RecordingEntry> {
    let mut recs = Vec::new();
    for class in ClassLabel::ALL {
        for i in 0..rng.random_range(5..=9) {
            let vessel = rng.random_bool(0.5).then(|| format!("v{}", rng.random_range(0..4)));
            recs.push(RecordingEntry {
                recording_id: format!("{}-{i}", class.name()),
                class_label: class,
                duration_s: rng.random_range(150.0..400.0f64).round(),
                vessel_id: vessel,
            });
        }
    }
    // too short for any task
    recs.push(RecordingEntry {
        recording_id: "short".into(),
        class_label: ClassLabel::Tug,
        duration_s: 60.0,
        vessel_id: None,
    });
    recs
}

fn pairs_partition(plan: &FoldPlan) -> Result<(), String> {
    let ids: Vec<Vec<String>> = plan.folds.iter().map(|f| f.iter().map(|s| s.id()).collect()).collect();
    let mut all: Vec<&String> = ids.iter().flatten().collect();
    let total = all.len();
    all.sort();
    all.dedup();
    if all.len() != total {
        return Err(format!("task {}: a segment sits in two folds", plan.task));
    }
    let mut tested = vec![0usize; plan.folds.len()];
    for p in &plan.pairs {
        if p.train.iter().any(|f| p.test.contains(f)) {
            return Err(format!("task {} pair {}: train and test share a fold", plan.task, p.label));
        }
        let mut used: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
        used.sort_unstable();
        if used != (1..=plan.folds.len()).collect::<Vec<_>>() {
            return Err(format!("task {} pair {}: folds {used:?} do not cover the plan", plan.task, p.label));
        }
        for &t in &p.test {
            tested[t - 1] += 1;
        }
    }
    if plan.task != 2 && tested.iter().any(|&n| n != 1) {
        return Err(format!("task {}: folds tested {tested:?} times", plan.task));
    }
    Ok(())
}

fn protocol() -> Check {
    let mut rng = seeded(31);
    let seg = Segmentation {
        seg_seconds: 30.0,
        overlap_seconds: 15.0,
    };
    let trials = 25;
    for trial in 0..trials {
        let recs = random_manifest(&mut rng);
        let kept = filter_eligible(&recs).map_err(|e| e.to_string())?;
        if kept.len() + 1 != recs.len() || kept.iter().any(|r| r.recording_id == "short") {
            return Err(format!(
                "manifest {trial}: eligibility filter kept {} of {}",
                kept.len(),
                recs.len()
            ));
        }
        let seed = rng.random_range(0..1000);
        let fail = |e: String| format!("manifest {trial}: {e}");

        let mut segs = Vec::new();
        for r in &kept {
            segs.extend(recording_segments(r, seg).map_err(|e| e.to_string())?);
        }
        let t1 = split_task1(&segs, 5, seed).map_err(|e| e.to_string())?;
        pairs_partition(&t1).map_err(fail)?;
        if t1.num_segments() != segs.len() {
            return Err(fail(format!("task 1 holds {} of {} segments", t1.num_segments(), segs.len())));
        }

        let t3 = split_task3(&kept, 5, seed, seg).map_err(|e| e.to_string())?;
        pairs_partition(&t3).map_err(fail)?;
        if t3.num_segments() != segs.len() {
            return Err(fail(format!("task 3 holds {} of {} segments", t3.num_segments(), segs.len())));
        }
        for r in &kept {
            let homes: Vec<usize> = (0..5)
                .filter(|&f| t3.folds[f].iter().any(|s| s.recording_id == r.recording_id))
                .collect();
            if homes.len() != 1 {
                return Err(fail(format!("task 3 splits {} across folds {homes:?}", r.recording_id)));
            }
        }

        let opts = Task2Options {
            segmentation: Segmentation {
                overlap_seconds: 0.0,
                ..seg
            },
            drop_short: false,
        };
        let t2 = split_task2(&kept, opts).map_err(|e| e.to_string())?;
        pairs_partition(&t2).map_err(fail)?;
        for r in &kept {
            let bounds = fifths(r.duration_s);
            let mut last_end = f64::NEG_INFINITY;
            for (f, fold) in t2.folds.iter().enumerate() {
                let mut offs: Vec<f64> = fold
                    .iter()
                    .filter(|s| s.recording_id == r.recording_id)
                    .map(|s| s.start_offset)
                    .collect();
                offs.sort_by(f64::total_cmp);
                let (lo, len) = bounds[f];
                let hi = lo + len;
                if offs
                    .iter()
                    .any(|&o| o < lo - 1e-9 || o + seg.seg_seconds > hi + 1e-6 || o < last_end - 1e-9)
                {
                    return Err(fail(format!(
                        "task 2 fold {} of {} is out of temporal order",
                        f + 1,
                        r.recording_id
                    )));
                }
                if let Some(&o) = offs.last() {
                    last_end = o + seg.seg_seconds;
                }
            }
        }

        for kind in [ExperimentKind::A, ExperimentKind::B, ExperimentKind::C] {
            let plan = gse_core::protocol::experiment_fold_plan(&t2, kind).map_err(|e| e.to_string())?;
            for p in &plan.pairs {
                if p.train.iter().any(|f| p.test.contains(f)) {
                    return Err(fail(format!("experiment {kind} run {} trains on its test fold", p.label)));
                }
            }
        }
    }
    let counts: Vec<usize> = [ExperimentKind::A, ExperimentKind::B, ExperimentKind::C]
        .iter()
        .map(|&k| experiment_plan(k).len())
        .collect();
    if counts != [8, 8, 18] {
        return Err(format!("experiment run counts {counts:?}, expected [8, 8, 18]"));
    }
    Ok(format!("{trials} random manifests; experiment plans a/b/c enumerate 8/8/18 runs"))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The synthetic desk corpus, written and cached through the command layer.
struct Desk {
    cfg: RunConfig,
    rows: Vec<ManifestRow>,
    data: Dataset,
    root: PathBuf,
}

fn desk() -> Result<&'static Desk, String> {
    static DESK: std::sync::OnceLock<Result<Desk, String>> = std::sync::OnceLock::new();
    DESK.get_or_init(|| {
        let t = Instant::now();
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let _ = std::fs::remove_dir_all(&root);
        let corpus = root.join("corpus");
        let rows = cmd_synth(&SynthArgs {
            classes: 4,
            per_class: 20,
            duration: 150.0,
            out: corpus.clone(),
            seed: CORPUS_SEED,
            profiles: None,
        })
        .map_err(|e| e.to_string())?;
        let mut cfg = RunConfig::load(Some(&workspace().join("configs/desk.toml")), &[]).map_err(|e| e.to_string())?;
        cfg.paths.manifest = corpus.join("manifest.csv");
        cfg.paths.cache = corpus.join("cache");
        cfg.paths.out = root.join("results");
        cmd_preprocess(&cfg).map_err(|e| e.to_string())?;
        let segs = required_segments(&eligible(&rows).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
        let data = load_dataset(&segs, &cfg).map_err(|e| e.to_string())?;
        eprintln!(
            "desk corpus: {} recordings, {} segments in {:.0}s",
            rows.len(),
            data.len(),
            t.elapsed().as_secs_f64()
        );
        Ok(Desk { cfg, rows, data, root })
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn seeded_cfg(base: &RunConfig, seed: u64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.paths.out = base.paths.out.join(format!("seed{seed}"));
    cfg
}

fn task_ordering() -> Check {
    let desk = desk()?;
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let cfg = seeded_cfg(&desk.cfg, seed);
        let mut mcc = [0.0; 3];
        for task in 1..=3u8 {
            let run = cmd_run(&cfg, task, Ablation::None, false).map_err(|e| e.to_string())?;
            mcc[usize::from(task) - 1] = run.results.aggregate.mean;
        }
        let ok = mcc[0] - mcc[1] > 0.05 && mcc[1] - mcc[2] > 0.05;
        good += usize::from(ok);
        lines.push(format!(
            "seed {seed} {:.1}/{:.1}/{:.1}",
            mcc[0] * 100.0,
            mcc[1] * 100.0,
            mcc[2] * 100.0
        ));
        eprintln!("  task MCC {}{}", lines.last().unwrap(), if ok { "" } else { " (gap too small)" });
    }
    let msg = format!("{good}/5 seeds with T1 > T2 > T3 by > 5 points ({})", lines.join(", "));
    if good >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Non-increasing, allowing a single rise of at most two points.
fn mostly_non_increasing(points: &[f64]) -> bool {
    let rises: Vec<f64> = points.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.02)
}

fn distance_trend() -> Check {
    let desk = desk()?;
    let mut good = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let cfg = seeded_cfg(&desk.cfg, seed);
        let run = cmd_experiment(&cfg, ExperimentKind::A, Ablation::None).map_err(|e| e.to_string())?;
        let points: Vec<f64> = run.results.points.unwrap_or_default().iter().map(|p| p.mean_mcc).collect();
        let ok = points.len() == 4 && mostly_non_increasing(&points);
        good += usize::from(ok);
        let shown: Vec<String> = points.iter().map(|p| format!("{:.1}", p * 100.0)).collect();
        lines.push(format!("seed {seed} {}", shown.join("/")));
        eprintln!(
            "  distance 1..4 MCC {}{}",
            lines.last().unwrap(),
            if ok { "" } else { " (not monotone)" }
        );
    }
    let msg = format!("{good}/5 seeds non-increasing over distance 1..4 ({})", lines.join(", "));
    if good >= 3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn convergence() -> Check {
    let desk = desk()?;
    let mut gabor_epochs = Vec::new();
    let mut plain_epochs = Vec::new();
    let mut runs: Vec<(String, RunOutcome)> = Vec::new();
    for seed in SEEDS {
        let mut cfg = seeded_cfg(&desk.cfg, seed);
        cfg.train.epochs = CONVERGENCE_EPOCHS;
        let mut plan = task_plan(&cfg, &desk.rows, 1).map_err(|e| e.to_string())?;
        plan.pairs.truncate(1);
        for ablation in [Ablation::None, Ablation::Gabor] {
            let model = ablation.apply(&cfg.model);
            let mut out = kfold_evaluate(&plan, &desk.data, &model, &cfg.train, seed, |_| {}).map_err(|e| e.to_string())?;
            let run = out.runs.remove(0);
            // a run that never settles counts as one epoch past the end
            let epoch = run.history.steady_state_epoch.unwrap_or(CONVERGENCE_EPOCHS + 1);
            let name = if model.use_gabor { "gabor" } else { "plain" };
            eprintln!("  seed {seed} {name}: steady state at {:?}", run.history.steady_state_epoch);
            if model.use_gabor { &mut gabor_epochs } else { &mut plain_epochs }.push(epoch);
            runs.push((format!("{name}-seed{seed}"), run));
        }
    }
    let curves: Vec<Curve> = runs
        .iter()
        .map(|(name, r)| Curve {
            name,
            records: &r.history.records,
            steady_state_epoch: r.history.steady_state_epoch,
        })
        .collect();
    let svg = desk.root.join("convergence.svg");
    write_text(
        &svg,
        &convergence_svg(&desk.cfg.hash(), "Gabor vs plain first layer: validation MCC", &curves),
    )
    .map_err(|e| e.to_string())?;
    let (g, p) = (median(gabor_epochs.clone()), median(plain_epochs.clone()));
    let msg = format!(
        "median steady-state epoch Gabor {g} {gabor_epochs:?} vs plain {p} {plain_epochs:?}; curves in {}",
        svg.display()
    );
    if g <= p {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn overfit() -> Check {
    const SIZE: usize = 64;
    let cfg = ModelConfig {
        input_size: SIZE,
        ..ModelConfig::default()
    };
    let mut rng = seeded(99);
    let x = rand_tensor(&[16, 1, SIZE, SIZE], &mut rng).cast::<f32>();
    let labels: Vec<usize> = (0..16).map(|i| i % 4).collect();
    let train_cfg = gse::train::TrainConfig::default();
    let mut model = GseResNeXt::<f32>::new(&cfg, 3).map_err(|e| e.to_string())?;
    let mut opt = AdamW::new(train_cfg.adamw()).map_err(|e| e.to_string())?;
    let mut reached = None;
    let mut loss = f64::NAN;
    for step in 1..=200 {
        loss = train_step(&mut model, &mut opt, &x, &labels).map_err(|e| e.to_string())?;
        if loss < 0.05 {
            reached = Some(step);
            break;
        }
    }
    let Some(step) = reached else {
        return Err(format!("loss still {loss:.4} after 200 steps"));
    };
    let mut ablations = Vec::new();
    for ab in Ablation::ALL {
        let mut m = GseResNeXt::<f32>::new(&ab.apply(&cfg), 4).map_err(|e| e.to_string())?;
        let mut o = AdamW::new(train_cfg.adamw()).map_err(|e| e.to_string())?;
        let mut last = 0.0;
        for _ in 0..3 {
            last = train_step(&mut m, &mut o, &x, &labels).map_err(|e| format!("ablation {}: {e}", ab.name()))?;
        }
        ablations.push(format!("{} {last:.3}", ab.name()));
    }
    Ok(format!(
        "full-width model on {SIZE}x{SIZE} inputs: loss {loss:.4} at step {step}; ablations train with finite loss ({})",
        ablations.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "gradient suite", gradient_suite),
        (2, "architecture shapes and size", architecture),
        (3, "Gabor initialization", gabor_init),
        (4, "CQT tone localization", cqt_localization),
        (5, "metrics", metrics),
        (6, "protocol invariants", protocol),
        (7, "task ordering T1 > T2 > T3", task_ordering),
        (8, "temporal distance trend", distance_trend),
        (9, "Gabor convergence", convergence),
        (10, "overfit one batch", overfit),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("[PASS] {id:>2} {name}: {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("[FAIL] {id:>2} {name}: {msg} ({secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
