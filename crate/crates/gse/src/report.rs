//! Results files, CSV tables, SVG charts and the kernel tile sheet.
//!
//! Every artifact records the config hash: JSON in a field, CSV files in a
//! leading `# config_hash=...` comment line, SVG in a comment and PNG in a
//! `tEXt` chunk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gse_core::metrics::Aggregate;
use gse_core::protocol::FoldPlan;
use gse_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{GseError, Result};
use crate::gset::write_atomic;
use crate::train::{EpochRecord, ExperimentPoint, FoldResult};

/// What a results file describes, without the per-segment lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub task: u8,
    pub seed: u64,
    pub fold_sizes: Vec<usize>,
    pub pairs: Vec<gse_core::protocol::FoldPair>,
}

impl PlanSummary {
    pub fn of(plan: &FoldPlan) -> Self {
        Self {
            task: plan.task,
            seed: plan.seed,
            fold_sizes: plan.folds.iter().map(Vec::len).collect(),
            pairs: plan.pairs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    #[serde(rename = "config-hash")]
    pub config_hash: String,
    /// `task1`, `task2`, `task3` or `experiment-a` etc.
    pub name: String,
    pub ablation: String,
    pub plan: PlanSummary,
    pub folds: Vec<FoldResult>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<ExperimentPoint>>,
}

impl ResultsFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("results serialize");
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GseError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| GseError::format(path, e.to_string()))
    }
}

fn csv_text(hash: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
    format!("# config_hash={hash}\n{body}")
}

/// Reads a CSV written by this module, skipping the hash comment.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| GseError::format(path, e.to_string()))?;
    let header = r
        .headers()
        .map_err(|e| GseError::format(path, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| GseError::format(path, e.to_string()))?;
    Ok((header, rows))
}

pub fn history_csv(hash: &str, records: &[EpochRecord]) -> String {
    csv_text(
        hash,
        &["epoch", "train_loss", "val_mcc", "seconds"],
        records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_mcc.to_string(),
                format!("{:.3}", r.seconds),
            ]
        }),
    )
}

pub fn experiment_csv(hash: &str, points: &[ExperimentPoint]) -> String {
    csv_text(
        hash,
        &["size", "distance", "runs", "mean_mcc", "std_mcc"],
        points.iter().map(|p| {
            vec![
                p.size.to_string(),
                p.distance.to_string(),
                p.runs.to_string(),
                p.mean_mcc.to_string(),
                p.std_mcc.to_string(),
            ]
        }),
    )
}

/// `segment_id, true_label, predicted_label, f0, f1, ...`.
pub fn latents_csv(hash: &str, ids: &[String], labels: &[usize], preds: &[usize], latents: &[Vec<f32>]) -> String {
    let dim = latents.first().map_or(0, Vec::len);
    let mut header = vec!["segment_id".to_string(), "true_label".into(), "predicted_label".into()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        hash,
        &header,
        ids.iter().zip(labels).zip(preds).zip(latents).map(|(((id, l), p), z)| {
            let mut row = vec![id.clone(), l.to_string(), p.to_string()];
            row.extend(z.iter().map(f32::to_string));
            row
        }),
    )
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        M + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * M)
    }

    fn py(&self, y: f64) -> f64 {
        H - M - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - 2.0 * M)
    }
}

fn svg_open(hash: &str, title: &str, data: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, "<!-- config_hash={hash} -->").unwrap();
    writeln!(s, "<title>{}</title>", esc(title)).unwrap();
    writeln!(s, "<metadata><![CDATA[\n{data}]]></metadata>").unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        W / 2.0,
        esc(title)
    )
    .unwrap();
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, yticks: &[f64]) {
    let (l, r, t, b) = (M, W - M, M, H - M);
    writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#).unwrap();
    for &y in yticks {
        let py = f.py(y);
        writeln!(s, r##"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="#ddd"/>"##).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{y}</text>"#,
            l - 6.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W / 2.0,
        H - 14.0,
        esc(xlabel)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    )
    .unwrap();
}

fn mcc_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let lo = values.fold(0.0f64, f64::min);
    (if lo < 0.0 { -100.0 } else { 0.0 }, 100.0)
}

fn ticks(lo: f64) -> Vec<f64> {
    if lo < 0.0 {
        vec![-100.0, -50.0, 0.0, 50.0, 100.0]
    } else {
        vec![0.0, 25.0, 50.0, 75.0, 100.0]
    }
}

/// Per-fold MCC bars with the mean drawn across them.
pub fn fold_bar_svg(hash: &str, title: &str, folds: &[FoldResult]) -> String {
    let data = csv_text(
        hash,
        &["label", "mcc"],
        folds.iter().map(|f| vec![f.label.clone(), f.mcc.to_string()]),
    );
    let mut s = svg_open(hash, title, &data);
    let (y0, y1) = mcc_range(folds.iter().map(|f| f.mcc * 100.0));
    let n = folds.len().max(1) as f64;
    let f = Frame { x0: 0.0, x1: n, y0, y1 };
    axes(&mut s, &f, "fold", "MCC (%)", &ticks(y0));
    for (i, fold) in folds.iter().enumerate() {
        let v = fold.mcc * 100.0;
        let (xa, xb) = (f.px(i as f64 + 0.15), f.px(i as f64 + 0.85));
        let (ya, yb) = (f.py(v.max(0.0)), f.py(v.min(0.0)));
        writeln!(
            s,
            r#"<rect x="{xa:.1}" y="{ya:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
            xb - xa,
            yb - ya,
            PALETTE[0]
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:.1}</text>"#,
            (xa + xb) / 2.0,
            ya - 4.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            (xa + xb) / 2.0,
            H - M + 16.0,
            esc(&fold.label)
        )
        .unwrap();
    }
    let mean = folds.iter().map(|f| f.mcc).sum::<f64>() / n * 100.0;
    writeln!(
        s,
        r#"<line x1="{M}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="black" stroke-dasharray="4 3"/>"#,
        f.py(mean),
        W - M
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Averaged experiment MCC against distance, one line per training size.
pub fn experiment_svg(hash: &str, title: &str, points: &[ExperimentPoint]) -> String {
    let data = experiment_csv(hash, points);
    let mut s = svg_open(hash, title, &data);
    let (y0, y1) = mcc_range(points.iter().map(|p| p.mean_mcc * 100.0));
    let dmax = points.iter().map(|p| p.distance).max().unwrap_or(1) as f64;
    let f = Frame {
        x0: 0.5,
        x1: dmax + 0.5,
        y0,
        y1,
    };
    axes(&mut s, &f, "temporal distance (folds)", "MCC (%)", &ticks(y0));
    for d in 1..=dmax as usize {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{d}</text>"#,
            f.px(d as f64),
            H - M + 16.0
        )
        .unwrap();
    }
    let mut sizes: Vec<usize> = points.iter().map(|p| p.size).collect();
    sizes.dedup();
    sizes.sort_unstable();
    sizes.dedup();
    for (i, size) in sizes.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.size == *size)
            .map(|p| (f.px(p.distance as f64), f.py(p.mean_mcc * 100.0)))
            .collect();
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(j, (x, y))| format!("{}{x:.1} {y:.1}", if j == 0 { "M" } else { "L" }))
            .collect();
        writeln!(s, r#"<path d="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#, d.join(" ")).unwrap();
        for (x, y) in pts {
            writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{colour}"/>"#).unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{colour}">size {size}</text>"#,
            W - M - 60.0,
            M + 14.0 * (i as f64 + 1.0)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// One validation-MCC curve per entry; a red dashed vertical line marks each
/// curve's steady-state epoch.
pub struct Curve<'a> {
    pub name: &'a str,
    pub records: &'a [EpochRecord],
    pub steady_state_epoch: Option<usize>,
}

pub fn convergence_svg(hash: &str, title: &str, curves: &[Curve]) -> String {
    let mut data = String::from("curve,epoch,val_mcc,steady_state_epoch\n");
    for c in curves {
        for r in c.records {
            let sse = c.steady_state_epoch.map_or(String::new(), |e| e.to_string());
            writeln!(data, "{},{},{},{sse}", c.name, r.epoch, r.val_mcc).unwrap();
        }
    }
    let mut s = svg_open(hash, title, &format!("# config_hash={hash}\n{data}"));
    let (y0, y1) = mcc_range(curves.iter().flat_map(|c| c.records.iter().map(|r| r.val_mcc * 100.0)));
    let emax = curves.iter().flat_map(|c| c.records.iter().map(|r| r.epoch)).max().unwrap_or(1) as f64;
    let f = Frame {
        x0: 1.0,
        x1: emax.max(2.0),
        y0,
        y1,
    };
    axes(&mut s, &f, "epoch", "validation MCC (%)", &ticks(y0));
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = c
            .records
            .iter()
            .enumerate()
            .map(|(j, r)| {
                format!(
                    "{}{:.1} {:.1}",
                    if j == 0 { "M" } else { "L" },
                    f.px(r.epoch as f64),
                    f.py(r.val_mcc * 100.0)
                )
            })
            .collect();
        writeln!(s, r#"<path d="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#, d.join(" ")).unwrap();
        if let Some(e) = c.steady_state_epoch {
            let x = f.px(e as f64);
            writeln!(
                s,
                r#"<line class="steady-state" data-curve="{}" data-epoch="{e}" x1="{x:.1}" y1="{M}" x2="{x:.1}" y2="{}" stroke="red" stroke-dasharray="6 4"/>"#,
                esc(c.name),
                H - M
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            W - M - 120.0,
            H - M - 14.0 * (curves.len() - i) as f64,
            esc(c.name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// One line of the cross-results summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub file: String,
    pub config_hash: String,
    pub name: String,
    pub ablation: String,
    pub runs: usize,
    pub mean_mcc: f64,
    pub std_mcc: f64,
}

/// Collects every `*.json` results file under `dir` (recursively), sorted
/// by path.
pub fn summarize(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut files = Vec::new();
    collect_json(dir, &mut files)?;
    files.sort();
    let mut rows = Vec::new();
    for f in files {
        let Ok(r) = ResultsFile::load(&f) else { continue };
        rows.push(SummaryRow {
            file: f.strip_prefix(dir).unwrap_or(&f).display().to_string(),
            config_hash: r.config_hash,
            name: r.name,
            ablation: r.ablation,
            runs: r.folds.len(),
            mean_mcc: r.aggregate.mean,
            std_mcc: r.aggregate.std,
        });
    }
    if rows.is_empty() {
        return Err(GseError::Data(format!("no results files under {}", dir.display())));
    }
    Ok(rows)
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| GseError::io(dir, e))?;
    for e in entries {
        let p = e.map_err(|e| GseError::io(dir, e))?.path();
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "json") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<40} {:<14} {:<8} {:>4} {:>8} {:>7}  {}\n",
        "file", "name", "ablation", "runs", "MCC %", "std", "config"
    );
    for r in rows {
        writeln!(
            s,
            "{:<40} {:<14} {:<8} {:>4} {:>8.2} {:>7.2}  {}",
            r.file,
            r.name,
            r.ablation,
            r.runs,
            r.mean_mcc * 100.0,
            r.std_mcc * 100.0,
            &r.config_hash[..r.config_hash.len().min(12)]
        )
        .unwrap();
    }
    s
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Tile grid of first-layer kernels, each min-max scaled to 8-bit grey.
/// Returns `(width, height, pixels)`; kernels fill a `ceil(sqrt(n))`-wide
/// grid row by row, `scale` pixels per weight, one-pixel white gutters.
pub fn kernel_sheet(weights: &Tensor<f32>, scale: usize) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (n, _, kh, kw) = weights.dims4()?;
    let cols = (1..=n).find(|c| c * c >= n).unwrap_or(1);
    let rows = n.div_ceil(cols);
    let (tw, th) = (kw * scale + 1, kh * scale + 1);
    let (width, height) = (cols * tw + 1, rows * th + 1);
    let mut px = vec![255u8; width * height];
    let per = kh * kw * weights.dim(1);
    for (i, k) in weights.data().chunks_exact(per).enumerate() {
        let k = &k[..kh * kw];
        let lo = k.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = k.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = (hi - lo).max(1e-12);
        let (ox, oy) = ((i % cols) * tw + 1, (i / cols) * th + 1);
        for y in 0..kh * scale {
            for x in 0..kw * scale {
                let v = (k[(y / scale) * kw + x / scale] - lo) / span;
                px[(oy + y) * width + ox + x] = (v * 255.0).round() as u8;
            }
        }
    }
    Ok((cols, width, height, px))
}

pub fn write_kernel_png(path: &Path, weights: &Tensor<f32>, scale: usize, hash: &str) -> Result<usize> {
    let (cols, width, height, px) = kernel_sheet(weights, scale)?;
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.add_text_chunk("config_hash".into(), hash.into())
            .map_err(|e| GseError::format(path, e.to_string()))?;
        let mut w = enc.write_header().map_err(|e| GseError::format(path, e.to_string()))?;
        w.write_image_data(&px).map_err(|e| GseError::format(path, e.to_string()))?;
    }
    write_atomic(path, &buf)?;
    Ok(cols)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}
