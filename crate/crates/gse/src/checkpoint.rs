//! Model checkpoints: a directory holding `model.toml` (the architecture),
//! `manifest.txt` (`name kind d0xd1x...` per line, after a `config_hash`
//! line) and one `<name>.gset` per parameter or buffer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gse_core::nn::{GseResNeXt, Layer, ModelConfig, Param, ParamKind};

use crate::error::{GseError, Result};
use crate::gset;

const MANIFEST: &str = "manifest.txt";
const MODEL: &str = "model.toml";

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Weight => "weight",
        ParamKind::Gabor => "gabor",
        ParamKind::Buffer => "buffer",
    }
}

fn shape_text(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub fn save_checkpoint(dir: &Path, model: &GseResNeXt<f32>, config_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GseError::io(dir, e))?;
    let model_toml = toml::to_string(&model.config).map_err(|e| GseError::Config(e.to_string()))?;
    gset::write_atomic(&dir.join(MODEL), model_toml.as_bytes())?;
    let mut params = Vec::new();
    model.params(&mut params);
    let mut manifest = format!("config_hash {config_hash}\n");
    for p in params {
        writeln!(manifest, "{} {} {}", p.name, kind_name(p.kind), shape_text(p.value.shape())).unwrap();
        gset::save(&dir.join(format!("{}.gset", p.name)), &p.value)?;
    }
    gset::write_atomic(&dir.join(MANIFEST), manifest.as_bytes())
}

/// Rebuilds the model from `model.toml` and overwrites every parameter with
/// its stored value. Returns the model and the recorded config hash.
pub fn load_checkpoint(dir: &Path) -> Result<(GseResNeXt<f32>, String)> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| GseError::io(&p, e))
    };
    let cfg: ModelConfig = toml::from_str(&read(MODEL)?).map_err(|e| GseError::format(dir.join(MODEL), e.to_string()))?;
    let manifest = read(MANIFEST)?;
    let mut lines = manifest.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("config_hash "))
        .ok_or_else(|| GseError::format(dir.join(MANIFEST), "missing config_hash line"))?
        .to_string();
    let mut model = GseResNeXt::<f32>::new(&cfg, 0)?;
    let mut params: Vec<&mut Param<f32>> = Vec::new();
    model.params_mut(&mut params);
    let listed: Vec<&str> = lines.filter_map(|l| l.split_whitespace().next()).collect();
    if listed.len() != params.len() {
        return Err(GseError::format(
            dir.join(MANIFEST),
            format!("{} entries for a model with {} tensors", listed.len(), params.len()),
        ));
    }
    for p in params {
        let path = dir.join(format!("{}.gset", p.name));
        let value: gse_core::Tensor<f32> = gset::load(&path)?;
        if value.shape() != p.value.shape() {
            return Err(GseError::format(
                &path,
                format!("shape {:?}, expected {:?}", value.shape(), p.value.shape()),
            ));
        }
        p.value = value;
    }
    Ok((model, hash))
}
