//! Dataset manifest: CSV with header
//! `recording_id,path,class_label,vessel_id,duration_s`. Relative paths are
//! resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use gse_core::protocol::RecordingEntry;
use gse_core::signal::ClassLabel;
use serde::{Deserialize, Serialize};

use crate::error::{GseError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub recording_id: String,
    pub path: PathBuf,
    pub class_label: ClassLabel,
    #[serde(default)]
    pub vessel_id: String,
    pub duration_s: f64,
}

impl ManifestRow {
    pub fn entry(&self) -> RecordingEntry {
        RecordingEntry {
            recording_id: self.recording_id.clone(),
            class_label: self.class_label,
            duration_s: self.duration_s,
            vessel_id: (!self.vessel_id.is_empty()).then(|| self.vessel_id.clone()),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| GseError::format(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| GseError::format(path, e.to_string()))?.clone();
    let expected = ["recording_id", "path", "class_label", "vessel_id", "duration_s"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(GseError::format(path, format!("header must be {}", expected.join(","))));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        let mut row = rec.map_err(|e| GseError::format(path, format!("row {}: {e}", i + 1)))?;
        if !ids.insert(row.recording_id.clone()) {
            return Err(GseError::format(path, format!("duplicate recording_id {}", row.recording_id)));
        }
        if row.recording_id.is_empty() || row.recording_id.contains(['/', '\\']) {
            return Err(GseError::format(path, format!("row {}: invalid recording_id", i + 1)));
        }
        if !(row.duration_s > 0.0) {
            return Err(GseError::format(path, format!("row {}: duration must be positive", i + 1)));
        }
        if row.path.is_relative() {
            row.path = base.join(&row.path);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GseError::format(path, "manifest has no rows"));
    }
    Ok(rows)
}

/// Writes rows with paths made relative to the manifest directory where
/// possible.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut w = csv::Writer::from_path(path).map_err(|e| GseError::format(path, e.to_string()))?;
    for row in rows {
        let mut r = row.clone();
        if let Ok(rel) = r.path.strip_prefix(base) {
            r.path = rel.to_path_buf();
        }
        w.serialize(r).map_err(|e| GseError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| GseError::io(path, e))
}
