use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamTensor;

use super::runner::{EvalRow, RunRecord, RunSummary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MANIFEST_FILE: &str = "checkpoint.json";

/// `step,train_loss,recall@K...,ndcg@K...` with one line per row.
pub fn metrics_csv(rows: &[EvalRow]) -> String {
    let ks: Vec<usize> = rows
        .first()
        .map(|r| r.val.recall.keys().copied().collect())
        .unwrap_or_default();
    let mut out = String::from("step,train_loss");
    for k in &ks {
        let _ = write!(out, ",recall@{k}");
    }
    for k in &ks {
        let _ = write!(out, ",ndcg@{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.step, r.train_loss);
        for k in &ks {
            let _ = write!(out, ",{}", r.val.recall_at(*k));
        }
        for k in &ks {
            let _ = write!(out, ",{}", r.val.ndcg_at(*k));
        }
        out.push('\n');
    }
    out
}

pub fn write_run(record: &RunRecord, dir: &Path, checkpoint: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(METRICS_FILE);
    fs::write(&path, metrics_csv(&record.rows)).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, serde_json::to_string_pretty(&record.summary)?).map_err(|e| Error::io(&path, e))?;
    if checkpoint {
        write_checkpoint(&record.best_params, dir)?;
    }
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<RunSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the binary file, in values.
    pub offset: usize,
}

/// Raw little-endian f64 values in parameter order plus a JSON shape manifest.
pub fn write_checkpoint(params: &[ParamTensor<f64>], dir: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    let mut manifest = Vec::with_capacity(params.len());
    let mut offset = 0;
    for p in params {
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += p.value.len();
        for x in p.value.as_slice() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    let path = dir.join(CHECKPOINT_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

/// Reads a checkpoint back as `(manifest entry, values)` pairs.
pub fn read_checkpoint(dir: &Path) -> Result<Vec<(ManifestEntry, Vec<f64>)>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let path = dir.join(CHECKPOINT_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    manifest
        .into_iter()
        .map(|entry| {
            let len: usize = entry.shape.iter().product();
            let slice = values.get(entry.offset..entry.offset + len).ok_or_else(|| {
                Error::InvalidConfig(format!("checkpoint too short for {}", entry.name))
            })?;
            let slice = slice.to_vec();
            Ok((entry, slice))
        })
        .collect()
}
