//! Weight files, JSONL datasets and metrics files.
//!
//! Every writer goes through [`write_atomic`]: the bytes land in a sibling
//! temporary file which is then renamed over the destination, so readers
//! never observe a half-written file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constructions::{BuiltNetwork, ConstructionMeta, ConstructionParams, SelectionLayer, Task};
use crate::evalkit::{DatasetRecord, MetricsReport};
use crate::lang_core::{GenParams, Lang};
use crate::transformer_core::{AttnMode, Head, TransformerModel};

/// Version written into every weight file.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("weight file schema version {}, this build reads version {expected}", found.map_or("missing".to_string(), |v| v.to_string()))]
    Schema { found: Option<u64>, expected: u32 },
    #[error("invalid file contents: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| IoError::Invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

/// Construction metadata carried by files written from a [`BuiltNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionBlock {
    pub params: ConstructionParams,
    pub proof: String,
    pub channels: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub selection: Vec<SelectionLayer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenParams>,
    #[serde(default)]
    pub derived: BTreeMap<String, f64>,
}

/// On-disk weight file. Files exported from trained models omit the
/// `construction` block and may carry a positional table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub schema_version: u32,
    pub task: String,
    pub k: usize,
    pub d_model: usize,
    pub attention_modes: Vec<AttnMode>,
    pub has_positional: bool,
    pub model: TransformerModel,
    pub head: Head,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction: Option<ConstructionBlock>,
}

impl WeightFile {
    pub fn from_network(net: &BuiltNetwork) -> Self {
        Self::from_parts(
            net.task.name(),
            net.model.clone(),
            net.head.clone(),
            Some(ConstructionBlock {
                params: net.params.clone(),
                proof: net.meta.proof.clone(),
                channels: net.meta.channels.clone(),
                selection: net.meta.selection.clone(),
                gen: net.meta.gen.clone(),
                derived: net.meta.derived.clone(),
            }),
        )
    }

    pub fn from_parts(
        task: &str,
        model: TransformerModel,
        head: Head,
        construction: Option<ConstructionBlock>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: task.to_string(),
            k: model.k,
            d_model: model.d_model,
            attention_modes: model.blocks.iter().map(|b| b.attention.mode).collect(),
            has_positional: model.positional.is_some(),
            model,
            head,
            construction,
        }
    }

    /// Consistency of the summary fields with the model itself.
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |s: String| Err(IoError::Invalid(s));
        self.model.validate().map_err(|e| IoError::Invalid(e.to_string()))?;
        self.model.validate_head(&self.head).map_err(|e| IoError::Invalid(e.to_string()))?;
        if self.k != self.model.k || self.d_model != self.model.d_model {
            return bad(format!(
                "header says k={}, d_model={} but the model has k={}, d_model={}",
                self.k, self.d_model, self.model.k, self.model.d_model
            ));
        }
        let modes: Vec<AttnMode> = self.model.blocks.iter().map(|b| b.attention.mode).collect();
        if modes != self.attention_modes {
            return bad("attention_modes disagree with the blocks".into());
        }
        if self.has_positional != self.model.positional.is_some() {
            return bad("has_positional disagrees with the model".into());
        }
        if let Some(c) = &self.construction {
            let task: Task = self.task.parse().map_err(IoError::Invalid)?;
            if task.is_recognizer() != matches!(self.head, Head::Recognizer { .. }) {
                return bad(format!("task {task} does not match the head kind"));
            }
            c.params.validate(self.k).map_err(|e| IoError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Language implied by the task name (`dyck-*` or `shuffle-*`).
    pub fn lang(&self) -> Option<Lang> {
        if self.task.starts_with("dyck") {
            Some(Lang::Dyck)
        } else if self.task.starts_with("shuffle") {
            Some(Lang::Shuffle)
        } else {
            None
        }
    }

    pub fn to_network(&self) -> Result<BuiltNetwork, IoError> {
        let c = self
            .construction
            .as_ref()
            .ok_or_else(|| IoError::Invalid("weight file has no construction block".into()))?;
        let task: Task = self.task.parse().map_err(IoError::Invalid)?;
        Ok(BuiltNetwork {
            task,
            model: self.model.clone(),
            head: self.head.clone(),
            params: c.params.clone(),
            meta: ConstructionMeta {
                proof: c.proof.clone(),
                channels: c.channels.clone(),
                selection: c.selection.clone(),
                gen: c.gen.clone(),
                derived: c.derived.clone(),
            },
        })
    }
}

pub fn weights_to_string(w: &WeightFile) -> Result<String, IoError> {
    serde_json::to_string_pretty(w).map_err(|e| IoError::Invalid(e.to_string()))
}

/// Parses a weight file, checking the schema version before anything else.
pub fn weights_from_str(s: &str, path: &Path) -> Result<WeightFile, IoError> {
    let v: serde_json::Value = serde_json::from_str(s).map_err(json_err(path))?;
    let found = v.get("schema_version").and_then(|x| x.as_u64());
    if found != Some(SCHEMA_VERSION as u64) {
        return Err(IoError::Schema { found, expected: SCHEMA_VERSION });
    }
    let w: WeightFile = serde_json::from_str(s).map_err(json_err(path))?;
    w.validate()?;
    Ok(w)
}

pub fn save_weights(path: &Path, w: &WeightFile) -> Result<(), IoError> {
    let mut s = weights_to_string(w)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_weights(path: &Path) -> Result<WeightFile, IoError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    weights_from_str(&s, path)
}

pub fn dataset_to_jsonl(records: &[DatasetRecord]) -> Result<String, IoError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| IoError::Invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), IoError> {
    write_atomic(path, dataset_to_jsonl(records)?.as_bytes())
}

/// Reads a JSONL dataset; blank lines are skipped.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, IoError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| IoError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

pub fn save_metrics(path: &Path, m: &MetricsReport) -> Result<(), IoError> {
    if !m.is_valid() {
        return Err(IoError::Invalid("metrics outside [0, 1]".into()));
    }
    let mut s = serde_json::to_string_pretty(m).map_err(|e| IoError::Invalid(e.to_string()))?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_metrics(path: &Path) -> Result<MetricsReport, IoError> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(json_err(path))
}
