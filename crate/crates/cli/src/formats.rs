//! Wire formats: cascade JSONL, the model JSON document, and atomic writes.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use cascademix::{
    assemble_dual, BinEdges, BorelMixture, Cascade, FitReport, KSelection, KernelFamily,
    KernelMixture, PublisherModel,
};

use crate::{AppError, DATA, NUMERIC};

pub const SCHEMA_VERSION: u32 = 1;

/// One cascade per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub item_id: String,
    pub publisher_id: String,
    pub cascade_id: String,
    pub times: Vec<f64>,
}

impl CascadeRecord {
    pub fn to_cascade(&self, line: usize) -> Result<Cascade, AppError> {
        Cascade::new(self.times.clone()).map_err(|e| {
            AppError::new(DATA, format!("line {line}: cascade {}: {e}", self.cascade_id))
        })
    }
}

/// Streams a JSONL cascade file, rejecting malformed lines with their number.
pub fn read_cascade_records(path: &Path) -> Result<Vec<(usize, CascadeRecord)>, AppError> {
    let file = fs::File::open(path)
        .map_err(|e| AppError::new(DATA, format!("cannot open {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line =
            line.map_err(|e| AppError::new(DATA, format!("line {lineno}: read error: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CascadeRecord = serde_json::from_str(&line)
            .map_err(|e| AppError::new(DATA, format!("line {lineno}: {e}")))?;
        // surface structural violations eagerly with the line number
        rec.to_cascade(lineno)?;
        records.push((lineno, rec));
    }
    Ok(records)
}

/// Per-item fitted mixtures plus diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemModel {
    pub item_id: String,
    pub publisher_id: String,
    pub cascade_count: usize,
    pub selected_k: usize,
    /// (k, AIC) for every candidate when --select-k was used.
    pub aic_table: Vec<(usize, f64)>,
    pub bmm: BorelMixture,
    pub bmm_report: FitReport,
    pub kmm: Option<KernelMixture>,
    pub kmm_report: Option<FitReport>,
    /// Set when the item has no multi-event cascade and carries no
    /// inter-arrival information.
    pub kmm_skipped_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublisherEntry {
    pub publisher_id: String,
    /// Item ids pooled into this model, oldest first.
    pub source_items: Vec<String>,
    pub avg_cascades_per_item: f64,
    pub borel: BorelMixture,
    pub kernel: Option<KernelMixture>,
}

impl PublisherEntry {
    pub fn to_model(&self) -> Result<PublisherModel, AppError> {
        let kernel = self.kernel.clone().ok_or_else(|| {
            AppError::new(
                NUMERIC,
                format!(
                    "publisher {} has no kernel mixture (no multi-event cascades)",
                    self.publisher_id
                ),
            )
        })?;
        let dual = assemble_dual(&self.borel, &kernel);
        Ok(PublisherModel {
            borel: self.borel.clone(),
            kernel,
            dual,
            avg_cascades_per_item: self.avg_cascades_per_item,
            source_items: self.source_items.clone(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kernel_family: KernelFamily,
    pub seed: u64,
    pub items: Vec<ItemModel>,
    pub publishers: Vec<PublisherEntry>,
    pub embedding_bin_edges: Option<BinEdges>,
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| AppError::new(DATA, format!("cannot read {}: {e}", path.display())))?;
        let model: ModelFile = serde_json::from_str(&raw)
            .map_err(|e| AppError::new(DATA, format!("{}: {e}", path.display())))?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(AppError::new(
                DATA,
                format!(
                    "{}: schema version {} is not supported (expected {})",
                    path.display(),
                    model.schema_version,
                    SCHEMA_VERSION
                ),
            ));
        }
        Ok(model)
    }

    pub fn known_publishers(&self) -> BTreeSet<&str> {
        self.publishers.iter().map(|p| p.publisher_id.as_str()).collect()
    }
}

pub fn selection_to_parts(sel: KSelection) -> (usize, Vec<(usize, f64)>, BorelMixture, FitReport) {
    (sel.best_k, sel.aic_table, sel.best_mixture, sel.best_report)
}

/// Writes via a temp file in the target directory and renames into place, so
/// failures never leave a partial artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| AppError::new(DATA, format!("temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| AppError::new(DATA, format!("write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| AppError::new(DATA, format!("rename into {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<(), AppError> {
    let mut bytes = serde_json::to_vec_pretty(model)
        .map_err(|e| AppError::new(NUMERIC, format!("serialize model: {e}")))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}
