use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::Command;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";

/// One line of `metrics.jsonl`. Every key is always present; fields that do
/// not apply to a record serialize as `null` (so do NaN values).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub record: String,
    pub command: String,
    pub seed: u64,
    pub mode: Option<String>,
    pub epoch: Option<u64>,
    pub step: Option<u64>,
    pub loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub val_micro_f1: Option<f64>,
    pub val_loss: Option<f64>,
    pub memory_proxy: Option<u64>,
    pub staleness: Option<Vec<f64>>,
    pub grad_norm: Option<f64>,
    pub phi: Option<f64>,
    pub upsilon: Option<Vec<f64>>,
    pub min_grad_norm: Option<f64>,
    pub trailing_mean_grad_norm: Option<f64>,
    pub last_quarter_mean_phi: Option<f64>,
    pub objective: Option<f64>,
    pub error_kind: Option<String>,
    pub message: Option<String>,
}

impl MetricsRecord {
    pub fn new(record: &str, command: Command, seed: u64) -> Self {
        Self {
            record: record.to_string(),
            command: command.name().to_string(),
            seed,
            mode: None,
            epoch: None,
            step: None,
            loss: None,
            train_acc: None,
            val_acc: None,
            test_acc: None,
            val_micro_f1: None,
            val_loss: None,
            memory_proxy: None,
            staleness: None,
            grad_norm: None,
            phi: None,
            upsilon: None,
            min_grad_norm: None,
            trailing_mean_grad_norm: None,
            last_quarter_mean_phi: None,
            objective: None,
            error_kind: None,
            message: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

pub(super) fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.jsonl` and the wall-clock sidecar `timing.jsonl`.
pub struct MetricsWriter {
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
    dir: PathBuf,
}

impl MetricsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            Ok(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
        };
        Ok(Self {
            metrics: open(METRICS_FILE)?,
            timing: open(TIMING_FILE)?,
            dir: dir.to_path_buf(),
        })
    }

    pub fn record(&mut self, r: &MetricsRecord) -> Result<()> {
        let dir = &self.dir;
        self.metrics
            .write_all(r.to_json_line().as_bytes())
            .map_err(|e| Error::io(dir.join(METRICS_FILE), e))
    }

    /// `{"epoch": .., "wall_ms": ..}`; `epoch` null for whole-run totals.
    pub fn timing(&mut self, epoch: Option<u64>, since: Instant) -> Result<()> {
        let line = serde_json::json!({
            "epoch": epoch,
            "wall_ms": since.elapsed().as_secs_f64() * 1e3,
        });
        let dir = &self.dir;
        writeln!(self.timing, "{line}").map_err(|e| Error::io(dir.join(TIMING_FILE), e))
    }

    pub fn finish(mut self) -> Result<()> {
        let dir = self.dir.clone();
        self.metrics.flush().map_err(|e| Error::io(dir.join(METRICS_FILE), e))?;
        self.timing.flush().map_err(|e| Error::io(dir.join(TIMING_FILE), e))
    }
}
