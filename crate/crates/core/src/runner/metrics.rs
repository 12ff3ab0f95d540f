//! Append-only metrics table and the long-format plot-data export.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub epoch: u64,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub epsilon: f64,
    /// Empty for stages trained with plain trajectory balance.
    pub alpha: Option<f64>,
    pub stage_count: usize,
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Appends rows, writing the header when the file is new or empty.
pub fn append_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && rows.is_empty() {
        w.write_record(HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

const HEADER: [&str; 8] = ["run_id", "epoch", "metric", "value", "seed", "epsilon", "alpha", "stage_count"];

/// Rewrites `path` keeping only rows with `epoch <= last`.
pub fn truncate_after(path: &Path, last: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let keep: Vec<MetricRow> = read_rows(path)?.into_iter().filter(|r| r.epoch <= last).collect();
    fs::remove_file(path)?;
    append_rows(path, &keep)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == METRICS_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct PlotFilter {
    pub metric: Option<String>,
    pub run_id: Option<String>,
}

/// Every metrics row below `dir`, filtered and sorted by run, seed, metric, epoch.
pub fn export_plotdata(dir: &Path, filter: &PlotFilter) -> Result<Vec<MetricRow>> {
    let mut files = Vec::new();
    if dir.is_dir() {
        collect_files(dir, &mut files)?;
    }
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_rows(&f)?.into_iter().filter(|r| {
            filter.metric.as_ref().is_none_or(|m| &r.metric == m) && filter.run_id.as_ref().is_none_or(|id| &r.run_id == id)
        }));
    }
    rows.sort_by(|a, b| {
        (&a.run_id, a.seed, &a.metric, a.epoch)
            .cmp(&(&b.run_id, b.seed, &b.metric, b.epoch))
            .then(a.value.total_cmp(&b.value))
    });
    Ok(rows)
}

/// Writes rows with a header, even when there are none.
pub fn write_table<W: std::io::Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
