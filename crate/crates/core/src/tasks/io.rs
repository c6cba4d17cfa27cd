//! Dataset files.
//!
//! A dataset is stored as a CSV of raw values with header
//! `x0,...,x{d-1},y`, next to two JSON sidecars: `<stem>.stats.json` holding
//! the standardization statistics and `<stem>.split.json` holding the
//! train/validation partition. A third, optional `<stem>.meta.json` records
//! which task and seed produced the data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::tasks::{Dataset, Split, StandardizationStats};

/// Tolerance between recomputed statistics and the stored sidecar.
const STATS_TOLERANCE: f64 = 1e-9;

/// Provenance of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: String,
    pub n: usize,
    pub seed: u64,
    pub strip_top_fraction: f64,
}

/// `(stats, split, meta)` sidecar paths for a dataset CSV.
pub fn sidecar_paths(csv: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let dir = csv.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}.stats.json")),
        dir.join(format!("{stem}.split.json")),
        dir.join(format!("{stem}.meta.json")),
    )
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Renders the dataset CSV. Values use the shortest decimal form that
/// parses back to the same bits.
pub fn dataset_csv(dataset: &Dataset) -> String {
    let d = dataset.dim();
    let mut out = String::new();
    let header: Vec<String> = (0..d)
        .map(|c| format!("x{c}"))
        .chain(["y".into()])
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..dataset.len() {
        for v in dataset.inputs().row(r) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{}", dataset.labels()[r]);
    }
    out
}

/// Renders a design matrix as CSV with header `x0,...,x{d-1}`.
pub fn designs_csv(points: &Tensor) -> String {
    let mut out: String = (0..points.cols())
        .map(|c| format!("x{c}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for r in 0..points.rows() {
        let row: Vec<String> = points.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses a CSV written by [`designs_csv`]. Non-finite cells are kept so
/// that diverged candidates can still be reported.
pub fn parse_designs_csv(text: &str, source: &str) -> Result<Tensor> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::parse(source, 1, "missing header"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len();
    if cols.iter().enumerate().any(|(c, h)| *h != format!("x{c}")) {
        return Err(Error::parse(source, 1, "expected header `x0,...,x{d-1}`"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d {
            return Err(Error::parse(
                source,
                i + 1,
                format!("expected {d} fields, found {}", cells.len()),
            ));
        }
        for cell in cells {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("non-numeric cell `{cell}`")))?;
            data.push(v);
        }
        rows += 1;
    }
    Tensor::matrix(rows, d, data)
}

/// Writes the CSV plus stats and split sidecars, and the meta sidecar when given.
pub fn save_dataset(dataset: &Dataset, csv: &Path, meta: Option<&DatasetMeta>) -> Result<()> {
    if let Some(dir) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(csv, dataset_csv(dataset)).map_err(|e| Error::io(csv, e))?;
    let (stats, split, meta_path) = sidecar_paths(csv);
    write_json(&stats, dataset.stats())?;
    write_json(&split, dataset.split())?;
    if let Some(meta) = meta {
        write_json(&meta_path, meta)?;
    }
    Ok(())
}

/// Parses a dataset CSV into raw inputs and labels.
pub fn parse_dataset_csv(text: &str, source: &str) -> Result<(Tensor, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| Error::parse(source, 1, e.to_string()))?,
        None => return Err(Error::parse(source, 1, "missing header")),
    };
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = (0..d)
        .map(|c| format!("x{c}"))
        .chain(["y".into()])
        .collect();
    if d == 0
        || header
            .iter()
            .map(str::trim)
            .ne(expected.iter().map(String::as_str))
    {
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != d + 1 {
            return Err(Error::parse(
                source,
                line,
                format!("expected {} fields, found {}", d + 1, rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, line, format!("non-numeric cell `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    source,
                    line,
                    format!("non-finite cell `{cell}`"),
                ));
            }
            if c < d {
                data.push(v);
            } else {
                labels.push(v);
            }
        }
    }
    let inputs = Tensor::matrix(labels.len(), d, data)?;
    Ok((inputs, labels))
}

/// Loads a dataset CSV. Statistics are recomputed and, when a stats sidecar
/// exists, checked against it. Without a split sidecar a seed-0 split is used.
pub fn load_dataset(csv: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let (inputs, labels) = parse_dataset_csv(&text, &csv.display().to_string())?;
    if labels.is_empty() {
        return Err(Error::parse(csv.display().to_string(), 2, "no data rows"));
    }
    let (stats_path, split_path, _) = sidecar_paths(csv);
    let split = if split_path.exists() {
        read_json(&split_path)?
    } else {
        Split::random(labels.len(), 0)
    };
    let dataset = Dataset::new(inputs, labels, split)?;
    if stats_path.exists() {
        let stored: StandardizationStats = read_json(&stats_path)?;
        let diff = dataset.stats().max_abs_diff(&stored);
        if diff > STATS_TOLERANCE {
            return Err(Error::Config(format!(
                "{}: stored statistics differ from recomputed ones by {diff:e}",
                stats_path.display()
            )));
        }
    }
    Ok(dataset)
}

pub fn load_meta(csv: &Path) -> Result<DatasetMeta> {
    read_json(&sidecar_paths(csv).2)
}
