//! On-disk layout of run and sweep directories.
//!
//! A run directory holds `config.json`, `metrics.csv`, `checkpoints/epoch_{k}.txt`,
//! `state.txt`, `candidates.csv`, `particles.csv`, `result.json` and `log.txt`.
//! A sweep directory holds `sweep.json`, one run directory per λ under
//! `runs/`, and after tuning `selection.json`. Only `log.txt` carries
//! timestamps.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use iom_core::iom::{parse_metrics_csv, EpochMetrics, IomModel};
use iom_core::tuning::RunStatus;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINTS: &str = "checkpoints";
pub const STATE: &str = "state.txt";
pub const CANDIDATES: &str = "candidates.csv";
pub const PARTICLES: &str = "particles.csv";
pub const RESULT: &str = "result.json";
pub const LOG: &str = "log.txt";
pub const SWEEP_MANIFEST: &str = "sweep.json";
pub const SELECTION: &str = "selection.json";

/// Writes through a temporary sibling and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.root
            .join(CHECKPOINTS)
            .join(format!("epoch_{epoch}.txt"))
    }

    /// Creates the directory tree, removing artifacts of any earlier run.
    pub fn reset(&self) -> Result<()> {
        let ckpt = self.path(CHECKPOINTS);
        if ckpt.exists() {
            fs::remove_dir_all(&ckpt).with_context(|| format!("clearing {}", ckpt.display()))?;
        }
        for name in [METRICS, STATE, CANDIDATES, PARTICLES, RESULT, LOG] {
            let p = self.path(name);
            if p.exists() {
                fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
        fs::create_dir_all(&ckpt).with_context(|| format!("creating {}", ckpt.display()))
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(&self.path(CONFIG))
    }

    pub fn metrics(&self) -> Result<Vec<EpochMetrics>> {
        let p = self.path(METRICS);
        Ok(parse_metrics_csv(
            &read_text(&p)?,
            &p.display().to_string(),
        )?)
    }

    /// Epochs with a stored checkpoint, ascending.
    pub fn checkpoint_epochs(&self) -> Result<Vec<usize>> {
        let dir = self.path(CHECKPOINTS);
        let entries = fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))?;
        let mut epochs = Vec::new();
        for entry in entries {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(k) = name
                .strip_prefix("epoch_")
                .and_then(|s| s.strip_suffix(".txt"))
            {
                epochs.push(
                    k.parse::<usize>()
                        .with_context(|| format!("bad checkpoint name {name}"))?,
                );
            }
        }
        epochs.sort_unstable();
        Ok(epochs)
    }

    pub fn load_checkpoint(&self, epoch: usize) -> Result<IomModel> {
        let p = self.checkpoint_path(epoch);
        Ok(IomModel::from_text(
            &read_text(&p)?,
            &p.display().to_string(),
        )?)
    }

    /// Appends a timestamped line to the run log.
    pub fn log(&self, message: &str) -> Result<()> {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let p = self.path(LOG);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&p)
            .with_context(|| format!("opening {}", p.display()))?;
        writeln!(f, "[{secs}] {message}").with_context(|| format!("writing {}", p.display()))
    }
}

/// One λ of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub seed: u64,
    /// Run directory, relative to the sweep directory.
    pub dir: String,
    pub status: RunStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: PipelineConfig,
    pub dataset_fingerprint: u64,
    pub runs: Vec<SweepEntry>,
}

impl SweepManifest {
    pub fn load(sweep_dir: &Path) -> Result<Self> {
        let p = sweep_dir.join(SWEEP_MANIFEST);
        if !p.exists() {
            bail!(
                "{} is not a sweep directory (no {SWEEP_MANIFEST})",
                sweep_dir.display()
            );
        }
        read_json(&p)
    }

    pub fn run_dir(&self, sweep_dir: &Path, index: usize) -> RunDir {
        RunDir::new(sweep_dir.join(&self.runs[index].dir))
    }
}
