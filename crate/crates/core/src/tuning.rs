//! Offline hyperparameter selection.
//!
//! Selection sees only what training recorded: per-epoch validation error
//! and discriminator loss. Nothing in this module can reach a task oracle,
//! which the types enforce: neither [`RunSummary`] nor [`SweepResult`]
//! carries a task.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::{train_iom, EpochMetrics, RunRecord, TrainConfig, IDEAL_DISC_LOSS};
use crate::rng::derive_seed;
use crate::tasks::Dataset;

/// Invariance weights swept by default.
pub const DEFAULT_LAMBDAS: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];

/// Fraction of runs kept by the invariance filter.
pub const DEFAULT_QUANTILE: f64 = 0.45;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum RunStatus {
    Completed,
    Failed(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Failed(_) => "failed",
        }
    }
}

/// What selection needs to know about one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub lambda: f64,
    pub status: RunStatus,
    pub metrics: Vec<EpochMetrics>,
    /// Epochs with a stored model; early stopping only picks among these.
    pub checkpoint_epochs: Vec<usize>,
}

impl RunSummary {
    pub fn from_record(lambda: f64, record: &RunRecord) -> Self {
        Self {
            lambda,
            status: RunStatus::Completed,
            metrics: record.metrics.clone(),
            checkpoint_epochs: record.checkpoints.iter().map(|c| c.epoch).collect(),
        }
    }

    pub fn failed(lambda: f64, reason: impl Into<String>) -> Self {
        Self {
            lambda,
            status: RunStatus::Failed(reason.into()),
            metrics: Vec::new(),
            checkpoint_epochs: Vec::new(),
        }
    }
}

/// One sweep member: the record when training finished, otherwise why not.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub lambda: f64,
    pub seed: u64,
    pub record: Result<RunRecord, String>,
}

impl SweepRun {
    pub fn summary(&self) -> RunSummary {
        match &self.record {
            Ok(r) => RunSummary::from_record(self.lambda, r),
            Err(e) => RunSummary::failed(self.lambda, e.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub dataset_fingerprint: u64,
    pub base_seed: u64,
    pub runs: Vec<SweepRun>,
}

impl SweepResult {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(SweepRun::summary).collect()
    }
}

/// Config of the `index`-th sweep member: `base` with its own λ and seed.
pub fn sweep_member_config(base: &TrainConfig, lambda: f64, index: usize) -> TrainConfig {
    TrainConfig {
        lambda,
        seed: derive_seed(base.seed, index as u64),
        ..base.clone()
    }
}

/// Trains one run per λ, up to `parallelism` at a time. A run that fails is
/// recorded as failed and the sweep carries on.
pub fn run_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    lambdas: &[f64],
    parallelism: usize,
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::Config("a sweep needs at least one lambda".into()));
    }
    let configs: Vec<TrainConfig> = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| sweep_member_config(base, l, i))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let job = |c: &TrainConfig| SweepRun {
        lambda: c.lambda,
        seed: c.seed,
        record: train_iom(dataset, c).map_err(|e| e.to_string()),
    };
    let runs = if parallelism <= 1 {
        configs.iter().map(job).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        pool.install(|| configs.par_iter().map(job).collect())
    };
    Ok(SweepResult {
        dataset_fingerprint: dataset.fingerprint(),
        base_seed: base.seed,
        runs,
    })
}

/// Epoch with the smallest validation error among `candidates`, earliest on
/// ties. All epochs are candidates when `candidates` is empty.
pub fn early_stop_epoch(metrics: &[EpochMetrics], candidates: &[usize]) -> Option<usize> {
    metrics
        .iter()
        .filter(|m| candidates.is_empty() || candidates.contains(&m.epoch))
        .fold(None::<&EpochMetrics>, |best, m| match best {
            Some(b) if b.val_mse <= m.val_mse => Some(b),
            _ => Some(m),
        })
        .map(|m| m.epoch)
}

/// Early-stopping checkpoint of a run: the stored epoch with minimal
/// validation error.
pub fn early_stop_checkpoint(run: &RunSummary) -> Option<usize> {
    if run.checkpoint_epochs.is_empty() {
        return None;
    }
    early_stop_epoch(&run.metrics, &run.checkpoint_epochs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSelection {
    pub lambda: f64,
    /// `|disc_loss - 0.25|` at the run's early-stopping checkpoint.
    pub disc_distance: Option<f64>,
    pub min_val_mse: Option<f64>,
    pub checkpoint_epoch: Option<usize>,
    pub passed_filter: bool,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen_lambda: f64,
    pub chosen_epoch: usize,
    /// Position of the chosen run in the sweep.
    pub chosen_index: usize,
    pub quantile: f64,
    pub runs: Vec<RunSelection>,
}

/// Number of runs the filter keeps out of `completed`: `floor(q·R)`, at least one.
pub fn kept_count(quantile: f64, completed: usize) -> usize {
    ((quantile * completed as f64 + 1e-9).floor() as usize).clamp(1, completed.max(1))
}

/// Keeps the runs whose discriminator loss is closest to the invariance
/// level, then picks the lowest validation error among them.
pub fn offline_select(runs: &[RunSummary], quantile: f64) -> Result<SelectionReport> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Config(format!(
            "quantile must lie in (0, 1], got {quantile}"
        )));
    }
    let mut rows: Vec<RunSelection> = runs
        .iter()
        .map(|r| {
            let epoch = if r.status.is_completed() {
                early_stop_checkpoint(r)
            } else {
                None
            };
            let at = epoch.and_then(|e| r.metrics.iter().find(|m| m.epoch == e));
            RunSelection {
                lambda: r.lambda,
                disc_distance: at.map(|m| (m.disc_loss - IDEAL_DISC_LOSS).abs()),
                min_val_mse: at.map(|m| m.val_mse),
                checkpoint_epoch: epoch,
                passed_filter: false,
                status: match (&r.status, epoch) {
                    (RunStatus::Completed, Some(_)) => "completed".into(),
                    (RunStatus::Completed, None) => "failed: no checkpoints".into(),
                    (RunStatus::Failed(reason), _) => format!("failed: {reason}"),
                },
            }
        })
        .collect();

    let mut eligible: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].checkpoint_epoch.is_some())
        .collect();
    if eligible.is_empty() {
        return Err(Error::Selection(
            "no run completed with a checkpoint".into(),
        ));
    }
    let by_lambda = |a: usize, b: usize| rows[a].lambda.total_cmp(&rows[b].lambda).then(a.cmp(&b));
    eligible.sort_by(|&a, &b| {
        let (da, db) = (
            rows[a].disc_distance.unwrap(),
            rows[b].disc_distance.unwrap(),
        );
        da.total_cmp(&db).then(by_lambda(a, b))
    });
    let keep = kept_count(quantile, eligible.len());
    let kept = &eligible[..keep];
    let chosen = *kept
        .iter()
        .min_by(|&&a, &&b| {
            let (va, vb) = (rows[a].min_val_mse.unwrap(), rows[b].min_val_mse.unwrap());
            va.total_cmp(&vb).then(by_lambda(a, b))
        })
        .expect("at least one kept run");
    for &i in kept {
        rows[i].passed_filter = true;
    }
    Ok(SelectionReport {
        chosen_lambda: rows[chosen].lambda,
        chosen_epoch: rows[chosen].checkpoint_epoch.unwrap(),
        chosen_index: chosen,
        quantile,
        runs: rows,
    })
}
