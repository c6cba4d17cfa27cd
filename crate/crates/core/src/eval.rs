//! Scoring candidates against a task oracle.
//!
//! This is the only place ground truth enters: tuning never sees a task.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::{final_candidates, Candidates, RunRecord, TrainConfig};
use crate::methods::{Method, Naive};
use crate::numerics::Tensor;
use crate::tasks::{Dataset, Task};
use crate::tuning::{SelectionReport, SweepResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub raw_best: f64,
    pub normalized: f64,
    pub n_candidates: usize,
    /// Oracle value per candidate; `None` for non-finite candidates.
    pub scores: Vec<Option<f64>>,
    /// Rows with non-finite coordinates.
    pub non_finite: Vec<usize>,
}

/// `(raw - y_low) / (known_max - y_low)`.
pub fn normalized_score(raw: f64, y_low: f64, known_max: f64) -> Result<f64> {
    let span = known_max - y_low;
    if !(span > 0.0) {
        return Err(Error::Config(format!(
            "normalization needs known_max > y_low, got {known_max} and {y_low}"
        )));
    }
    Ok((raw - y_low) / span)
}

/// Scores raw-space `candidates` with the oracle and normalizes the best
/// against the dataset's lowest label and the task maximum.
pub fn evaluate(
    candidates: &Tensor,
    task: &dyn Task,
    dataset: &Dataset,
    method: &str,
) -> Result<EvalResult> {
    if candidates.rows() == 0 {
        return Err(Error::Usage("no candidates to evaluate".into()));
    }
    if candidates.cols() != task.input_dim() {
        return Err(Error::Shape {
            op: "evaluate",
            expected: vec![task.input_dim()],
            actual: vec![candidates.cols()],
        });
    }
    let mut scores = Vec::with_capacity(candidates.rows());
    let mut non_finite = Vec::new();
    for r in 0..candidates.rows() {
        let x = candidates.row(r);
        if x.iter().all(|v| v.is_finite()) {
            scores.push(Some(task.oracle(x)));
        } else {
            non_finite.push(r);
            scores.push(None);
        }
    }
    let raw_best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EvalResult {
        task: task.name().to_string(),
        method: method.to_string(),
        lambda: None,
        raw_best,
        normalized: normalized_score(raw_best, dataset.min_label(), task.known_max())?,
        n_candidates: candidates.rows(),
        scores,
        non_finite,
    })
}

/// Candidates of `run`'s model at `epoch`, ascended with the run's own
/// step count, step size, candidate count and seed.
pub fn candidates_at(run: &RunRecord, dataset: &Dataset, epoch: usize) -> Result<Candidates> {
    let model = run
        .checkpoint(epoch)
        .ok_or_else(|| Error::Usage(format!("run has no checkpoint at epoch {epoch}")))?;
    let c = &run.config;
    final_candidates(
        model,
        dataset,
        c.ascent_steps,
        c.eta,
        c.candidate_count,
        c.seed,
    )
}

/// Regression without invariance, then gradient ascent from dataset samples
/// on the final model.
pub fn naive_gradient_ascent_baseline(
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Candidates> {
    let run = Naive.train(dataset, config)?;
    let c = &run.config;
    final_candidates(
        &run.model,
        dataset,
        c.ascent_steps,
        c.eta,
        c.candidate_count,
        c.seed,
    )
}

/// Normalized score of every stored checkpoint of one run, by epoch.
pub fn checkpoint_scores(
    run: &RunRecord,
    task: &dyn Task,
    dataset: &Dataset,
) -> Result<BTreeMap<usize, f64>> {
    run.checkpoints
        .iter()
        .map(|cp| {
            let cand = candidates_at(run, dataset, cp.epoch)?;
            Ok((
                cp.epoch,
                evaluate(&cand.raw, task, dataset, "iom")?.normalized,
            ))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningRegret {
    pub offline_score: f64,
    /// Best score over every stored (λ, checkpoint) pair of the sweep. The
    /// offline choice is one of these pairs, so it never exceeds this.
    pub oracle_score: f64,
    pub oracle_lambda: f64,
    pub oracle_epoch: usize,
    /// `offline / oracle`, when the oracle score is positive.
    pub ratio: Option<f64>,
    /// `offline - oracle`, reported instead of the ratio otherwise.
    pub difference: Option<f64>,
    /// Best final-checkpoint score over λ, for reference.
    pub final_checkpoint_best: f64,
    /// Checkpoint scores of each sweep run by epoch; empty for failed runs.
    pub run_scores: Vec<BTreeMap<usize, f64>>,
}

/// Compares the offline selection with oracle selection of (λ, checkpoint),
/// scoring every stored checkpoint of every completed run.
pub fn tuning_regret(
    sweep: &SweepResult,
    selection: &SelectionReport,
    task: &dyn Task,
    dataset: &Dataset,
) -> Result<TuningRegret> {
    let run_scores = sweep
        .runs
        .iter()
        .map(|run| match &run.record {
            Ok(record) => checkpoint_scores(record, task, dataset),
            Err(_) => Ok(BTreeMap::new()),
        })
        .collect::<Result<Vec<_>>>()?;
    let offline_score = run_scores
        .get(selection.chosen_index)
        .and_then(|s| s.get(&selection.chosen_epoch))
        .copied()
        .ok_or_else(|| {
            Error::Selection("selected run and checkpoint are not in the sweep".into())
        })?;

    let mut final_best = f64::NEG_INFINITY;
    let mut best: Option<(f64, f64, usize)> = None;
    for (run, scores) in sweep.runs.iter().zip(&run_scores) {
        if let Some((_, &last)) = scores.last_key_value() {
            final_best = final_best.max(last);
        }
        for (&epoch, &score) in scores {
            if best.map_or(true, |(s, _, _)| score > s) {
                best = Some((score, run.lambda, epoch));
            }
        }
    }
    let (oracle_score, oracle_lambda, oracle_epoch) = best.expect("the selected run was scored");
    let (ratio, difference) = if oracle_score > 0.0 {
        (Some(offline_score / oracle_score), None)
    } else {
        (None, Some(offline_score - oracle_score))
    };
    Ok(TuningRegret {
        offline_score,
        oracle_score,
        oracle_lambda,
        oracle_epoch,
        ratio,
        difference,
        final_checkpoint_best: final_best,
        run_scores,
    })
}

pub const AGGREGATE_HEADER: &str = "task,method,normalized_score,seed";

/// One line of the cross-task summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub method: String,
    pub normalized_score: f64,
    pub seed: u64,
}

pub fn parse_aggregate(text: &str, source: &str) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(source, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != AGGREGATE_HEADER {
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{AGGREGATE_HEADER}`"),
        ));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(source, i + 2, e.to_string())))
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.task, r.method, r.normalized_score, r.seed
        );
    }
    out
}

/// Inserts `row` into the aggregate CSV at `path`, replacing any row with
/// the same task, method and seed. Rows are kept sorted, so the file
/// depends only on its set of rows.
pub fn upsert_aggregate(path: &Path, row: AggregateRow) -> Result<()> {
    let mut rows = if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_aggregate(&text, &path.display().to_string())?
    } else {
        Vec::new()
    };
    rows.retain(|r| !(r.task == row.task && r.method == row.method && r.seed == row.seed));
    rows.push(row);
    rows.sort_by(|a, b| (&a.task, &a.method, a.seed).cmp(&(&b.task, &b.method, b.seed)));
    fs::write(path, aggregate_csv(&rows)).map_err(|e| Error::io(path, e))
}
