use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{stream_rng, STREAM_POOL, STREAM_SPLIT};
use crate::tasks::{StandardizationStats, Task};

pub const MIN_DATASET_SIZE: usize = 50;

/// Fraction of rows assigned to training.
const TRAIN_FRACTION: f64 = 0.7;

/// Train/validation row partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    /// Random 7:3 partition of `0..n`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(seed, STREAM_SPLIT, 0));
        let n_train = ((n as f64) * TRAIN_FRACTION).round() as usize;
        let n_train = n_train.clamp(usize::from(n > 0), n.saturating_sub(usize::from(n > 1)));
        let validation = idx.split_off(n_train);
        Self {
            train: idx,
            validation,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation) {
            if i >= n || seen[i] {
                return Err(Error::Config(format!(
                    "split index {i} is out of range or repeated (n = {n})"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("split does not cover every row".into()));
        }
        Ok(())
    }
}

/// Static offline dataset: raw designs and labels plus their standardized views.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<f64>,
    stats: StandardizationStats,
    split: Split,
    warnings: Vec<String>,
    std_inputs: Tensor,
    std_labels: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from raw values; statistics are fitted on all rows.
    pub fn new(inputs: Tensor, labels: Vec<f64>, split: Split) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::Shape {
                op: "Dataset::new",
                expected: vec![labels.len()],
                actual: inputs.shape().to_vec(),
            });
        }
        if labels.is_empty() {
            return Err(Error::Usage("dataset must contain at least one row".into()));
        }
        if !inputs.is_finite() || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        split.validate(labels.len())?;
        let (stats, warnings) = StandardizationStats::fit(&inputs, &labels);
        let std_inputs = stats.standardize_inputs(&inputs);
        let std_labels = stats.standardize_labels(&labels);
        Ok(Self {
            inputs,
            labels,
            stats,
            split,
            warnings,
            std_inputs,
            std_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn stats(&self) -> &StandardizationStats {
        &self.stats
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn standardized_inputs(&self) -> &Tensor {
        &self.std_inputs
    }

    pub fn standardized_labels(&self) -> &[f64] {
        &self.std_labels
    }

    pub fn train_inputs(&self) -> Tensor {
        self.std_inputs.select_rows(&self.split.train)
    }

    pub fn train_labels(&self) -> Vec<f64> {
        self.split
            .train
            .iter()
            .map(|&i| self.std_labels[i])
            .collect()
    }

    pub fn validation_inputs(&self) -> Tensor {
        self.std_inputs.select_rows(&self.split.validation)
    }

    pub fn validation_labels(&self) -> Vec<f64> {
        self.split
            .validation
            .iter()
            .map(|&i| self.std_labels[i])
            .collect()
    }

    /// Smallest raw label. Stripping only removes the top of the generation
    /// pool, so this is also the pool minimum.
    pub fn min_label(&self) -> f64 {
        self.labels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_label(&self) -> f64 {
        self.labels
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Stable hash of the raw contents and split.
    pub fn fingerprint(&self) -> u64 {
        let labels = Tensor::vector(self.labels.clone()).checksum();
        let split: Vec<f64> = self
            .split
            .train
            .iter()
            .chain(&self.split.validation)
            .map(|&i| i as f64)
            .collect();
        self.inputs.checksum()
            ^ labels.rotate_left(17)
            ^ Tensor::vector(split).checksum().rotate_left(31)
    }
}

/// Generated samples before stripping, and which of them were kept.
#[derive(Clone, Debug)]
pub struct Pool {
    pub inputs: Tensor,
    pub scores: Vec<f64>,
    /// Indices into the pool, in sampling order.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Samples `n / (1 - strip)` designs from the task's data region, scores them
/// and marks the top `strip` fraction as dropped. `strip` defaults to the
/// task's own fraction.
pub fn generate_pool(task: &dyn Task, n: usize, seed: u64, strip: Option<f64>) -> Result<Pool> {
    let strip = strip.unwrap_or_else(|| task.strip_top_fraction());
    if !(0.0..1.0).contains(&strip) {
        return Err(Error::Config(format!(
            "strip_top_fraction must lie in [0, 1), got {strip}"
        )));
    }
    let pool_size = ((n as f64) / (1.0 - strip) - 1e-9).ceil() as usize;
    let pool_size = pool_size.max(n);
    let mut rng = stream_rng(seed, STREAM_POOL, 0);
    let region = task.data_region();
    let d = task.input_dim();
    let mut data = Vec::with_capacity(pool_size * d);
    let mut scores = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let x = region.sample(&mut rng);
        scores.push(task.oracle(&x));
        data.extend(x);
    }
    let inputs = Tensor::matrix(pool_size, d, data)?;

    let mut order: Vec<usize> = (0..pool_size).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut dropped = order.split_off(n);
    let mut kept = order;
    kept.sort_unstable();
    dropped.sort_unstable();
    Ok(Pool {
        inputs,
        scores,
        kept,
        dropped,
    })
}

/// Generates an `n`-row dataset with the task's top fraction removed,
/// standardized and split 7:3.
pub fn generate_dataset(task: &dyn Task, n: usize, seed: u64) -> Result<Dataset> {
    generate_dataset_with_strip(task, n, seed, None)
}

/// [`generate_dataset`] with an explicit top fraction to withhold.
pub fn generate_dataset_with_strip(
    task: &dyn Task,
    n: usize,
    seed: u64,
    strip: Option<f64>,
) -> Result<Dataset> {
    if n < MIN_DATASET_SIZE {
        return Err(Error::Config(format!(
            "dataset size must be at least {MIN_DATASET_SIZE}, got {n}"
        )));
    }
    let pool = generate_pool(task, n, seed, strip)?;
    let inputs = pool.inputs.select_rows(&pool.kept);
    let labels = pool.kept.iter().map(|&i| pool.scores[i]).collect();
    Dataset::new(inputs, labels, Split::random(n, seed))
}
