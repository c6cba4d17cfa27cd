//! Synthetic ground-truth tasks, offline dataset generation and dataset I/O.
//!
//! Tasks live behind the [`Task`] trait and are looked up by name in a
//! [`TaskCatalog`]. Each one carries an exact oracle and its true maximum so
//! that produced designs can be scored after the fact.

mod builtin;
mod dataset;
mod io;
mod standardize;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use builtin::{Multimodal2d, NegQuadratic, SpuriousPeak1d};
pub use dataset::{
    generate_dataset, generate_dataset_with_strip, generate_pool, Dataset, Pool, Split,
    MIN_DATASET_SIZE,
};
pub use io::{
    dataset_csv, designs_csv, load_dataset, load_meta, parse_dataset_csv, parse_designs_csv,
    save_dataset, sidecar_paths, DatasetMeta,
};
pub use standardize::{StandardizationStats, STD_FLOOR};

use crate::error::{Error, Result};

/// Distribution dataset inputs are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataRegion {
    Uniform { low: Vec<f64>, high: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl DataRegion {
    pub fn dim(&self) -> usize {
        match self {
            DataRegion::Uniform { low, .. } => low.len(),
            DataRegion::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DataRegion::Uniform { low, high } => low
                .iter()
                .zip(high)
                .map(|(&l, &h)| if h > l { rng.gen_range(l..h) } else { l })
                .collect(),
            DataRegion::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// A black-box objective with a known optimum.
pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str {
        ""
    }

    fn input_dim(&self) -> usize;

    /// True objective value of a raw (unstandardized) design.
    fn oracle(&self, x: &[f64]) -> f64;

    fn known_max(&self) -> f64;

    /// A design attaining [`Task::known_max`].
    fn argmax(&self) -> Vec<f64>;

    fn data_region(&self) -> &DataRegion;

    /// Fraction of the best-scoring generated samples withheld from the dataset.
    fn strip_top_fraction(&self) -> f64 {
        0.2
    }
}

/// Name-indexed collection of tasks.
#[derive(Clone, Default)]
pub struct TaskCatalog {
    tasks: BTreeMap<String, Arc<dyn Task>>,
}

impl TaskCatalog {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The built-in synthetic tasks.
    pub fn builtin() -> Self {
        let mut catalog = Self::empty();
        catalog.register(Arc::new(SpuriousPeak1d::new()));
        catalog.register(Arc::new(NegQuadratic::new(8, 0.75)));
        catalog.register(Arc::new(Multimodal2d::new()));
        catalog
    }

    pub fn register(&mut self, task: Arc<dyn Task>) {
        self.tasks.insert(task.name().to_string(), task);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Task>> {
        self.tasks
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownTask {
                name: name.to_string(),
                available: self.names(),
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.tasks.keys().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Task>> {
        self.tasks.values()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Built-in task catalog.
pub fn builtin_tasks() -> TaskCatalog {
    TaskCatalog::builtin()
}

/// Wraps a task and counts oracle evaluations.
pub struct CountingTask {
    inner: Arc<dyn Task>,
    calls: AtomicU64,
}

impl CountingTask {
    pub fn new(inner: Arc<dyn Task>) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Task for CountingTask {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn description(&self) -> &str {
        self.inner.description()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn oracle(&self, x: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.oracle(x)
    }

    fn known_max(&self) -> f64 {
        self.inner.known_max()
    }

    fn argmax(&self) -> Vec<f64> {
        self.inner.argmax()
    }

    fn data_region(&self) -> &DataRegion {
        self.inner.data_region()
    }

    fn strip_top_fraction(&self) -> f64 {
        self.inner.strip_top_fraction()
    }
}
