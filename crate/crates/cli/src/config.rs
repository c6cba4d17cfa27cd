//! Pipeline configuration: one JSON document, overridable from flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iom_core::iom::TrainConfig;
use iom_core::tasks::{
    generate_dataset_with_strip, load_dataset, load_meta, sidecar_paths, Dataset, TaskCatalog,
};
use iom_core::tuning::{DEFAULT_LAMBDAS, DEFAULT_QUANTILE};
use serde::{Deserialize, Serialize};

/// Everything needed to regenerate a dataset and train, sweep or tune on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: String,
    /// Dataset size after the top fraction is withheld.
    pub n: usize,
    /// Seed of the generated dataset and its train/validation split.
    pub data_seed: u64,
    /// Top fraction withheld from the dataset; the task's default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip: Option<f64>,
    /// Dataset CSV to load instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub method: String,
    pub train: TrainConfig,
    pub lambdas: Vec<f64>,
    pub quantile: f64,
}

impl PipelineConfig {
    pub fn new(task: &str) -> Self {
        Self {
            task: task.to_string(),
            n: 200,
            data_seed: 0,
            strip: None,
            data: None,
            method: "iom".into(),
            train: TrainConfig::compact(),
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            quantile: DEFAULT_QUANTILE,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self, catalog: &TaskCatalog) -> Result<()> {
        catalog.get(&self.task)?;
        self.train.validate()?;
        if self.lambdas.is_empty() {
            bail!("the lambda list is empty");
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            bail!("lambda values must be finite and >= 0, got {l}");
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            bail!("quantile must lie in (0, 1], got {}", self.quantile);
        }
        Ok(())
    }

    /// The configured dataset, loaded from `data` or regenerated.
    pub fn dataset(&self, catalog: &TaskCatalog) -> Result<Dataset> {
        let task = catalog.get(&self.task)?;
        match &self.data {
            Some(path) => {
                if sidecar_paths(path).2.exists() {
                    let meta = load_meta(path)?;
                    if meta.task != self.task {
                        bail!(
                            "{} was generated for task `{}`, not `{}`",
                            path.display(),
                            meta.task,
                            self.task
                        );
                    }
                }
                let dataset = load_dataset(path)?;
                if dataset.dim() != task.input_dim() {
                    bail!(
                        "{} has {} input columns but `{}` takes {}",
                        path.display(),
                        dataset.dim(),
                        self.task,
                        task.input_dim()
                    );
                }
                Ok(dataset)
            }
            None => Ok(generate_dataset_with_strip(
                task.as_ref(),
                self.n,
                self.data_seed,
                self.strip,
            )?),
        }
    }
}
