use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::{IomModel, TrainConfig};
use crate::numerics::Tensor;

pub const METRICS_HEADER: &str =
    "epoch,train_mse,val_mse,disc_loss,gen_loss,mean_f_data,mean_f_particles";

/// Quantities recorded at the end of every epoch.
///
/// `disc_loss` and `gen_loss` are measured on validation inputs against the
/// full particle set; both are zero when the adversarial phase is off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub mean_f_data: f64,
    pub mean_f_particles: f64,
}

impl EpochMetrics {
    pub fn values(&self) -> [f64; 6] {
        [
            self.train_mse,
            self.val_mse,
            self.disc_loss,
            self.gen_loss,
            self.mean_f_data,
            self.mean_f_particles,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Model snapshot taken at the end of `epoch` (0-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: IomModel,
}

/// Everything one training run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub metrics: Vec<EpochMetrics>,
    pub checkpoints: Vec<Checkpoint>,
    pub model: IomModel,
    pub particles: Tensor,
}

impl RunRecord {
    pub fn checkpoint(&self, epoch: usize) -> Option<&IomModel> {
        self.checkpoints
            .iter()
            .find(|c| c.epoch == epoch)
            .map(|c| &c.model)
    }

    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.metrics.last()
    }
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        let _ = write!(out, "{}", m.epoch);
        for v in m.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_metrics_csv(text: &str, source: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::parse(
                source,
                1,
                format!("expected header `{METRICS_HEADER}`"),
            ))
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::parse(
                source,
                i + 1,
                format!("expected 7 fields, found {}", cells.len()),
            ));
        }
        let epoch = cells[0]
            .parse()
            .map_err(|_| Error::parse(source, i + 1, "invalid epoch"))?;
        let mut v = [0.0; 6];
        for (slot, cell) in v.iter_mut().zip(&cells[1..]) {
            *slot = cell
                .parse()
                .map_err(|_| Error::parse(source, i + 1, format!("invalid number `{cell}`")))?;
        }
        out.push(EpochMetrics {
            epoch,
            train_mse: v[0],
            val_mse: v[1],
            disc_loss: v[2],
            gen_loss: v[3],
            mean_f_data: v[4],
            mean_f_particles: v[5],
        });
    }
    Ok(out)
}
