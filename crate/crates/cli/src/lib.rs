//! Pipelines behind the `iom` binary: dataset generation, training, λ
//! sweeps, offline tuning and oracle evaluation over fixed directory layouts.

pub mod commands;
pub mod config;
pub mod rundir;

pub use commands::{evaluate_dir, gen_data, sweep, train_run, tune, Registries, TrainOutcome};
pub use config::PipelineConfig;
pub use rundir::{RunDir, SweepEntry, SweepManifest};
