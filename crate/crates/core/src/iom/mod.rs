//! The invariant objective model: networks, objectives, training loop and
//! design particles.

mod config;
mod losses;
mod model;
mod particles;
mod record;
mod train;

pub use config::{ArchConfig, ConservatismConfig, TrainConfig};
pub use losses::{
    conservatism_term, disc_objective_on_tape, discriminator_loss, invariance_loss,
    invariance_on_tape, mse_on_tape, regression_loss, ConservatismMultiplier, IDEAL_DISC_LOSS,
};
pub use model::IomModel;
pub use particles::{
    final_candidates, particle_ascent_step, per_sample_input_gradient, sample_rows, Candidates,
    ParticleSet, Surrogate,
};
pub use record::{
    metrics_csv, parse_metrics_csv, Checkpoint, EpochMetrics, RunRecord, METRICS_HEADER,
};
pub use train::{train_iom, train_plain_regression, RunOptions, TrainState, Trainer};
