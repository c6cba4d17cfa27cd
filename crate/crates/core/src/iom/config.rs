use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DEFAULT_LEAKY_SLOPE;

/// Widths of the representation, objective head and discriminator networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub phi_hidden: Vec<usize>,
    pub representation_dim: usize,
    pub head_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl ArchConfig {
    /// Two hidden layers of 2048 for the representation (128 outputs), two of
    /// 1024 for the head and one of 512 for the discriminator.
    pub fn full() -> Self {
        Self {
            phi_hidden: vec![2048, 2048],
            representation_dim: 128,
            head_hidden: vec![1024, 1024],
            disc_hidden: vec![512],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    /// Same topology at widths a single CPU core trains in seconds.
    pub fn compact() -> Self {
        Self {
            phi_hidden: vec![64, 64],
            representation_dim: 16,
            head_hidden: vec![64, 64],
            disc_hidden: vec![64],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn phi_sizes(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.phi_hidden.iter().copied())
            .chain([self.representation_dim])
            .collect()
    }

    pub fn head_sizes(&self) -> Vec<usize> {
        std::iter::once(self.representation_dim)
            .chain(self.head_hidden.iter().copied())
            .chain([1])
            .collect()
    }

    pub fn disc_sizes(&self) -> Vec<usize> {
        std::iter::once(self.representation_dim)
            .chain(self.disc_hidden.iter().copied())
            .chain([1])
            .collect()
    }
}

/// Dual-ascent settings for the conservative variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservatismConfig {
    pub alpha_init: f64,
    pub lr_alpha: f64,
    /// Budget on `mean f(particles) - mean f(data)`, in standardized units.
    pub budget: f64,
}

impl Default for ConservatismConfig {
    fn default() -> Self {
        Self {
            alpha_init: 0.3,
            lr_alpha: 0.01,
            budget: 0.0,
        }
    }
}

/// All hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the invariance term.
    pub lambda: f64,
    /// Train the discriminator and move particles during training. With this
    /// off the run is plain regression of `head(phi(x))`.
    pub adversarial: bool,
    pub lr_head: f64,
    pub lr_phi: f64,
    pub lr_disc: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub particle_count: usize,
    /// Particle step size in standardized input space.
    pub eta: f64,
    /// Ascent steps applied to fresh samples after training.
    pub ascent_steps: usize,
    pub candidate_count: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservatism: Option<ConservatismConfig>,
    pub arch: ArchConfig,
    /// Keep a model snapshot every this many epochs (the last epoch is always kept).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            adversarial: true,
            lr_head: 0.001,
            lr_phi: 0.0003,
            lr_disc: 0.0003,
            batch_size: 128,
            epochs: 300,
            particle_count: 128,
            eta: 0.05,
            ascent_steps: 50,
            candidate_count: 128,
            seed: 0,
            conservatism: None,
            arch: ArchConfig::full(),
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    /// Reduced preset for the synthetic tasks: compact networks, smaller
    /// batches and a checkpoint every 10 epochs.
    pub fn compact() -> Self {
        Self {
            batch_size: 32,
            checkpoint_every: 10,
            arch: ArchConfig::compact(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        for (name, lr) in [
            ("lr_head", self.lr_head),
            ("lr_phi", self.lr_phi),
            ("lr_disc", self.lr_disc),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be > 0, got {lr}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.particle_count == 0 {
            return bad("epochs, batch_size and particle_count must be >= 1".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be >= 1".into());
        }
        if self.conservatism.is_some() && !self.adversarial {
            return bad("the conservatism term needs particles, so adversarial must be on".into());
        }
        if let Some(c) = &self.conservatism {
            if !(c.lr_alpha > 0.0) || c.alpha_init < 0.0 {
                return bad("conservatism needs lr_alpha > 0 and alpha_init >= 0".into());
            }
        }
        if self.arch.representation_dim == 0
            || self
                .arch
                .phi_hidden
                .iter()
                .chain(&self.arch.head_hidden)
                .any(|&w| w == 0)
        {
            return bad("network widths must be >= 1".into());
        }
        Ok(())
    }

    /// Whether epoch `epoch` (0-based) keeps a model snapshot.
    pub fn keeps_checkpoint(&self, epoch: usize) -> bool {
        (epoch + 1) % self.checkpoint_every == 0 || epoch + 1 == self.epochs
    }
}
