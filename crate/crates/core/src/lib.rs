//! Invariant objective models for offline model-based optimization.
//!
//! A surrogate `head(phi(x))` is fit to a static dataset while an
//! adversarial least-squares discriminator pushes the representation of
//! optimizer-produced designs toward that of dataset designs. Designs are
//! represented by particles that climb the surrogate during training.

pub mod error;
pub mod eval;
pub mod iom;
pub mod methods;
pub mod numerics;
pub mod rng;
pub mod tasks;
pub mod tuning;

pub use error::{Error, Result};
