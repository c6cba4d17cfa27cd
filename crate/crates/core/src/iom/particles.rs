use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::IomModel;
use crate::numerics::{Mlp, Tape, Tensor};
use crate::rng::{stream_rng, STREAM_CANDIDATES};
use crate::tasks::Dataset;

/// Per-row gradient `∇ₓ head(phi(x))` for every row of `x`.
pub fn per_sample_input_gradient(phi: &Mlp, head: &Mlp, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let pb = phi.bind(&mut tape, false);
    let hb = head.bind(&mut tape, false);
    let z = phi.forward(&mut tape, &pb, xv)?;
    let f = head.forward(&mut tape, &hb, z)?;
    // rows are independent, so the gradient of the sum is the per-row gradient
    let s = tape.sum(f)?;
    Ok(tape.backward(s)?.wrt(xv))
}

/// A differentiable objective over standardized designs, ascended by
/// particles and candidates.
pub trait Surrogate {
    /// Value of every row of `x`.
    fn values(&self, x: &Tensor) -> Result<Vec<f64>>;

    /// Gradient of the value at every row of `x`.
    fn input_gradients(&self, x: &Tensor) -> Result<Tensor>;
}

impl Surrogate for IomModel {
    fn values(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.predict(x)
    }

    fn input_gradients(&self, x: &Tensor) -> Result<Tensor> {
        per_sample_input_gradient(&self.phi, &self.head, x)
    }
}

/// One ascent step `x ← x + η ∇ₓ f(x)` on every row, model untouched.
pub fn particle_ascent_step<S: Surrogate + ?Sized>(
    model: &S,
    points: &Tensor,
    eta: f64,
) -> Result<Tensor> {
    let grad = model
        .input_gradients(points)
        .map_err(|e| Error::NonFinite(format!("particle gradient: {e}")))?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("particle gradient".into()));
    }
    let mut out = points.clone();
    for (p, g) in out.data_mut().iter_mut().zip(grad.data()) {
        *p += eta * g;
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("particle positions".into()));
    }
    Ok(out)
}

/// Design particles in standardized input space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub points: Tensor,
    pub eta: f64,
}

impl ParticleSet {
    pub fn new(points: Tensor, eta: f64) -> Self {
        Self { points, eta }
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn step<S: Surrogate + ?Sized>(&mut self, model: &S) -> Result<()> {
        self.points = particle_ascent_step(model, &self.points, self.eta)?;
        Ok(())
    }
}

/// Draws `count` row indices: without replacement when `count <= n`,
/// independently with replacement otherwise.
pub fn sample_rows<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    if count <= n {
        index::sample(rng, n, count).into_vec()
    } else {
        (0..count).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Designs produced by ascending a frozen model from dataset samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub start: Tensor,
    pub standardized: Tensor,
    pub raw: Tensor,
}

/// Samples `n` dataset inputs and ascends each `steps` times against `model`.
pub fn final_candidates<S: Surrogate + ?Sized>(
    model: &S,
    dataset: &Dataset,
    steps: usize,
    eta: f64,
    n: usize,
    seed: u64,
) -> Result<Candidates> {
    let mut rng = stream_rng(seed, STREAM_CANDIDATES, 0);
    let rows = sample_rows(dataset.len(), n, &mut rng);
    let start = dataset.standardized_inputs().select_rows(&rows);
    let mut x = start.clone();
    for _ in 0..steps {
        x = particle_ascent_step(model, &x, eta)?;
    }
    let raw = dataset.stats().destandardize_inputs(&x);
    Ok(Candidates {
        start,
        standardized: x,
        raw,
    })
}
