//! The alternating training loop.
//!
//! Every minibatch runs, in order: one discriminator step on detached
//! representations, one surrogate step on the regression loss plus the
//! weighted invariance term (and the conservatism term when enabled), and
//! one ascent step for every particle against the freshly updated surrogate.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::iom::losses::{disc_objective_on_tape, invariance_on_tape, mse_on_tape};
use crate::iom::record::{Checkpoint, EpochMetrics, RunRecord};
use crate::iom::{
    discriminator_loss, invariance_loss, particle_ascent_step, sample_rows, ConservatismMultiplier,
    IomModel, TrainConfig,
};
use crate::numerics::text::{fmt_f64, write_tensor, TextReader};
use crate::numerics::{AdamState, Mlp, Tape, Tensor};
use crate::rng::{
    stream_rng, STREAM_BATCHES, STREAM_INIT, STREAM_PARTICLE_BATCHES, STREAM_PARTICLE_INIT,
};
use crate::tasks::Dataset;

/// Everything needed to continue a run from the end of an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epochs_done: usize,
    pub model: IomModel,
    pub adam_phi: AdamState,
    pub adam_head: AdamState,
    pub adam_disc: AdamState,
    pub particles: Tensor,
    pub multiplier: Option<ConservatismMultiplier>,
}

fn write_adam(out: &mut String, name: &str, a: &AdamState) {
    let _ = writeln!(
        out,
        "adam {name} lr={} beta1={} beta2={} eps={} steps={} tensors={}",
        fmt_f64(a.learning_rate),
        fmt_f64(a.beta1),
        fmt_f64(a.beta2),
        fmt_f64(a.epsilon),
        a.step_count,
        a.first_moment.len()
    );
    for t in a.first_moment.iter().chain(&a.second_moment) {
        write_tensor(out, t);
    }
}

fn read_adam(r: &mut TextReader<'_>, name: &str) -> Result<AdamState> {
    let fields = r.header("adam")?;
    if fields.first() != Some(&name) {
        return Err(r.error(format!("expected `adam {name}`")));
    }
    let learning_rate = r.parse_f64(r.field(&fields, "lr")?)?;
    let beta1 = r.parse_f64(r.field(&fields, "beta1")?)?;
    let beta2 = r.parse_f64(r.field(&fields, "beta2")?)?;
    let epsilon = r.parse_f64(r.field(&fields, "eps")?)?;
    let steps = r.field(&fields, "steps")?;
    let step_count = steps
        .parse()
        .map_err(|_| r.error(format!("invalid step count `{steps}`")))?;
    let n = r.parse_usize(r.field(&fields, "tensors")?)?;
    let first_moment = (0..n)
        .map(|_| r.read_tensor())
        .collect::<Result<Vec<_>>>()?;
    let second_moment = (0..n)
        .map(|_| r.read_tensor())
        .collect::<Result<Vec<_>>>()?;
    Ok(AdamState {
        learning_rate,
        beta1,
        beta2,
        epsilon,
        step_count,
        first_moment,
        second_moment,
    })
}

impl TrainState {
    pub fn to_text(&self) -> String {
        let mut s = format!("state epochs_done={}\n", self.epochs_done);
        s.push_str(&self.model.to_text());
        write_adam(&mut s, "phi", &self.adam_phi);
        write_adam(&mut s, "head", &self.adam_head);
        write_adam(&mut s, "disc", &self.adam_disc);
        s.push_str("particles\n");
        write_tensor(&mut s, &self.particles);
        match &self.multiplier {
            None => s.push_str("multiplier none\n"),
            Some(m) => {
                let _ = writeln!(
                    s,
                    "multiplier alpha={} budget={}",
                    fmt_f64(m.alpha()),
                    fmt_f64(m.budget())
                );
                write_adam(&mut s, "alpha", m.adam());
            }
        }
        s
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut r = TextReader::new(text, source);
        let fields = r.header("state")?;
        let epochs_done = r.parse_usize(r.field(&fields, "epochs_done")?)?;
        let model = IomModel::read(&mut r)?;
        let adam_phi = read_adam(&mut r, "phi")?;
        let adam_head = read_adam(&mut r, "head")?;
        let adam_disc = read_adam(&mut r, "disc")?;
        r.header("particles")?;
        let particles = r.read_tensor()?;
        let fields = r.header("multiplier")?;
        let multiplier = if fields == ["none"] {
            None
        } else {
            let alpha = r.parse_f64(r.field(&fields, "alpha")?)?;
            let budget = r.parse_f64(r.field(&fields, "budget")?)?;
            let adam = read_adam(&mut r, "alpha")?;
            Some(ConservatismMultiplier::from_parts(alpha, adam, budget))
        };
        r.expect_end()?;
        Ok(Self {
            epochs_done,
            model,
            adam_phi,
            adam_head,
            adam_disc,
            particles,
            multiplier,
        })
    }
}

/// Controls for [`Trainer::run`].
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Stop once this many epochs are complete, even if the config asks for more.
    pub stop_after: Option<usize>,
    /// Hold checkpoint models in the returned record. Callers that stream
    /// checkpoints to disk turn this off to bound memory.
    pub keep_checkpoints: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_after: None,
            keep_checkpoints: true,
        }
    }
}

/// Training loop bound to one dataset and config.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: TrainConfig,
    train_x: Tensor,
    train_y: Vec<f64>,
    val_x: Tensor,
    val_y: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(reason) => Error::Diverged { epoch, reason },
        other => other,
    }
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if dataset.split().train.is_empty() || dataset.split().validation.is_empty() {
            return Err(Error::Config(
                "training needs non-empty training and validation splits".into(),
            ));
        }
        Ok(Self {
            dataset,
            train_x: dataset.train_inputs(),
            train_y: dataset.train_labels(),
            val_x: dataset.validation_inputs(),
            val_y: dataset.validation_labels(),
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Freshly initialized networks, optimizers and particles.
    pub fn initial_state(&self) -> Result<TrainState> {
        let c = &self.config;
        let model = IomModel::init(
            self.dataset.dim(),
            &c.arch,
            &mut stream_rng(c.seed, STREAM_INIT, 0),
        )?;
        let rows = sample_rows(
            self.train_x.rows(),
            c.particle_count,
            &mut stream_rng(c.seed, STREAM_PARTICLE_INIT, 0),
        );
        Ok(TrainState {
            epochs_done: 0,
            adam_phi: AdamState::new(model.phi.params(), c.lr_phi),
            adam_head: AdamState::new(model.head.params(), c.lr_head),
            adam_disc: AdamState::new(model.disc.params(), c.lr_disc),
            model,
            particles: self.train_x.select_rows(&rows),
            multiplier: c.conservatism.as_ref().map(ConservatismMultiplier::new),
        })
    }

    /// Checks that a loaded state belongs to this dataset and config.
    pub fn check_state(&self, state: &TrainState) -> Result<()> {
        let fresh = self.initial_state()?;
        let same_shapes = |a: &Mlp, b: &Mlp| a.sizes() == b.sizes();
        if !same_shapes(&fresh.model.phi, &state.model.phi)
            || !same_shapes(&fresh.model.head, &state.model.head)
            || !same_shapes(&fresh.model.disc, &state.model.disc)
            || fresh.particles.shape() != state.particles.shape()
            || fresh.multiplier.is_some() != state.multiplier.is_some()
        {
            return Err(Error::Config(
                "saved training state does not match the dataset and config".into(),
            ));
        }
        if state.epochs_done > self.config.epochs {
            return Err(Error::Config(format!(
                "saved state has {} epochs but the config asks for {}",
                state.epochs_done, self.config.epochs
            )));
        }
        Ok(())
    }

    /// Trains one epoch in place and returns its metrics.
    pub fn run_epoch(&self, state: &mut TrainState) -> Result<EpochMetrics> {
        let epoch = state.epochs_done;
        self.epoch_body(state, epoch).map_err(diverged(epoch))?;
        state.epochs_done += 1;
        let metrics = self.epoch_metrics(state, epoch).map_err(diverged(epoch))?;
        if !metrics.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("non-finite metrics {:?}", metrics.values()),
            });
        }
        Ok(metrics)
    }

    fn epoch_body(&self, state: &mut TrainState, epoch: usize) -> Result<()> {
        let c = &self.config;
        let mut batch_rng = stream_rng(c.seed, STREAM_BATCHES, epoch as u64);
        let mut particle_rng = stream_rng(c.seed, STREAM_PARTICLE_BATCHES, epoch as u64);
        let mut order: Vec<usize> = (0..self.train_x.rows()).collect();
        order.shuffle(&mut batch_rng);
        let pairing = c.batch_size.min(c.particle_count);
        let mut tape = Tape::new();
        for chunk in order.chunks(c.batch_size) {
            let bx = self.train_x.select_rows(chunk);
            let by: Vec<f64> = chunk.iter().map(|&i| self.train_y[i]).collect();
            let px = if c.adversarial {
                let rows = sample_rows(state.particles.rows(), pairing, &mut particle_rng);
                Some(state.particles.select_rows(&rows))
            } else {
                None
            };
            if let Some(px) = &px {
                self.disc_step(&mut tape, state, &bx, px)?;
            }
            self.surrogate_step(&mut tape, state, &bx, &by, px.as_ref())?;
            if c.adversarial {
                state.particles = particle_ascent_step(&state.model, &state.particles, c.eta)?;
            }
        }
        Ok(())
    }

    fn disc_step(
        &self,
        tape: &mut Tape,
        state: &mut TrainState,
        bx: &Tensor,
        px: &Tensor,
    ) -> Result<()> {
        tape.clear();
        let m = &state.model;
        let z_data = tape.constant(m.represent(bx)?);
        let z_opt = tape.constant(m.represent(px)?);
        let db = m.disc.bind(tape, true);
        let d_data = m.disc.forward(tape, &db, z_data)?;
        let d_opt = m.disc.forward(tape, &db, z_opt)?;
        let loss = disc_objective_on_tape(tape, d_data, d_opt)?;
        let grads = m.disc.gradients(&db, &tape.backward(loss)?);
        state.adam_disc.step(state.model.disc.params_mut(), &grads)
    }

    fn surrogate_step(
        &self,
        tape: &mut Tape,
        state: &mut TrainState,
        bx: &Tensor,
        by: &[f64],
        px: Option<&Tensor>,
    ) -> Result<()> {
        tape.clear();
        let c = &self.config;
        let m = &state.model;
        let pb = m.phi.bind(tape, true);
        let hb = m.head.bind(tape, true);
        let x = tape.constant(bx.clone());
        let z = m.phi.forward(tape, &pb, x)?;
        let pred = m.head.forward(tape, &hb, z)?;
        let mut total = mse_on_tape(tape, pred, by)?;
        let mut raw_conservatism = None;
        if let Some(px) = px {
            let xo = tape.constant(px.clone());
            let zo = m.phi.forward(tape, &pb, xo)?;
            if c.lambda > 0.0 {
                let db = m.disc.bind(tape, false);
                let d_opt = m.disc.forward(tape, &db, zo)?;
                let inv = invariance_on_tape(tape, d_opt)?;
                let weighted = tape.scale(inv, c.lambda)?;
                total = tape.add(total, weighted)?;
            }
            if let Some(mult) = &state.multiplier {
                let fo = m.head.forward(tape, &hb, zo)?;
                let mean_opt = tape.mean(fo)?;
                let mean_data = tape.mean(pred)?;
                let gap = tape.sub(mean_opt, mean_data)?;
                raw_conservatism = Some(tape.value(gap).item());
                let weighted = tape.scale(gap, mult.alpha())?;
                total = tape.add(total, weighted)?;
            }
        }
        let grads = tape.backward(total)?;
        let g_phi = m.phi.gradients(&pb, &grads);
        let g_head = m.head.gradients(&hb, &grads);
        state.adam_phi.step(state.model.phi.params_mut(), &g_phi)?;
        state
            .adam_head
            .step(state.model.head.params_mut(), &g_head)?;
        if let (Some(mult), Some(raw)) = (state.multiplier.as_mut(), raw_conservatism) {
            mult.update(raw)?;
        }
        Ok(())
    }

    /// Full-set metrics for the model and particles in `state`.
    pub fn epoch_metrics(&self, state: &TrainState, epoch: usize) -> Result<EpochMetrics> {
        let m = &state.model;
        let (disc_loss, gen_loss) = if self.config.adversarial {
            let z_val = m.represent(&self.val_x)?;
            let z_opt = m.represent(&state.particles)?;
            (
                discriminator_loss(&m.disc, &z_val, &z_opt)?,
                invariance_loss(&m.disc, &z_opt)?,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(EpochMetrics {
            epoch,
            train_mse: mse(&m.predict(&self.train_x)?, &self.train_y),
            val_mse: mse(&m.predict(&self.val_x)?, &self.val_y),
            disc_loss,
            gen_loss,
            mean_f_data: mean(&m.predict(self.dataset.standardized_inputs())?),
            mean_f_particles: mean(&m.predict(&state.particles)?),
        })
    }

    /// Trains from `state` until the configured epoch count (or `stop_after`),
    /// calling `observer` after every epoch.
    pub fn run<F>(
        &self,
        mut state: TrainState,
        mut metrics: Vec<EpochMetrics>,
        options: RunOptions,
        mut observer: F,
    ) -> Result<(RunRecord, TrainState)>
    where
        F: FnMut(&TrainState, &EpochMetrics) -> Result<()>,
    {
        self.check_state(&state)?;
        if metrics.len() != state.epochs_done {
            return Err(Error::Config(format!(
                "{} metric rows for {} completed epochs",
                metrics.len(),
                state.epochs_done
            )));
        }
        let end = options
            .stop_after
            .map_or(self.config.epochs, |s| s.min(self.config.epochs));
        let mut checkpoints = Vec::new();
        while state.epochs_done < end {
            let row = self.run_epoch(&mut state)?;
            observer(&state, &row)?;
            if options.keep_checkpoints && self.config.keeps_checkpoint(row.epoch) {
                checkpoints.push(Checkpoint {
                    epoch: row.epoch,
                    model: state.model.clone(),
                });
            }
            metrics.push(row);
        }
        let record = RunRecord {
            config: self.config.clone(),
            metrics,
            checkpoints,
            model: state.model.clone(),
            particles: state.particles.clone(),
        };
        Ok((record, state))
    }
}

/// Runs the full training loop and keeps every configured checkpoint.
pub fn train_iom(dataset: &Dataset, config: &TrainConfig) -> Result<RunRecord> {
    let trainer = Trainer::new(dataset, config.clone())?;
    let state = trainer.initial_state()?;
    let (record, _) = trainer.run(state, Vec::new(), RunOptions::default(), |_, _| Ok(()))?;
    Ok(record)
}

/// Plain minibatch regression of `head(phi(x))`, written independently of
/// [`Trainer`]. Returns the `(phi, head)` parameters after every epoch.
///
/// It shares only the seeding scheme with the full loop, which makes it a
/// reference for the non-adversarial configuration.
pub fn train_plain_regression(dataset: &Dataset, config: &TrainConfig) -> Result<Vec<(Mlp, Mlp)>> {
    config.validate()?;
    let arch = &config.arch;
    let mut init = stream_rng(config.seed, STREAM_INIT, 0);
    let mut phi = Mlp::init(&arch.phi_sizes(dataset.dim()), arch.leaky_slope, &mut init)?;
    let mut head = Mlp::init(&arch.head_sizes(), arch.leaky_slope, &mut init)?;
    let mut adam_phi = AdamState::new(phi.params(), config.lr_phi);
    let mut adam_head = AdamState::new(head.params(), config.lr_head);
    let x = dataset.train_inputs();
    let y = dataset.train_labels();
    let mut snapshots = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = stream_rng(config.seed, STREAM_BATCHES, epoch as u64);
        let mut order: Vec<usize> = (0..x.rows()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let pb = phi.bind(&mut tape, true);
            let hb = head.bind(&mut tape, true);
            let xb = tape.constant(x.select_rows(chunk));
            let z = phi.forward(&mut tape, &pb, xb)?;
            let pred = head.forward(&mut tape, &hb, z)?;
            let by: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let loss = mse_on_tape(&mut tape, pred, &by)?;
            let grads = tape.backward(loss)?;
            let g_phi = phi.gradients(&pb, &grads);
            let g_head = head.gradients(&hb, &grads);
            adam_phi.step(phi.params_mut(), &g_phi)?;
            adam_head.step(head.params_mut(), &g_head)?;
        }
        snapshots.push((phi.clone(), head.clone()));
    }
    Ok(snapshots)
}
