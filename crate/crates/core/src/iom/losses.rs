//! Training objectives.
//!
//! The discriminator follows the least-squares adversarial convention:
//! dataset representations are labelled 1, optimized ones 0, and each half
//! of the loss is averaged and halved. A discriminator that cannot tell the
//! two apart outputs 0.5 everywhere and scores exactly [`IDEAL_DISC_LOSS`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iom::{ConservatismConfig, IomModel};
use crate::numerics::{AdamState, Mlp, Tape, Tensor, Var};

/// Discriminator loss at perfect invariance.
pub const IDEAL_DISC_LOSS: f64 = 0.25;

fn nonempty(t: &Tensor, what: &str) -> Result<()> {
    if t.rows() == 0 || t.is_empty() {
        return Err(Error::Usage(format!("{what} batch is empty")));
    }
    Ok(())
}

/// `mean((pred - y)²)` on the tape; `pred` is `[n, 1]`.
pub fn mse_on_tape(tape: &mut Tape, pred: Var, labels: &[f64]) -> Result<Var> {
    let y = tape.constant(Tensor::matrix(labels.len(), 1, labels.to_vec())?);
    let r = tape.sub(pred, y)?;
    let sq = tape.square(r)?;
    tape.mean(sq)
}

/// `0.5·mean((D(z_data) - 1)²) + 0.5·mean(D(z_opt)²)` on the tape.
pub fn disc_objective_on_tape(tape: &mut Tape, d_data: Var, d_opt: Var) -> Result<Var> {
    let a = tape.add_scalar(d_data, -1.0)?;
    let a = tape.square(a)?;
    let a = tape.mean(a)?;
    let b = tape.square(d_opt)?;
    let b = tape.mean(b)?;
    let s = tape.add(a, b)?;
    tape.scale(s, 0.5)
}

/// `0.5·mean((D(z_opt) - 1)²)` on the tape.
pub fn invariance_on_tape(tape: &mut Tape, d_opt: Var) -> Result<Var> {
    let a = tape.add_scalar(d_opt, -1.0)?;
    let a = tape.square(a)?;
    let a = tape.mean(a)?;
    tape.scale(a, 0.5)
}

fn eval_scalar(build: impl FnOnce(&mut Tape) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let v = build(&mut tape)?;
    Ok(tape.value(v).item())
}

/// Mean squared error of `head(phi(x))` against standardized labels.
pub fn regression_loss(model: &IomModel, batch_x: &Tensor, batch_y: &[f64]) -> Result<f64> {
    nonempty(batch_x, "regression")?;
    if batch_x.rows() != batch_y.len() {
        return Err(Error::Shape {
            op: "regression_loss",
            expected: vec![batch_x.rows()],
            actual: vec![batch_y.len()],
        });
    }
    let pred = model.predict(batch_x)?;
    eval_scalar(|tape| {
        let p = tape.constant(Tensor::matrix(pred.len(), 1, pred)?);
        mse_on_tape(tape, p, batch_y)
    })
}

/// Least-squares discriminator loss on (already detached) representations.
pub fn discriminator_loss(disc: &Mlp, z_data: &Tensor, z_opt: &Tensor) -> Result<f64> {
    nonempty(z_data, "dataset representation")?;
    nonempty(z_opt, "optimized representation")?;
    let d_data = disc.predict(z_data)?;
    let d_opt = disc.predict(z_opt)?;
    eval_scalar(|tape| {
        let a = tape.constant(d_data);
        let b = tape.constant(d_opt);
        disc_objective_on_tape(tape, a, b)
    })
}

/// Generator-side loss pulling optimized representations toward the data label.
pub fn invariance_loss(disc: &Mlp, z_opt: &Tensor) -> Result<f64> {
    nonempty(z_opt, "optimized representation")?;
    let d_opt = disc.predict(z_opt)?;
    eval_scalar(|tape| {
        let a = tape.constant(d_opt);
        invariance_on_tape(tape, a)
    })
}

/// `mean f(particles) - mean f(data)`, before weighting by the multiplier.
pub fn conservatism_term(
    model: &IomModel,
    batch_x_data: &Tensor,
    particles: &Tensor,
) -> Result<f64> {
    nonempty(batch_x_data, "dataset")?;
    nonempty(particles, "particle")?;
    let fp = model.predict(particles)?;
    let fd = model.predict(batch_x_data)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(&fp) - mean(&fd))
}

/// Lagrange multiplier for the conservatism term, raised by dual ascent
/// whenever the raw term exceeds its budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservatismMultiplier {
    alpha: Tensor,
    adam: AdamState,
    budget: f64,
}

impl ConservatismMultiplier {
    pub fn new(config: &ConservatismConfig) -> Self {
        let alpha = Tensor::scalar(config.alpha_init);
        let adam = AdamState::new([&alpha], config.lr_alpha);
        Self {
            alpha,
            adam,
            budget: config.budget,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.item()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub(crate) fn from_parts(alpha: f64, adam: AdamState, budget: f64) -> Self {
        Self {
            alpha: Tensor::scalar(alpha),
            adam,
            budget,
        }
    }

    /// One Adam step maximizing `alpha · (raw - budget)`, clamped at zero.
    pub fn update(&mut self, raw: f64) -> Result<()> {
        let grad = Tensor::scalar(-(raw - self.budget));
        self.adam.step([&mut self.alpha], &[grad])?;
        if self.alpha.item() < 0.0 {
            self.alpha.data_mut()[0] = 0.0;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iom::ArchConfig;
    use crate::numerics::Layer;
    use crate::rng::{stream_rng, STREAM_INIT};

    /// Single affine layer producing `c` for every input of width `r`.
    fn constant_net(r: usize, c: f64) -> Mlp {
        let layer = Layer::new(Tensor::zeros(&[1, r]), Tensor::vector(vec![c])).unwrap();
        Mlp::new(vec![layer], 0.3).unwrap()
    }

    fn z(rows: usize, r: usize, v: f64) -> Tensor {
        Tensor::matrix(rows, r, (0..rows * r).map(|i| v + i as f64 * 0.1).collect()).unwrap()
    }

    #[test]
    fn disc_loss_fixed_points() {
        let (zd, zo) = (z(5, 3, 1.0), z(7, 3, -1.0));
        assert_eq!(
            discriminator_loss(&constant_net(3, 0.5), &zd, &zo).unwrap(),
            0.25
        );
        // D ≡ 1 on data and ≡ 0 on particles: a net that reads a sign feature
        let layer = Layer::new(
            Tensor::from_rows(&[[0.0, 0.0, 0.0, 1.0]]).unwrap(),
            Tensor::vector(vec![0.0]),
        )
        .unwrap();
        let d = Mlp::new(vec![layer], 0.3).unwrap();
        let mut zd1 = Tensor::zeros(&[4, 4]);
        for r in 0..4 {
            zd1.row_mut(r)[3] = 1.0;
        }
        let zo0 = Tensor::zeros(&[6, 4]);
        assert_eq!(discriminator_loss(&d, &zd1, &zo0).unwrap(), 0.0);
        assert_eq!(discriminator_loss(&d, &zo0, &zd1).unwrap(), 1.0);
    }

    #[test]
    fn invariance_loss_values() {
        let zo = z(4, 2, 0.0);
        assert_eq!(invariance_loss(&constant_net(2, 1.0), &zo).unwrap(), 0.0);
        assert_eq!(invariance_loss(&constant_net(2, 0.0), &zo).unwrap(), 0.5);
    }

    #[test]
    fn empty_batches_are_usage_errors() {
        let empty = Tensor::zeros(&[0, 2]);
        let some = z(3, 2, 0.0);
        let d = constant_net(2, 0.5);
        assert!(matches!(
            discriminator_loss(&d, &empty, &some),
            Err(Error::Usage(_))
        ));
        assert!(matches!(invariance_loss(&d, &empty), Err(Error::Usage(_))));
    }

    fn tiny_model(seed: u64) -> IomModel {
        let arch = ArchConfig {
            phi_hidden: vec![5],
            representation_dim: 3,
            head_hidden: vec![4],
            disc_hidden: vec![4],
            leaky_slope: 0.3,
        };
        IomModel::init(2, &arch, &mut stream_rng(seed, STREAM_INIT, 0)).unwrap()
    }

    #[test]
    fn regression_loss_matches_hand_sum() {
        let m = tiny_model(4);
        let x = Tensor::from_rows(&[[0.3, -1.2], [2.0, 0.1], [-0.7, 0.4]]).unwrap();
        let y = [0.5, -1.0, 2.0];
        let mut sum = 0.0;
        for r in 0..3 {
            // independent forward pass, layer by layer
            let mut h = x.row(r).to_vec();
            for net in [&m.phi, &m.head] {
                let last = net.layers().len() - 1;
                for (k, l) in net.layers().iter().enumerate() {
                    let mut out = l.bias.data().to_vec();
                    for (o, ov) in out.iter_mut().enumerate() {
                        for (i, hv) in h.iter().enumerate() {
                            *ov += l.weight.get(o, i) * hv;
                        }
                    }
                    if k != last {
                        out.iter_mut().for_each(|v| {
                            if *v <= 0.0 {
                                *v *= 0.3
                            }
                        });
                    }
                    h = out;
                }
            }
            sum += (h[0] - y[r]).powi(2);
        }
        let loss = regression_loss(&m, &x, &y).unwrap();
        assert!((loss - sum / 3.0).abs() < 1e-12);
    }

    #[test]
    fn regression_loss_trivial_cases() {
        let m = IomModel::new(
            Mlp::new(
                vec![Layer::new(
                    Tensor::from_rows(&[[1.0]]).unwrap(),
                    Tensor::vector(vec![0.0]),
                )
                .unwrap()],
                0.3,
            )
            .unwrap(),
            constant_net(1, 1.0),
            constant_net(1, 0.5),
        )
        .unwrap();
        let x = Tensor::from_rows(&[[3.0], [-2.0]]).unwrap();
        assert_eq!(regression_loss(&m, &x, &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(regression_loss(&m, &x, &[1.0, 1.0]).unwrap(), 0.0);
        assert!(regression_loss(&m, &Tensor::zeros(&[0, 1]), &[]).is_err());
    }

    #[test]
    fn conservatism_term_definition() {
        // phi = identity on one feature, head = identity: f(x) = x
        let ident = |c| {
            Mlp::new(
                vec![Layer::new(
                    Tensor::from_rows(&[[1.0]]).unwrap(),
                    Tensor::vector(vec![c]),
                )
                .unwrap()],
                0.3,
            )
            .unwrap()
        };
        let m = IomModel::new(ident(0.0), ident(0.0), constant_net(1, 0.5)).unwrap();
        let data = Tensor::from_rows(&[[1.0], [1.0]]).unwrap();
        let parts = Tensor::from_rows(&[[2.0], [2.0], [2.0]]).unwrap();
        assert_eq!(conservatism_term(&m, &data, &parts).unwrap(), 1.0);
        assert_eq!(conservatism_term(&m, &data, &data).unwrap(), 0.0);
    }

    #[test]
    fn multiplier_rises_while_over_budget() {
        let mut mult = ConservatismMultiplier::new(&ConservatismConfig::default());
        assert_eq!(mult.alpha(), 0.3);
        let mut prev = mult.alpha();
        for _ in 0..100 {
            mult.update(0.8).unwrap();
            assert!(mult.alpha() >= prev);
            prev = mult.alpha();
        }
        assert!(prev > 0.3);
        // and is pulled back (never below zero) when under budget
        for _ in 0..1000 {
            mult.update(-5.0).unwrap();
            assert!(mult.alpha() >= 0.0);
        }
    }
}
