use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Tape, Tensor, Var};

/// Negative slope of the leaky rectifier used by every hidden layer.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.3;

/// One affine layer: `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.rows()] {
            return Err(Error::Config(format!(
                "layer weight {:?} incompatible with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully connected network: leaky rectifier after every layer but the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    slope: f64,
}

/// Tape handles for the parameters of an [`Mlp`], in layer order.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    vars: Vec<(Var, Var)>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Config(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k,
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, slope })
    }

    /// Uniform fan-based initialization, `U[-s, s]` with
    /// `s = sqrt(6 / (fan_in + fan_out))`, and zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], slope: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-s..=s))
                    .collect();
                Layer {
                    weight: Tensor::matrix(fan_out, fan_in, data).expect("sized"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Self::new(layers, slope)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths including input and output, e.g. `[d, 64, 64, 1]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters in canonical order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    /// Records the parameters on `tape`, as leaves when `trainable` and as
    /// constants otherwise.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let vars = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()))
                } else {
                    (
                        tape.constant(l.weight.clone()),
                        tape.constant(l.bias.clone()),
                    )
                }
            })
            .collect();
        BoundMlp { vars }
    }

    /// Forward pass through previously bound parameters.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundMlp, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if tape.value(x).shape().len() != 2 || cols != self.input_dim() {
            return Err(Error::Config(format!(
                "network expects {} input columns, got shape {:?}",
                self.input_dim(),
                tape.value(x).shape()
            )));
        }
        let last = bound.vars.len() - 1;
        let mut h = x;
        for (k, &(w, b)) in bound.vars.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            if k != last {
                h = tape.leaky_relu(h, self.slope)?;
            }
        }
        Ok(h)
    }

    /// Tape-free evaluation; bit-identical to [`Mlp::forward`].
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::Config(format!(
                "network expects {} input columns, got shape {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x.affine(&self.layers[0].weight, &self.layers[0].bias);
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                h = h.affine(&layer.weight, &layer.bias);
            }
            if k != last {
                h = h.leaky_relu(self.slope);
            }
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("network prediction".into()));
        }
        Ok(h)
    }

    /// Collects parameter gradients in [`Mlp::params`] order.
    pub fn gradients(&self, bound: &BoundMlp, grads: &Gradients) -> Vec<Tensor> {
        bound
            .vars
            .iter()
            .flat_map(|&(w, b)| [grads.wrt(w), grads.wrt(b)])
            .collect()
    }

    pub fn checksum(&self) -> u64 {
        self.params()
            .fold(self.slope.to_bits(), |h, p| h.rotate_left(7) ^ p.checksum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(w: &[&[f64]], b: &[f64]) -> Layer {
        Layer::new(Tensor::from_rows(w).unwrap(), Tensor::vector(b.to_vec())).unwrap()
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::new(vec![layer(&[&[2.0]], &[1.0])], 0.3).unwrap();
        let y = net.predict(&Tensor::from_rows(&[[3.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn leaky_rectifier_values() {
        // identity hidden layer exposes the activation
        let net = Mlp::new(
            vec![layer(&[&[1.0]], &[0.0]), layer(&[&[1.0]], &[0.0])],
            DEFAULT_LEAKY_SLOPE,
        )
        .unwrap();
        let y = net
            .predict(&Tensor::from_rows(&[[-1.0], [2.0]]).unwrap())
            .unwrap();
        assert!((y.data()[0] + 0.3).abs() < 1e-15);
        assert_eq!(y.data()[1], 2.0);
    }

    #[test]
    fn two_layers_match_hand_arithmetic() {
        let w1 = [[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]];
        let b1 = [0.1, -0.2, 0.3];
        let w2 = [[1.0, -2.0, 0.5]];
        let b2 = [0.05];
        let net = Mlp::new(
            vec![layer(&[&w1[0], &w1[1], &w1[2]], &b1), layer(&[&w2[0]], &b2)],
            0.3,
        )
        .unwrap();
        let x = [[1.0, 2.0], [-3.0, 0.5]];
        let y = net.predict(&Tensor::from_rows(&x).unwrap()).unwrap();
        for (r, xr) in x.iter().enumerate() {
            let mut out = b2[0];
            for j in 0..3 {
                let z = w1[j][0] * xr[0] + w1[j][1] * xr[1] + b1[j];
                let h = if z > 0.0 { z } else { 0.3 * z };
                out += w2[0][j] * h;
            }
            assert!((y.data()[r] - out).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_and_predict_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&[3, 8, 5, 2], 0.3, &mut rng).unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(|i| i as f64 * 0.37 - 2.0).collect()).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let out = net.forward(&mut tape, &bound, xv).unwrap();
        assert_eq!(tape.value(out), &net.predict(&x).unwrap());
        assert_eq!(net.predict(&x).unwrap(), net.predict(&x).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::init(&[3, 4, 1], 0.3, &mut rng).unwrap();
        let bad = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(net.predict(&bad), Err(Error::Config(_))));
        let chain = Mlp::new(
            vec![layer(&[&[1.0, 1.0]], &[0.0]), layer(&[&[1.0, 1.0]], &[0.0])],
            0.3,
        );
        assert!(matches!(chain, Err(Error::Config(_))));
    }

    #[test]
    fn init_bounds_follow_fan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::init(&[10, 20], 0.3, &mut rng).unwrap();
        let s = (6.0f64 / 30.0).sqrt();
        assert!(net.layers()[0].weight.data().iter().all(|w| w.abs() <= s));
        assert!(net.layers()[0].bias.data().iter().all(|&b| b == 0.0));
        assert_eq!(net.sizes(), vec![10, 20]);
        assert_eq!(net.num_params(), 220);
    }
}
