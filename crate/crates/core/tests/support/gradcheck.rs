//! Central finite differences against an independent forward pass.
//!
//! The reference evaluates networks with plain loops over the layer weights,
//! never touching the tape or `Mlp::predict`, and records the sign of every
//! hidden pre-activation. A finite-difference coordinate is skipped when the
//! `±h` evaluations see a different sign pattern than the unperturbed point,
//! because the difference quotient then straddles a kink of the rectifier.

#![allow(dead_code)]

use iom_core::numerics::{Mlp, Tape, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const MAX_REL_ERR: f64 = 1e-5;
/// Denominator floor: below this magnitude gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct RefLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug)]
pub struct RefNet {
    pub layers: Vec<RefLayer>,
    pub slope: f64,
}

impl RefNet {
    pub fn from_mlp(m: &Mlp) -> Self {
        let layers = m
            .layers()
            .iter()
            .map(|l| RefLayer {
                w: l.weight.data().to_vec(),
                b: l.bias.data().to_vec(),
                n_in: l.in_dim(),
                n_out: l.out_dim(),
            })
            .collect();
        Self {
            layers,
            slope: m.slope(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access in `Mlp::params` order: weight then bias per layer.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.w.len() {
                return &mut l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return &mut l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Output of one row and the signs of its hidden pre-activations.
    pub fn forward_row(&self, x: &[f64], pattern: &mut Vec<bool>) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.n_out];
            for o in 0..l.n_out {
                let mut s = l.b[o];
                for i in 0..l.n_in {
                    s += l.w[o * l.n_in + i] * h[i];
                }
                out[o] = s;
            }
            if k != last {
                for v in &mut out {
                    pattern.push(*v > 0.0);
                    if *v <= 0.0 {
                        *v *= self.slope;
                    }
                }
            }
            h = out;
        }
        h
    }
}

/// Largest relative error seen and how many coordinates were compared.
#[derive(Clone, Copy, Debug, Default)]
pub struct CheckStats {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckStats {
    pub fn merge(&mut self, other: CheckStats) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares `analytic` with the central difference of `eval` along one
/// coordinate. `eval(delta)` returns the loss and sign pattern with the
/// coordinate shifted by `delta`.
pub fn check_coordinate(
    stats: &mut CheckStats,
    analytic: f64,
    mut eval: impl FnMut(f64) -> (f64, Vec<bool>),
) {
    let (_, p0) = eval(0.0);
    let (fp, pp) = eval(FD_STEP);
    let (fm, pm) = eval(-FD_STEP);
    if pp != p0 || pm != p0 {
        stats.skipped += 1;
        return;
    }
    let fd = (fp - fm) / (2.0 * FD_STEP);
    stats.max_rel_err = stats.max_rel_err.max(rel_err(analytic, fd));
    stats.checked += 1;
}

/// A random network with 1 to 4 layers, every width in `1..=64`, one output.
pub fn random_net(rng: &mut ChaCha8Rng) -> Mlp {
    let depth = rng.gen_range(1..=4);
    let mut sizes: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=64)).collect();
    sizes.push(1);
    let mut net = Mlp::init(&sizes, 0.3, rng).unwrap();
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    net
}

/// Checks `sum_r c_r · net(x_r)` for one random network and input batch:
/// every input coordinate plus up to `param_samples` parameter coordinates.
pub fn check_random_net(seed: u64, param_samples: usize) -> CheckStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_net(&mut rng);
    let rows = rng.gen_range(1..=3);
    let d = net.input_dim();
    let x: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut tape = Tape::new();
    let xv = tape.leaf(Tensor::matrix(rows, d, x.clone()).unwrap());
    let bound = net.bind(&mut tape, true);
    let out = net.forward(&mut tape, &bound, xv).unwrap();
    let cv = tape.constant(Tensor::matrix(rows, 1, c.clone()).unwrap());
    let weighted = tape.mul(out, cv).unwrap();
    let loss = tape.sum(weighted).unwrap();
    let grads = tape.backward(loss).unwrap();
    let gx = grads.wrt(xv);
    let gp: Vec<f64> = net
        .gradients(&bound, &grads)
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect();

    let reference = RefNet::from_mlp(&net);
    let eval = |r: &RefNet, x: &[f64]| {
        let mut pattern = Vec::new();
        let mut total = 0.0;
        for row in 0..rows {
            total += c[row] * r.forward_row(&x[row * d..(row + 1) * d], &mut pattern)[0];
        }
        (total, pattern)
    };

    let mut stats = CheckStats::default();
    for i in 0..rows * d {
        check_coordinate(&mut stats, gx.data()[i], |delta| {
            let mut xs = x.clone();
            xs[i] += delta;
            eval(&reference, &xs)
        });
    }
    let n = reference.num_params();
    let picks: Vec<usize> = if n <= param_samples {
        (0..n).collect()
    } else {
        (0..param_samples).map(|_| rng.gen_range(0..n)).collect()
    };
    for j in picks {
        check_coordinate(&mut stats, gp[j], |delta| {
            let mut r = reference.clone();
            *r.param_mut(j) += delta;
            eval(&r, &x)
        });
    }
    stats
}
