use crate::tasks::{DataRegion, Task};

/// One-dimensional task whose data sits to the left of the true peak.
///
/// The oracle is `exp(-x²/2)` with its maximum 1 at the origin. Data is drawn
/// from `U[-3, 0]`, so after stripping the top fraction every dataset label
/// lies on the rising flank. A surrogate fitted to that flank keeps rising
/// past the origin while the true objective decays, which makes any learned
/// peak at `x > 0` an erroneous one.
#[derive(Clone, Debug)]
pub struct SpuriousPeak1d {
    region: DataRegion,
}

impl SpuriousPeak1d {
    pub fn new() -> Self {
        Self {
            region: DataRegion::Uniform {
                low: vec![-3.0],
                high: vec![0.0],
            },
        }
    }
}

impl Default for SpuriousPeak1d {
    fn default() -> Self {
        Self::new()
    }
}

impl Task for SpuriousPeak1d {
    fn name(&self) -> &str {
        "spurious-peak-1d"
    }

    fn description(&self) -> &str {
        "exp(-x^2/2) sampled on [-3, 0]; the surrogate extrapolates upward past the peak"
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn oracle(&self, x: &[f64]) -> f64 {
        (-0.5 * x[0] * x[0]).exp()
    }

    fn known_max(&self) -> f64 {
        1.0
    }

    fn argmax(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn data_region(&self) -> &DataRegion {
        &self.region
    }
}

/// `f(x) = -‖x - c‖²` with data drawn from a standard Gaussian around the origin.
#[derive(Clone, Debug)]
pub struct NegQuadratic {
    name: String,
    center: Vec<f64>,
    region: DataRegion,
}

impl NegQuadratic {
    /// Task in `dim` dimensions with the optimum at `offset · 1`.
    pub fn new(dim: usize, offset: f64) -> Self {
        Self {
            name: format!("neg-quadratic-{dim}d"),
            center: vec![offset; dim],
            region: DataRegion::Gaussian {
                mean: vec![0.0; dim],
                std: vec![1.0; dim],
            },
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Task for NegQuadratic {
    fn name(&self) -> &str {
        &self.name
    }

    fn description(&self) -> &str {
        "negative squared distance to an off-center optimum"
    }

    fn input_dim(&self) -> usize {
        self.center.len()
    }

    fn oracle(&self, x: &[f64]) -> f64 {
        -x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
    }

    fn known_max(&self) -> f64 {
        0.0
    }

    fn argmax(&self) -> Vec<f64> {
        self.center.clone()
    }

    fn data_region(&self) -> &DataRegion {
        &self.region
    }
}

#[derive(Clone, Debug)]
struct Bump {
    center: [f64; 2],
    height: f64,
    width: f64,
}

impl Bump {
    fn value(&self, x: &[f64]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        self.height * (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }
}

/// Sum of three Gaussian bumps over a standard Gaussian data region; the
/// tallest sits in the tail of the data distribution.
#[derive(Clone, Debug)]
pub struct Multimodal2d {
    bumps: Vec<Bump>,
    region: DataRegion,
    argmax: Vec<f64>,
    known_max: f64,
}

impl Multimodal2d {
    pub fn new() -> Self {
        let bumps = vec![
            Bump {
                center: [1.6, 1.2],
                height: 1.0,
                width: 0.5,
            },
            Bump {
                center: [-1.2, 0.4],
                height: 0.7,
                width: 0.6,
            },
            Bump {
                center: [0.2, -1.4],
                height: 0.55,
                width: 0.55,
            },
        ];
        let argmax = refine_peak(&bumps, bumps[0].center);
        let known_max = bumps.iter().map(|b| b.value(&argmax)).sum();
        Self {
            bumps,
            region: DataRegion::Gaussian {
                mean: vec![0.0, 0.0],
                std: vec![1.0, 1.0],
            },
            argmax,
            known_max,
        }
    }
}

impl Default for Multimodal2d {
    fn default() -> Self {
        Self::new()
    }
}

/// Fixed-point (mean-shift) iteration for a stationary point of a sum of
/// isotropic Gaussians: `x = Σ a_k c_k / Σ a_k` with `a_k = b_k(x) / w_k²`.
fn refine_peak(bumps: &[Bump], start: [f64; 2]) -> Vec<f64> {
    let mut x = start;
    for _ in 0..10_000 {
        let (mut num, mut den) = ([0.0; 2], 0.0);
        for b in bumps {
            let a = b.value(&x) / (b.width * b.width);
            num[0] += a * b.center[0];
            num[1] += a * b.center[1];
            den += a;
        }
        let next = [num[0] / den, num[1] / den];
        let done = next == x;
        x = next;
        if done {
            break;
        }
    }
    x.to_vec()
}

impl Task for Multimodal2d {
    fn name(&self) -> &str {
        "multimodal-2d"
    }

    fn description(&self) -> &str {
        "three Gaussian bumps; the global one lies in the tail of the data"
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn oracle(&self, x: &[f64]) -> f64 {
        self.bumps.iter().map(|b| b.value(x)).sum()
    }

    fn known_max(&self) -> f64 {
        self.known_max
    }

    fn argmax(&self) -> Vec<f64> {
        self.argmax.clone()
    }

    fn data_region(&self) -> &DataRegion {
        &self.region
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_quadratic_peaks_at_center() {
        let t = NegQuadratic::new(8, 0.75);
        assert_eq!(t.oracle(t.center()), 0.0);
        assert_eq!(t.oracle(&t.argmax()), t.known_max());
        assert!(t.oracle(&[0.0; 8]) < 0.0);
    }

    #[test]
    fn spurious_peak_is_deterministic_and_bounded() {
        let t = SpuriousPeak1d::new();
        let a = t.oracle(&[-0.7]);
        assert_eq!(a.to_bits(), t.oracle(&[-0.7]).to_bits());
        assert_eq!(t.oracle(&t.argmax()), 1.0);
        for i in -100..=100 {
            assert!(t.oracle(&[i as f64 * 0.1]) <= t.known_max());
        }
        // decays in the unexplored direction
        assert!(t.oracle(&[3.0]) < 0.02);
    }

    #[test]
    fn multimodal_known_max_dominates_a_dense_grid() {
        let t = Multimodal2d::new();
        assert!(t.known_max() >= 1.0);
        assert!((t.oracle(&t.argmax()) - t.known_max()).abs() < 1e-15);
        for i in -80..=80 {
            for j in -80..=80 {
                let x = [i as f64 * 0.05, j as f64 * 0.05];
                assert!(t.oracle(&x) <= t.known_max() + 1e-15);
            }
        }
    }
}
