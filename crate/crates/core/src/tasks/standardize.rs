use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-column input statistics and label statistics (population std, floored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean_x: Vec<f64>,
    pub std_x: Vec<f64>,
    pub mean_y: f64,
    pub std_y: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, bool) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < STD_FLOOR {
        (mean, STD_FLOOR, true)
    } else {
        (mean, std, false)
    }
}

impl StandardizationStats {
    /// Fits statistics and returns a warning for every floored column.
    pub fn fit(inputs: &Tensor, labels: &[f64]) -> (Self, Vec<String>) {
        let mut warnings = Vec::new();
        let d = inputs.cols();
        let mut mean_x = Vec::with_capacity(d);
        let mut std_x = Vec::with_capacity(d);
        for c in 0..d {
            let col = (0..inputs.rows()).map(|r| inputs.get(r, c));
            let (m, s, floored) = mean_std(col);
            if floored {
                warnings.push(format!(
                    "input column x{c} has zero variance; std floored to {STD_FLOOR:e}"
                ));
            }
            mean_x.push(m);
            std_x.push(s);
        }
        let (mean_y, std_y, floored) = mean_std(labels.iter().copied());
        if floored {
            warnings.push(format!(
                "labels have zero variance; std floored to {STD_FLOOR:e}"
            ));
        }
        (
            Self {
                mean_x,
                std_x,
                mean_y,
                std_y,
            },
            warnings,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean_x.len()
    }

    pub fn standardize_inputs(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let d = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % d;
            *v = (*v - self.mean_x[c]) / self.std_x[c];
        }
        out
    }

    pub fn destandardize_inputs(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let d = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let c = i % d;
            *v = *v * self.std_x[c] + self.mean_x[c];
        }
        out
    }

    pub fn standardize_labels(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean_y) / self.std_y).collect()
    }

    pub fn destandardize_labels(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.std_y + self.mean_y).collect()
    }

    /// Largest absolute difference between two sets of statistics.
    pub fn max_abs_diff(&self, other: &StandardizationStats) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        let cols = self
            .mean_x
            .iter()
            .zip(&other.mean_x)
            .chain(self.std_x.iter().zip(&other.std_x))
            .map(|(a, b)| (a - b).abs());
        cols.chain([
            (self.mean_y - other.mean_y).abs(),
            (self.std_y - other.std_y).abs(),
        ])
        .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_labels() {
        let x = Tensor::from_rows(&[[0.0], [1.0]]).unwrap();
        let (s, w) = StandardizationStats::fit(&x, &[1.0, 3.0]);
        assert!(w.is_empty());
        assert_eq!(s.mean_y, 2.0);
        assert_eq!(s.std_y, 1.0);
        assert_eq!(s.standardize_labels(&[1.0, 3.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_column_is_floored() {
        let x = Tensor::from_rows(&[[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]]).unwrap();
        let (s, w) = StandardizationStats::fit(&x, &[0.0, 1.0, 2.0]);
        assert_eq!(w.len(), 1);
        assert_eq!(s.std_x[0], STD_FLOOR);
        let z = s.standardize_inputs(&x);
        assert!(z.is_finite());
        assert!((0..3).all(|r| z.get(r, 0) == 0.0));
    }

    proptest! {
        #[test]
        fn round_trip_and_order(values in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let x = Tensor::matrix(values.len(), 1, values.clone()).unwrap();
            let (s, _) = StandardizationStats::fit(&x, &values);
            let back = s.destandardize_labels(&s.standardize_labels(&values));
            for (a, b) in values.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            let bx = s.destandardize_inputs(&s.standardize_inputs(&x));
            for (a, b) in x.data().iter().zip(bx.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            let z = s.standardize_labels(&values);
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] < values[j] {
                        prop_assert!(z[i] <= z[j]);
                    }
                }
            }
        }
    }
}
