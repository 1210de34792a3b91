//! Small statistical helpers shared by the generator and the metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{sigmoid, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("cannot fit {0}: labels take a single value")]
    ConstantLabels(&'static str),
    #[error("{what}: {rows} rows of features but {labels} labels")]
    Length {
        what: &'static str,
        rows: usize,
        labels: usize,
    },
    #[error("logistic fit for {0} did not converge")]
    NotConverged(&'static str),
}

/// Binary logistic regression `P(y = 1 | x) = sigmoid(x . w + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

const RIDGE: f64 = 1e-6;

impl LogisticModel {
    /// Maximum-likelihood fit by iteratively reweighted least squares with a
    /// tiny ridge on the weights (not the intercept) so separable data stays finite.
    pub fn fit(x: &Tensor, y: &[u8], what: &'static str) -> Result<Self, StatsError> {
        let (n, d) = x.dims();
        if n != y.len() {
            return Err(StatsError::Length {
                what,
                rows: n,
                labels: y.len(),
            });
        }
        if y.iter().all(|&v| v == y[0]) {
            return Err(StatsError::ConstantLabels(what));
        }
        let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x.get(i, j) } else { 1.0 });
        let target = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
        let mut beta = DVector::<f64>::zeros(d + 1);
        let mut penalty = DMatrix::<f64>::identity(d + 1, d + 1) * RIDGE;
        penalty[(d, d)] = 0.0;
        for _ in 0..100 {
            let eta = &design * &beta;
            let p = eta.map(sigmoid);
            let w = p.map(|v| (v * (1.0 - v)).max(1e-10));
            let grad = design.transpose() * (&target - &p) - &penalty * &beta;
            let weighted = DMatrix::from_fn(n, d + 1, |i, j| design[(i, j)] * w[i]);
            let hessian = design.transpose() * weighted + &penalty;
            let Some(step) = hessian.lu().solve(&grad) else {
                return Err(StatsError::NotConverged(what));
            };
            beta += &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NotConverged(what));
        }
        Ok(Self {
            weights: beta.rows(0, d).iter().copied().collect(),
            bias: beta[d],
        })
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        self.bias + row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Tensor) -> Vec<f64> {
        (0..x.rows()).map(|i| sigmoid(self.logit(x.row(i)))).collect()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            let p = sigmoid(1.5 * a - 0.5 * b + 0.3);
            y.push(u8::from(rng.gen::<f64>() < p));
            rows.push(vec![a, b]);
        }
        let m = LogisticModel::fit(&Tensor::from_rows(&rows).unwrap(), &y, "test").unwrap();
        assert!((m.weights[0] - 1.5).abs() < 0.1, "{m:?}");
        assert!((m.weights[1] + 0.5).abs() < 0.1, "{m:?}");
        assert!((m.bias - 0.3).abs() < 0.1, "{m:?}");
    }

    #[test]
    fn saturated_binary_feature_matches_frequencies() {
        // One binary regressor: the fit reproduces the two cell frequencies.
        let x: Vec<Vec<f64>> = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0].iter().map(|&v| vec![v]).collect();
        let y = [1, 0, 0, 0, 1, 1, 1, 0];
        let m = LogisticModel::fit(&Tensor::from_rows(&x).unwrap(), &y, "test").unwrap();
        let p = m.predict_proba(&Tensor::from_rows(&x).unwrap());
        assert!((p[0] - 0.25).abs() < 1e-6);
        assert!((p[4] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn constant_labels_rejected() {
        let x = Tensor::zeros(3, 1);
        assert_eq!(
            LogisticModel::fit(&x, &[1, 1, 1], "s").unwrap_err(),
            StatsError::ConstantLabels("s")
        );
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
    }
}
