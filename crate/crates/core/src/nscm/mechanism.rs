use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::Graph;
use crate::stats::LogisticModel;
use crate::tensor::{sigmoid, Activation, Propagation, Tensor};

/// Dense affine map stored row-major, `input x output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub input: usize,
    pub output: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(input: usize, output: usize, weight: Vec<f64>, bias: Vec<f64>) -> Self {
        assert_eq!(weight.len(), input * output, "weight length");
        assert_eq!(bias.len(), output, "bias length");
        Self {
            input,
            output,
            weight,
            bias,
        }
    }

    /// Weights and bias drawn from N(0, 1/fan_in).
    pub fn gaussian<R: Rng>(input: usize, output: usize, with_bias: bool, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / input.max(1) as f64).sqrt()).expect("finite std");
        let weight = (0..input * output).map(|_| normal.sample(rng)).collect();
        let bias = if with_bias {
            (0..output).map(|_| normal.sample(rng)).collect()
        } else {
            vec![0.0; output]
        };
        Self::new(input, output, weight, bias)
    }

    pub fn apply(&self, h: &Tensor) -> Tensor {
        let w = Tensor::matrix(self.input, self.output, self.weight.clone()).expect("layer shape");
        let mut out = h.matmul(&w).expect("layer input width");
        let cols = self.output;
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += self.bias[i % cols];
        }
        out
    }
}

/// Fixed message-passing network over the sensitive attribute: each layer sums
/// the node's own state with its neighbors' states, applies an affine map and a
/// nonlinearity; a linear readout maps to feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessagePassingMechanism {
    pub layers: Vec<DenseLayer>,
    pub readout: DenseLayer,
    pub activation: Activation,
    pub scale: f64,
}

impl MessagePassingMechanism {
    /// `hops` message-passing layers of width `width`, Gaussian weights.
    pub fn random<R: Rng>(hops: usize, width: usize, out_dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hops);
        let mut input = 1;
        for _ in 0..hops {
            layers.push(DenseLayer::gaussian(input, width, true, rng));
            input = width;
        }
        let readout = DenseLayer::gaussian(input, out_dim, false, rng);
        Self {
            layers,
            readout,
            activation: Activation::Tanh,
            scale,
        }
    }

    /// A mechanism whose output is identically zero: no interference.
    pub fn zero(out_dim: usize) -> Self {
        Self {
            layers: Vec::new(),
            readout: DenseLayer::new(1, out_dim, vec![0.0; out_dim], vec![0.0; out_dim]),
            activation: Activation::Identity,
            scale: 0.0,
        }
    }

    pub fn hops(&self) -> usize {
        self.layers.len()
    }

    pub fn out_dim(&self) -> usize {
        self.readout.output
    }

    pub fn apply(&self, g: &Graph, s: &[u8]) -> Tensor {
        let prop = Arc::new(Propagation::self_loop_sum(g));
        let mut h = Tensor::column(s.iter().map(|&v| f64::from(v)).collect());
        for layer in &self.layers {
            let agg = prop.apply(&h).expect("state has one row per node");
            h = layer.apply(&agg).map(|v| self.activation.eval(v));
        }
        self.readout.apply(&h).map(|v| self.scale * v)
    }
}

/// The generating model of a semi-synthetic dataset.
///
/// `a = f_mp(S)` is the neighborhood aggregate, `x = a + base + noise` the
/// internal mechanism, and `y = 1[label_fn(x) > 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NscmSpec {
    pub hops: usize,
    pub f_mp: MessagePassingMechanism,
    pub noise_sigma: f64,
    pub f_s: LogisticModel,
    pub label_fn: LogisticModel,
}

impl NscmSpec {
    pub fn f_int(a: &Tensor, base: &Tensor, noise: &Tensor) -> Tensor {
        let data = a
            .data()
            .iter()
            .zip(base.data())
            .zip(noise.data())
            .map(|((&a, &b), &e)| (a + b) + e)
            .collect();
        Tensor::new(a.shape().to_vec(), data).expect("matching shapes")
    }

    /// Hard labels and the underlying probabilities.
    pub fn labels(&self, x: &Tensor) -> (Vec<u8>, Vec<f64>) {
        let probs: Vec<f64> = (0..x.rows()).map(|i| sigmoid(self.label_fn.logit(x.row(i)))).collect();
        (probs.iter().map(|&p| u8::from(p > 0.5)).collect(), probs)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(json))
    }
}
