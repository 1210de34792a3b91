use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{Gradients, Result, Tape, Tensor, TensorError, Var};

/// Named parameters, ordered by path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Parameter names starting with `prefix`.
    pub fn names_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.params
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(Tensor::all_finite)
    }

    /// Writes `d loss / d param` into each parameter's gradient buffer.
    /// Parameters bound on the tape but unreached by the loss get zeros;
    /// parameters not bound at all have their buffer cleared.
    pub fn absorb_grads(&mut self, tape: &Tape, grads: &Gradients) -> Result<()> {
        for t in self.params.values_mut() {
            t.clear_grad();
        }
        for (name, var) in tape.bound_params() {
            let g = grads.get_or_zeros(tape, var);
            self.get_mut(name)?.set_grad(g.into_data())?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: ParamStore) {
        self.params.extend(other.params);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn eval(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => super::sigmoid(v),
            Activation::Identity => v,
        }
    }
}

/// Affine map `x W + b` with parameters `<prefix>.weight` and `<prefix>.bias`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub prefix: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (input + output).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let w: Vec<f64> = (0..input * output).map(|_| dist.sample(rng)).collect();
        store.insert(format!("{prefix}.weight"), Tensor::matrix(input, output, w).expect("weight shape"));
        store.insert(format!("{prefix}.bias"), Tensor::zeros(1, output));
        Self {
            prefix: prefix.to_string(),
            input,
            output,
        }
    }

    /// Weights drawn from N(0, 1/fan_in), bias likewise.
    pub fn init_gaussian<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / input.max(1) as f64).sqrt()).expect("finite std");
        let w: Vec<f64> = (0..input * output).map(|_| normal.sample(rng)).collect();
        let b: Vec<f64> = (0..output).map(|_| normal.sample(rng)).collect();
        store.insert(format!("{prefix}.weight"), Tensor::matrix(input, output, w).expect("weight shape"));
        store.insert(format!("{prefix}.bias"), Tensor::matrix(1, output, b).expect("bias shape"));
        Self {
            prefix: prefix.to_string(),
            input,
            output,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, &self.weight_name())?;
        let b = tape.param(store, &self.bias_name())?;
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }

    /// Forward pass without a tape.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let w = store.get(&self.weight_name())?;
        let b = store.get(&self.bias_name())?;
        let mut out = x.matmul(w)?;
        let cols = out.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % cols];
        }
        Ok(out)
    }
}

/// Stack of [`Linear`] layers with a shared hidden activation and a linear head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn init<R: Rng>(store: &mut ParamStore, prefix: &str, dims: &[usize], act: Activation, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(store, &format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden_activation: act,
        }
    }

    /// Rebuilds the layer descriptors for parameters that already live in a store.
    pub fn describe(prefix: &str, dims: &[usize], act: Activation) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear {
                prefix: format!("{prefix}.{i}"),
                input: w[0],
                output: w[1],
            })
            .collect();
        Self {
            layers,
            hidden_activation: act,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i < last {
                h = self.hidden_activation.apply(tape, h);
            }
        }
        Ok(h)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight_name(), l.bias_name()])
            .collect()
    }
}
