//! Message-passing variational autoencoder for interventional features.
//!
//! A message-passing network over the sensitive attribute produces a
//! neighborhood aggregate `a`. Phase one fits it jointly with an MLP that
//! predicts `x` from `(a, z)`. Phase two freezes both and fits a conditional
//! VAE with encoder `(x, a, z) -> v`; the decoder adds a residual computed
//! from `(v, a, z)` to the frozen MLP prediction.
//! Interventions abduct `v` from the observed data, recompute `a` with every
//! node's attribute forced, and decode.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::table::NodeTable;
use crate::tensor::{
    load_checkpoint, save_checkpoint, Activation, Adam, AdamConfig, CheckpointError, Linear, Mlp, ParamStore,
    Propagation, Tape, Tensor, TensorError, Var,
};

#[derive(Debug, Error)]
pub enum MpvaError {
    #[error("{phase} training diverged at epoch {epoch}")]
    Diverged { phase: &'static str, epoch: usize },
    #[error("model is not trained far enough: {0}")]
    Untrained(&'static str),
    #[error("{what}: expected {expected} columns, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("graph has {graph} nodes but the table has {table}")]
    NodeCount { graph: usize, table: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MpvaError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpvaConfig {
    /// Message-passing layers.
    pub layers: usize,
    pub a_dim: usize,
    pub v_dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub kl_beta: f64,
    pub seed: u64,
    /// Abduct by sampling the posterior instead of taking its mean.
    pub sample_abduction: bool,
}

impl Default for MpvaConfig {
    fn default() -> Self {
        Self {
            layers: 1,
            a_dim: 8,
            v_dim: 8,
            hidden: 32,
            lr: 0.01,
            phase1_epochs: 500,
            phase2_epochs: 800,
            kl_beta: 0.05,
            seed: 0,
            sample_abduction: false,
        }
    }
}

impl MpvaConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("layers", self.layers),
            ("a_dim", self.a_dim),
            ("v_dim", self.v_dim),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            out.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.kl_beta.is_finite() && self.kl_beta >= 0.0) {
            out.push(format!("kl_beta must be non-negative, got {}", self.kl_beta));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Untrained,
    MessagePassing,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    config: MpvaConfig,
    x_dim: usize,
    z_dim: usize,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpvaModel {
    pub config: MpvaConfig,
    pub x_dim: usize,
    pub z_dim: usize,
    pub params: ParamStore,
    pub phase: Phase,
}

/// Interventional features for every node under one forced attribute value.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub s_value: u8,
    pub x_tilde: Tensor,
    pub a_tilde: Tensor,
    pub v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalSample {
    pub node: usize,
    pub s_value: u8,
    pub x_tilde: Vec<f64>,
    pub a_tilde: Vec<f64>,
    pub v: Vec<f64>,
}

impl Intervention {
    pub fn sample(&self, node: usize) -> InterventionalSample {
        InterventionalSample {
            node,
            s_value: self.s_value,
            x_tilde: self.x_tilde.row(node).to_vec(),
            a_tilde: self.a_tilde.row(node).to_vec(),
            v: self.v.row(node).to_vec(),
        }
    }
}

const ACT: Activation = Activation::Tanh;

impl MpvaModel {
    pub fn new(config: MpvaConfig, x_dim: usize, z_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let mut input = 1;
        for l in 0..config.layers {
            Linear::init(&mut params, &format!("mpnn.{l}"), input, config.a_dim, &mut rng);
            input = config.a_dim;
        }
        let (a, v, h) = (config.a_dim, config.v_dim, config.hidden);
        Mlp::init(&mut params, "mlp", &[a + z_dim, h, x_dim], ACT, &mut rng);
        Mlp::init(&mut params, "enc", &[x_dim + a + z_dim, h, 2 * v], ACT, &mut rng);
        Mlp::init(&mut params, "dec", &[v + a + z_dim, h, x_dim], ACT, &mut rng);
        Self {
            config,
            x_dim,
            z_dim,
            params,
            phase: Phase::Untrained,
        }
    }

    fn mpnn_layers(&self) -> Vec<Linear> {
        let mut input = 1;
        (0..self.config.layers)
            .map(|l| {
                let layer = Linear {
                    prefix: format!("mpnn.{l}"),
                    input,
                    output: self.config.a_dim,
                };
                input = self.config.a_dim;
                layer
            })
            .collect()
    }

    fn mlp(&self) -> Mlp {
        Mlp::describe("mlp", &[self.config.a_dim + self.z_dim, self.config.hidden, self.x_dim], ACT)
    }

    fn encoder(&self) -> Mlp {
        let c = &self.config;
        Mlp::describe("enc", &[self.x_dim + c.a_dim + self.z_dim, c.hidden, 2 * c.v_dim], ACT)
    }

    fn decoder(&self) -> Mlp {
        let c = &self.config;
        Mlp::describe("dec", &[c.v_dim + c.a_dim + self.z_dim, c.hidden, self.x_dim], ACT)
    }

    fn check_inputs(&self, g: &Graph, table: &NodeTable) -> Result<()> {
        if g.n() != table.n() {
            return Err(MpvaError::NodeCount {
                graph: g.n(),
                table: table.n(),
            });
        }
        for (what, expected, got) in [("x", self.x_dim, table.x.cols()), ("z", self.z_dim, table.z.cols())] {
            if expected != got {
                return Err(MpvaError::Dimension { what, expected, got });
            }
        }
        Ok(())
    }

    /// Records the aggregate network: each layer sums the node's state with
    /// its neighbors' states, then applies an affine map and `tanh`.
    pub fn mpnn_tape(&self, tape: &mut Tape, prop: &Arc<Propagation>, s: &[u8]) -> Result<Var> {
        let mut h = tape.constant(Tensor::column(s.iter().map(|&v| f64::from(v)).collect()));
        for layer in self.mpnn_layers() {
            let agg = tape.propagate(h, prop)?;
            let lin = layer.forward(tape, &self.params, agg)?;
            h = tape.tanh(lin);
        }
        Ok(h)
    }

    /// Aggregate representation for every node, one row per node.
    pub fn mpnn_forward(&self, g: &Graph, s: &[u8]) -> Result<Tensor> {
        let prop = Arc::new(Propagation::self_loop_sum(g));
        let mut tape = Tape::new();
        let a = self.mpnn_tape(&mut tape, &prop, s)?;
        Ok(tape.value(a).clone())
    }

    fn with_z(&self, tape: &mut Tape, parts: &[Var], z: &Tensor) -> Result<Var> {
        let mut all = parts.to_vec();
        if self.z_dim > 0 {
            all.push(tape.constant(z.clone()));
        }
        Ok(tape.concat(&all)?)
    }

    /// Fits the aggregate network and the feature predictor by mean squared
    /// error. Returns the loss after every epoch.
    pub fn train_phase1(&mut self, g: &Graph, table: &NodeTable) -> Result<Vec<f64>> {
        self.check_inputs(g, table)?;
        let prop = Arc::new(Propagation::self_loop_sum(g));
        let mut trainable: Vec<String> = self.params.names_with_prefix("mpnn.");
        trainable.extend(self.mlp().param_names());
        let mut opt = Adam::new(AdamConfig::with_lr(self.config.lr), trainable);
        let mlp = self.mlp();
        let mut trace = Vec::with_capacity(self.config.phase1_epochs);
        for epoch in 0..self.config.phase1_epochs {
            let mut tape = Tape::new();
            let a = self.mpnn_tape(&mut tape, &prop, &table.s)?;
            let input = self.with_z(&mut tape, &[a], &table.z)?;
            let pred = mlp.forward(&mut tape, &self.params, input)?;
            let target = tape.constant(table.x.clone());
            let loss = tape.mse(pred, target)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(MpvaError::Diverged { phase: "phase-1", epoch });
            }
            trace.push(value);
            let grads = tape.backward(loss)?;
            self.params.absorb_grads(&tape, &grads)?;
            opt.step(&mut self.params)?;
        }
        self.phase = Phase::MessagePassing;
        Ok(trace)
    }

    /// Fits the conditional VAE with the aggregate network frozen. The loss is
    /// the per-node squared reconstruction error plus `kl_beta` times the
    /// per-node KL divergence to the standard normal prior.
    pub fn train_phase2(&mut self, g: &Graph, table: &NodeTable) -> Result<Vec<f64>> {
        self.check_inputs(g, table)?;
        if self.phase == Phase::Untrained {
            return Err(MpvaError::Untrained("phase two needs a trained aggregate network"));
        }
        let n = table.n();
        let a_hat = self.mpnn_forward(g, &table.s)?;
        let enc = self.encoder();
        let dec = self.decoder();
        let mut trainable = enc.param_names();
        trainable.extend(dec.param_names());
        let mut opt = Adam::new(AdamConfig::with_lr(self.config.lr), trainable);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        let v_dim = self.config.v_dim;
        let offset = self.predict_from(&a_hat, &table.z)?;
        let mut trace = Vec::with_capacity(self.config.phase2_epochs);
        for epoch in 0..self.config.phase2_epochs {
            let noise_data = (0..n * v_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise = Tensor::matrix(n, v_dim, noise_data)?;
            let mut tape = Tape::new();
            let x = tape.constant(table.x.clone());
            let a = tape.constant(a_hat.clone());
            let enc_in = self.with_z(&mut tape, &[x, a], &table.z)?;
            let stats = enc.forward(&mut tape, &self.params, enc_in)?;
            let mu = tape.slice(stats, 0, v_dim)?;
            let logvar = tape.slice(stats, v_dim, v_dim)?;
            let v = tape.gaussian_sample(mu, logvar, &noise)?;
            let dec_in = self.with_z(&mut tape, &[v, a], &table.z)?;
            let residual = dec.forward(&mut tape, &self.params, dec_in)?;
            let base = tape.constant(offset.clone());
            let recon = tape.add(base, residual)?;
            let mse = tape.mse(recon, x)?;
            let rec = tape.scale(mse, self.x_dim as f64);
            let kl_sum = tape.kl_std_normal(mu, logvar)?;
            let kl = tape.scale(kl_sum, self.config.kl_beta / n as f64);
            let loss = tape.add(rec, kl)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(MpvaError::Diverged { phase: "phase-2", epoch });
            }
            trace.push(value);
            let grads = tape.backward(loss)?;
            self.params.absorb_grads(&tape, &grads)?;
            opt.step(&mut self.params)?;
        }
        self.phase = Phase::Complete;
        Ok(trace)
    }

    /// Both phases in order.
    pub fn fit(&mut self, g: &Graph, table: &NodeTable) -> Result<(Vec<f64>, Vec<f64>)> {
        let t1 = self.train_phase1(g, table)?;
        let t2 = self.train_phase2(g, table)?;
        Ok((t1, t2))
    }

    /// Phase-one prediction of `x` from `(a, z)`.
    pub fn predict(&self, g: &Graph, table: &NodeTable) -> Result<Tensor> {
        self.check_inputs(g, table)?;
        let prop = Arc::new(Propagation::self_loop_sum(g));
        let mut tape = Tape::new();
        let a = self.mpnn_tape(&mut tape, &prop, &table.s)?;
        let input = self.with_z(&mut tape, &[a], &table.z)?;
        let pred = self.mlp().forward(&mut tape, &self.params, input)?;
        Ok(tape.value(pred).clone())
    }

    /// Posterior mean and log-variance of the latent.
    pub fn encode(&self, x: &Tensor, a: &Tensor, z: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let parts = [tape.constant(x.clone()), tape.constant(a.clone())];
        let input = self.with_z(&mut tape, &parts, z)?;
        let stats = self.encoder().forward(&mut tape, &self.params, input)?;
        let mu = tape.slice(stats, 0, self.config.v_dim)?;
        let logvar = tape.slice(stats, self.config.v_dim, self.config.v_dim)?;
        Ok((tape.value(mu).clone(), tape.value(logvar).clone()))
    }

    /// Phase-one prediction from a given aggregate.
    pub fn predict_from(&self, a: &Tensor, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let parts = [tape.constant(a.clone())];
        let input = self.with_z(&mut tape, &parts, z)?;
        let out = self.mlp().forward(&mut tape, &self.params, input)?;
        Ok(tape.value(out).clone())
    }

    /// Decoder output: the frozen phase-one prediction plus the learned
    /// residual from `(v, a, z)`.
    pub fn decode(&self, v: &Tensor, a: &Tensor, z: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let parts = [tape.constant(v.clone()), tape.constant(a.clone())];
        let input = self.with_z(&mut tape, &parts, z)?;
        let residual = self.decoder().forward(&mut tape, &self.params, input)?;
        let base = tape.constant(self.predict_from(a, z)?);
        let out = tape.add(base, residual)?;
        Ok(tape.value(out).clone())
    }

    fn abduct(&self, x: &Tensor, a: &Tensor, z: &Tensor) -> Result<Tensor> {
        let (mu, logvar) = self.encode(x, a, z)?;
        if !self.config.sample_abduction {
            return Ok(mu);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(2));
        let data = mu
            .data()
            .iter()
            .zip(logvar.data())
            .map(|(&m, &lv)| {
                let e: f64 = StandardNormal.sample(&mut rng);
                m + (0.5 * lv).exp() * e
            })
            .collect();
        Ok(Tensor::new(mu.shape().to_vec(), data)?)
    }

    /// Reconstruction of the observed features through the latent.
    pub fn reconstruct(&self, g: &Graph, table: &NodeTable) -> Result<Tensor> {
        Ok(self.intervene_with(g, table, &table.s, 0)?.x_tilde)
    }

    /// Mean absolute error of the estimated interventional features against the
    /// table's ground truth, averaged over `do(S=1)` and `do(S=0)`.
    /// `None` when the table carries no ground truth.
    pub fn interventional_error(&self, g: &Graph, table: &NodeTable) -> Result<Option<f64>> {
        let Some(truth) = table.interventional.as_ref() else {
            return Ok(None);
        };
        let mae = |a: &Tensor, b: &Tensor| {
            a.data().iter().zip(b.data()).map(|(u, v)| (u - v).abs()).sum::<f64>() / a.numel().max(1) as f64
        };
        let pos = self.intervene(g, table, 1)?;
        let neg = self.intervene(g, table, 0)?;
        Ok(Some((mae(&pos.x_tilde, &truth.x_pos) + mae(&neg.x_tilde, &truth.x_neg)) / 2.0))
    }

    /// Interventional features under `do(S = s_value)` for every node.
    pub fn intervene(&self, g: &Graph, table: &NodeTable, s_value: u8) -> Result<Intervention> {
        let forced = vec![s_value; table.n()];
        self.intervene_with(g, table, &forced, s_value)
    }

    /// Abduction from the observed data, action `S := assignment`, prediction.
    pub fn intervene_with(&self, g: &Graph, table: &NodeTable, assignment: &[u8], s_value: u8) -> Result<Intervention> {
        self.check_inputs(g, table)?;
        if self.phase != Phase::Complete {
            return Err(MpvaError::Untrained("interventions need both training phases"));
        }
        let a_obs = self.mpnn_forward(g, &table.s)?;
        let v = self.abduct(&table.x, &a_obs, &table.z)?;
        let a_tilde = self.mpnn_forward(g, assignment)?;
        let x_tilde = self.decode(&v, &a_tilde, &table.z)?;
        Ok(Intervention {
            s_value,
            x_tilde,
            a_tilde,
            v,
        })
    }

    fn metadata_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Writes parameters to `path` and a metadata document beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, path)?;
        let meta = Metadata {
            config: self.config.clone(),
            x_dim: self.x_dim,
            z_dim: self.z_dim,
            phase: self.phase,
        };
        std::fs::write(Self::metadata_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: Metadata = serde_json::from_slice(&std::fs::read(Self::metadata_path(path))?)?;
        let params = load_checkpoint(path)?;
        let fresh = Self::new(meta.config.clone(), meta.x_dim, meta.z_dim);
        for (name, t) in fresh.params.iter() {
            let got = params.get(name).map_err(|_| CheckpointError::BadEntry {
                name: name.to_string(),
                reason: "missing from checkpoint".into(),
            })?;
            if got.shape() != t.shape() {
                return Err(CheckpointError::BadEntry {
                    name: name.to_string(),
                    reason: format!("shape {:?}, expected {:?}", got.shape(), t.shape()),
                }
                .into());
            }
        }
        Ok(Self {
            config: meta.config,
            x_dim: meta.x_dim,
            z_dim: meta.z_dim,
            params,
            phase: meta.phase,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_table(n: usize) -> NodeTable {
        let s: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let x = Tensor::matrix(n, 2, (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let z = Tensor::matrix(n, 1, (0..n).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        NodeTable::new(s, z, x, vec![0; n]).unwrap()
    }

    fn cycle(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n))).collect();
        Graph::new(n, &edges).unwrap()
    }

    #[test]
    fn constant_attribute_on_cycle_gives_equal_aggregates() {
        let m = MpvaModel::new(MpvaConfig { layers: 2, ..Default::default() }, 2, 1);
        let a = m.mpnn_forward(&cycle(6), &[1; 6]).unwrap();
        for i in 1..6 {
            assert_eq!(a.row(i), a.row(0));
        }
    }

    #[test]
    fn isolated_node_depends_on_own_attribute_only() {
        let m = MpvaModel::new(MpvaConfig::default(), 2, 0);
        let g = Graph::empty(2);
        let a = m.mpnn_forward(&g, &[1, 0]).unwrap();
        let b = m.mpnn_forward(&g, &[1, 1]).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_ne!(a.row(1), b.row(1));
    }

    #[test]
    fn zero_epochs_leave_parameters_unchanged() {
        let cfg = MpvaConfig {
            phase1_epochs: 0,
            ..Default::default()
        };
        let mut m = MpvaModel::new(cfg, 2, 1);
        let before = m.params.clone();
        let trace = m.train_phase1(&cycle(6), &tiny_table(6)).unwrap();
        assert!(trace.is_empty());
        for (name, t) in before.iter() {
            assert_eq!(m.params.get(name).unwrap().data(), t.data(), "{name}");
        }
    }

    #[test]
    fn untrained_model_refuses_to_intervene() {
        let m = MpvaModel::new(MpvaConfig::default(), 2, 1);
        assert!(matches!(
            m.intervene(&cycle(6), &tiny_table(6), 1),
            Err(MpvaError::Untrained(_))
        ));
    }

    #[test]
    fn phase_two_freezes_phase_one_parameters() {
        let cfg = MpvaConfig {
            phase1_epochs: 5,
            phase2_epochs: 5,
            ..Default::default()
        };
        let (g, t) = (cycle(8), tiny_table(8));
        let mut m = MpvaModel::new(cfg, 2, 1);
        m.train_phase1(&g, &t).unwrap();
        let frozen: Vec<(String, Vec<f64>)> = m
            .params
            .iter()
            .filter(|(k, _)| k.starts_with("mpnn.") || k.starts_with("mlp."))
            .map(|(k, v)| (k.to_string(), v.data().to_vec()))
            .collect();
        m.train_phase2(&g, &t).unwrap();
        for (k, v) in frozen {
            assert_eq!(m.params.get(&k).unwrap().data(), v.as_slice(), "{k}");
        }
    }

    #[test]
    fn null_intervention_is_the_reconstruction() {
        let cfg = MpvaConfig {
            phase1_epochs: 3,
            phase2_epochs: 3,
            ..Default::default()
        };
        let (g, t) = (cycle(9), tiny_table(9));
        let mut m = MpvaModel::new(cfg, 2, 1);
        m.fit(&g, &t).unwrap();
        let recon = m.reconstruct(&g, &t).unwrap();
        let same = m.intervene_with(&g, &t, &t.s, 0).unwrap();
        assert_eq!(recon, same.x_tilde);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.nfck");
        let mut m = MpvaModel::new(MpvaConfig::default(), 3, 2);
        m.phase = Phase::Complete;
        m.save(&path).unwrap();
        let back = MpvaModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
