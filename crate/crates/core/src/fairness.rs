//! Fairness metrics, differentiable regularizers and the regularized
//! node-classifier training loop.
//!
//! Three notions are measured. Risk difference compares positive rates
//! between the two sensitive groups. The IID causal estimate reweights each
//! group by inverse propensity `P(s)/P(s|z)`. Graph counterfactual fairness
//! (gCF) compares positive rates when the classifier is applied to features
//! generated under `do(S = 1)` and `do(S = 0)` for every node at once.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Graph;
use crate::mpva::{MpvaError, MpvaModel};
use crate::stats::{LogisticModel, StatsError};
use crate::table::NodeTable;
use crate::tensor::{
    load_checkpoint, save_checkpoint, sigmoid, Activation, Adam, AdamConfig, CheckpointError, Linear, Mlp,
    ParamStore, Propagation, Tape, Tensor, TensorError, Var,
};

/// Propensities are clipped into this range before weighting.
pub const PROPENSITY_CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("sensitive group s={0} is empty")]
    EmptyGroup(u8),
    #[error("{what}: expected {expected} entries, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("the gcf objective needs a trained MPVA model")]
    MissingModel,
    #[error("propensity model for P(s|z) failed: {0}")]
    Propensity(#[source] StatsError),
    #[error("invalid classifier config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("classifier training diverged at epoch {0}")]
    Diverged(usize),
    #[error("classifier expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Mpva(#[from] MpvaError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("classifier metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FairnessError>;

fn positive_rate(labels: &[u8], idx: &[usize]) -> f64 {
    idx.iter().filter(|&&i| labels[i] == 1).count() as f64 / idx.len() as f64
}

fn split_groups(s: &[u8]) -> Result<[Vec<usize>; 2]> {
    let mut groups = [Vec::new(), Vec::new()];
    for (i, &v) in s.iter().enumerate() {
        groups[usize::from(v == 1)].push(i);
    }
    for (v, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(FairnessError::EmptyGroup(v as u8));
        }
    }
    Ok(groups)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FairnessError::Length { what, expected, got })
    }
}

/// `|P(y=1 | s=1) - P(y=1 | s=0)|` over hard labels.
pub fn risk_difference(labels: &[u8], s: &[u8]) -> Result<f64> {
    check_len("labels", s.len(), labels.len())?;
    let [g0, g1] = split_groups(s)?;
    Ok((positive_rate(labels, &g1) - positive_rate(labels, &g0)).abs())
}

/// `|P(y=1) - P(y'=1)|` between predictions on two interventional copies of
/// the same nodes.
pub fn gcf_from_labels(pos: &[u8], neg: &[u8]) -> Result<f64> {
    check_len("negative labels", pos.len(), neg.len())?;
    if pos.is_empty() {
        return Ok(0.0);
    }
    let n = pos.len() as f64;
    let p = pos.iter().filter(|&&v| v == 1).count() as f64 / n;
    let q = neg.iter().filter(|&&v| v == 1).count() as f64 / n;
    Ok((p - q).abs())
}

/// Inverse-propensity weights `P̂(s_i) / P̂(s_i | z_i)` from a logistic model
/// of `s` on `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propensity {
    /// `None` when there are no z columns; every weight is then 1.
    pub model: Option<LogisticModel>,
    pub p_s1: f64,
}

impl Propensity {
    pub fn fit(s: &[u8], z: &Tensor) -> Result<Self> {
        check_len("z rows", s.len(), z.rows())?;
        split_groups(s)?;
        let p_s1 = s.iter().filter(|&&v| v == 1).count() as f64 / s.len() as f64;
        let model = if z.cols() == 0 {
            None
        } else {
            Some(LogisticModel::fit(z, s, "sensitive attribute").map_err(FairnessError::Propensity)?)
        };
        Ok(Self { model, p_s1 })
    }

    pub fn is_degenerate(&self) -> bool {
        self.model.is_none()
    }

    pub fn weights(&self, s: &[u8], z: &Tensor) -> Vec<f64> {
        let (lo, hi) = PROPENSITY_CLIP;
        s.iter()
            .enumerate()
            .map(|(i, &si)| {
                let Some(model) = &self.model else { return 1.0 };
                let p1 = sigmoid(model.logit(z.row(i))).clamp(lo, hi);
                if si == 1 {
                    self.p_s1 / p1
                } else {
                    (1.0 - self.p_s1) / (1.0 - p1)
                }
            })
            .collect()
    }
}

/// IID causal-effect estimate of `|P(y | do(s=1)) - P(y | do(s=0))|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfEstimate {
    pub value: f64,
    pub p_do_pos: f64,
    pub p_do_neg: f64,
    /// No z columns: the estimate is the plain group-mean difference.
    pub degenerate: bool,
}

/// Weighted group means of `values` (hard labels or scores in `[0, 1]`).
pub fn iid_cf(values: &[f64], s: &[u8], z: &Tensor) -> Result<CfEstimate> {
    check_len("values", s.len(), values.len())?;
    let prop = Propensity::fit(s, z)?;
    let w = prop.weights(s, z);
    let [g0, g1] = split_groups(s)?;
    let mean = |idx: &[usize]| idx.iter().map(|&i| w[i] * values[i]).sum::<f64>() / idx.len() as f64;
    let (p_do_pos, p_do_neg) = (mean(&g1), mean(&g0));
    Ok(CfEstimate {
        value: (p_do_pos - p_do_neg).abs(),
        p_do_pos,
        p_do_neg,
        degenerate: prop.is_degenerate(),
    })
}

/// `|mean σ(logits) over s=1 - mean σ(logits) over s=0|`.
pub fn rd_regularizer(tape: &mut Tape, logits: Var, s: &[u8]) -> Result<Var> {
    let [g0, g1] = split_groups(s)?;
    let scores = tape.sigmoid(logits);
    group_gap(tape, scores, &g1, &g0)
}

/// Propensity-weighted version of [`rd_regularizer`].
pub fn cf_regularizer(tape: &mut Tape, logits: Var, s: &[u8], weights: &[f64]) -> Result<Var> {
    check_len("weights", s.len(), weights.len())?;
    let [g0, g1] = split_groups(s)?;
    let scores = tape.sigmoid(logits);
    let w = tape.constant(Tensor::column(weights.to_vec()));
    let weighted = tape.mul(scores, w)?;
    group_gap(tape, weighted, &g1, &g0)
}

/// `|mean σ(l⁺/τ) - mean σ(l⁻/τ)|` for logits on the two interventional copies.
pub fn gcf_regularizer(tape: &mut Tape, logits_pos: Var, logits_neg: Var, tau: f64) -> Result<Var> {
    let p = tape.scale(logits_pos, 1.0 / tau);
    let p = tape.sigmoid(p);
    let p = tape.reduce_mean(p);
    let q = tape.scale(logits_neg, 1.0 / tau);
    let q = tape.sigmoid(q);
    let q = tape.reduce_mean(q);
    let d = tape.sub(p, q)?;
    Ok(tape.abs(d))
}

fn group_gap(tape: &mut Tape, values: Var, a: &[usize], b: &[usize]) -> Result<Var> {
    let va = tape.gather_rows(values, a)?;
    let va = tape.reduce_mean(va);
    let vb = tape.gather_rows(values, b)?;
    let vb = tape.reduce_mean(vb);
    let d = tape.sub(va, vb)?;
    Ok(tape.abs(d))
}

/// Surrogate gCF value without a tape, for inspection.
pub fn surrogate_gcf(logits_pos: &[f64], logits_neg: &[f64], tau: f64) -> f64 {
    let m = |l: &[f64]| l.iter().map(|&v| sigmoid(v / tau)).sum::<f64>() / l.len().max(1) as f64;
    (m(logits_pos) - m(logits_neg)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Two-layer perceptron on the node's own features.
    Mlp,
    /// Two graph-convolution layers with symmetric normalization.
    Gcn,
}

/// Binary node classifier producing one logit per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub kind: ClassifierKind,
    pub x_dim: usize,
    pub hidden: usize,
    pub params: ParamStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierMeta {
    kind: ClassifierKind,
    x_dim: usize,
    hidden: usize,
}

impl Classifier {
    pub fn new(kind: ClassifierKind, x_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        Mlp::init(&mut params, "clf", &[x_dim, hidden, 1], Activation::Tanh, &mut rng);
        Self {
            kind,
            x_dim,
            hidden,
            params,
        }
    }

    /// A classifier whose logit is `bias` for every input.
    pub fn constant(kind: ClassifierKind, x_dim: usize, hidden: usize, bias: f64) -> Self {
        let mut c = Self::new(kind, x_dim, hidden, 0);
        let names: Vec<String> = c.params.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let t = c.params.get_mut(&name).expect("listed parameter");
            let fill = if name == "clf.1.bias" { bias } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = fill);
        }
        c
    }

    fn layers(&self) -> [Linear; 2] {
        [
            Linear {
                prefix: "clf.0".into(),
                input: self.x_dim,
                output: self.hidden,
            },
            Linear {
                prefix: "clf.1".into(),
                input: self.hidden,
                output: 1,
            },
        ]
    }

    pub fn propagation(&self, g: &Graph) -> Option<Arc<Propagation>> {
        match self.kind {
            ClassifierKind::Mlp => None,
            ClassifierKind::Gcn => Some(Arc::new(Propagation::gcn_normalized(g))),
        }
    }

    /// Records the forward pass; `prop` is required for the GCN variant.
    pub fn forward(&self, tape: &mut Tape, prop: Option<&Arc<Propagation>>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers().iter().enumerate() {
            if let Some(p) = prop {
                h = tape.propagate(h, p)?;
            }
            h = layer.forward(tape, &self.params, h)?;
            if i == 0 {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    pub fn logits(&self, g: &Graph, x: &Tensor) -> Result<Vec<f64>> {
        if x.cols() != self.x_dim {
            return Err(FairnessError::Dimension {
                expected: self.x_dim,
                got: x.cols(),
            });
        }
        let prop = self.propagation(g);
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let out = self.forward(&mut tape, prop.as_ref(), input)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Hard labels: 1 where `σ(logit) > 0.5`.
    pub fn predict(&self, g: &Graph, x: &Tensor) -> Result<Vec<u8>> {
        Ok(self.logits(g, x)?.iter().map(|&l| u8::from(l > 0.0)).collect())
    }

    fn metadata_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, path)?;
        let meta = ClassifierMeta {
            kind: self.kind,
            x_dim: self.x_dim,
            hidden: self.hidden,
        };
        std::fs::write(Self::metadata_path(path), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: ClassifierMeta = serde_json::from_slice(&std::fs::read(Self::metadata_path(path))?)?;
        let params = load_checkpoint(path)?;
        let fresh = Self::new(meta.kind, meta.x_dim, meta.hidden, 0);
        for (name, t) in fresh.params.iter() {
            match params.get(name) {
                Ok(got) if got.shape() == t.shape() => {}
                _ => {
                    return Err(CheckpointError::BadEntry {
                        name: name.to_string(),
                        reason: "missing or misshapen".into(),
                    }
                    .into())
                }
            }
        }
        Ok(Self {
            kind: meta.kind,
            x_dim: meta.x_dim,
            hidden: meta.hidden,
            params,
        })
    }
}

/// Hard-threshold gCF of `h` on the model's interventional features,
/// restricted to `nodes` (all nodes when `None`).
pub fn estimate_gcf(
    model: &MpvaModel,
    h: &Classifier,
    g: &Graph,
    table: &NodeTable,
    nodes: Option<&[usize]>,
) -> Result<f64> {
    let pos = model.intervene(g, table, 1)?;
    let neg = model.intervene(g, table, 0)?;
    gcf_on(h, g, &pos.x_tilde, &neg.x_tilde, nodes)
}

/// Hard-threshold gCF of `h` on the ground-truth interventional features, if
/// the table carries them.
pub fn true_gcf(h: &Classifier, g: &Graph, table: &NodeTable, nodes: Option<&[usize]>) -> Result<Option<f64>> {
    table
        .interventional
        .as_ref()
        .map(|iv| gcf_on(h, g, &iv.x_pos, &iv.x_neg, nodes))
        .transpose()
}

fn gcf_on(h: &Classifier, g: &Graph, x_pos: &Tensor, x_neg: &Tensor, nodes: Option<&[usize]>) -> Result<f64> {
    let yp = h.predict(g, x_pos)?;
    let yn = h.predict(g, x_neg)?;
    match nodes {
        None => gcf_from_labels(&yp, &yn),
        Some(idx) => {
            let pick = |y: &[u8]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
            gcf_from_labels(&pick(&yp), &pick(&yn))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    None,
    Rd,
    Cf,
    Gcf,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::None => "none",
            Objective::Rd => "rd",
            Objective::Cf => "cf",
            Objective::Gcf => "gcf",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Objective::None),
            "rd" => Ok(Objective::Rd),
            "cf" => Ok(Objective::Cf),
            "gcf" => Ok(Objective::Gcf),
            other => Err(format!("unknown objective {other:?} (expected none, rd, cf or gcf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FairConfig {
    pub objective: Objective,
    pub lambda: f64,
    /// Temperature of the sigmoid surrogate in the gCF regularizer.
    pub tau: f64,
    pub kind: ClassifierKind,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for FairConfig {
    fn default() -> Self {
        Self {
            objective: Objective::None,
            lambda: 0.0,
            tau: 1.0,
            kind: ClassifierKind::Mlp,
            hidden: 16,
            epochs: 500,
            lr: 0.01,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Default λ grid for trade-off sweeps.
pub const LAMBDA_GRID: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

impl FairConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            out.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            out.push(format!("tau must be positive, got {}", self.tau));
        }
        if self.hidden == 0 {
            out.push("hidden must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            out.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            out.push(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        out
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Node split stratified on the sensitive attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn stratified(s: &[u8], test_fraction: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for mut group in split_groups(s)? {
            group.shuffle(&mut rng);
            let k = ((group.len() as f64) * test_fraction).round() as usize;
            let k = k.clamp(1.min(group.len()), group.len().saturating_sub(1).max(1));
            test.extend_from_slice(&group[..k]);
            train.extend_from_slice(&group[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, test })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub lambda: f64,
    pub accuracy: f64,
    pub rd: f64,
    pub cf: f64,
    /// Estimated through the MPVA model; absent without one.
    pub gcf: Option<f64>,
    /// Against ground-truth interventional features; absent without them.
    pub true_gcf: Option<f64>,
    /// The trained regularizer's metric on train and test nodes.
    pub own_train: Option<f64>,
    pub own_test: Option<f64>,
    pub cf_degenerate: bool,
    pub config_digest: String,
}

impl FairnessReport {
    pub const CSV_HEADER: &'static str =
        "dataset,method,seed,acc,rd,cf,gcf,true_gcf,lambda,own_train,own_test,cf_degenerate,config_digest";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.dataset,
            self.method,
            self.seed,
            self.accuracy,
            self.rd,
            self.cf,
            opt(self.gcf),
            opt(self.true_gcf),
            self.lambda,
            opt(self.own_train),
            opt(self.own_test),
            self.cf_degenerate,
            self.config_digest
        )
    }

    pub fn all_finite(&self) -> bool {
        [self.accuracy, self.rd, self.cf]
            .into_iter()
            .chain(self.gcf)
            .chain(self.true_gcf)
            .chain(self.own_train)
            .chain(self.own_test)
            .all(f64::is_finite)
    }
}

/// Metrics of `h` on the given nodes.
pub fn evaluate(
    h: &Classifier,
    g: &Graph,
    table: &NodeTable,
    model: Option<&MpvaModel>,
    nodes: &[usize],
) -> Result<Evaluation> {
    let logits = h.logits(g, &table.x)?;
    let labels: Vec<u8> = logits.iter().map(|&l| u8::from(l > 0.0)).collect();
    let sub_s: Vec<u8> = nodes.iter().map(|&i| table.s[i]).collect();
    let sub_labels: Vec<u8> = nodes.iter().map(|&i| labels[i]).collect();
    let correct = nodes.iter().filter(|&&i| labels[i] == table.y[i]).count();
    let sub_z = table.z.select_rows(nodes);
    let hard: Vec<f64> = sub_labels.iter().map(|&v| f64::from(v)).collect();
    let cf = iid_cf(&hard, &sub_s, &sub_z)?;
    let gcf = model.map(|m| estimate_gcf(m, h, g, table, Some(nodes))).transpose()?;
    Ok(Evaluation {
        accuracy: correct as f64 / nodes.len().max(1) as f64,
        rd: risk_difference(&sub_labels, &sub_s)?,
        cf: cf.value,
        cf_degenerate: cf.degenerate,
        gcf,
        true_gcf: true_gcf(h, g, table, Some(nodes))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub rd: f64,
    pub cf: f64,
    pub cf_degenerate: bool,
    pub gcf: Option<f64>,
    pub true_gcf: Option<f64>,
}

impl Evaluation {
    fn own(&self, objective: Objective) -> Option<f64> {
        match objective {
            Objective::None => None,
            Objective::Rd => Some(self.rd),
            Objective::Cf => Some(self.cf),
            Objective::Gcf => self.gcf,
        }
    }
}

/// A trained classifier with its split and test-set report.
#[derive(Debug, Clone)]
pub struct FairRun {
    pub classifier: Classifier,
    pub split: Split,
    pub report: FairnessReport,
    pub loss_trace: Vec<f64>,
}

/// Minimizes `BCE + λ·regularizer` on the split's training nodes with Adam.
///
/// `interventions` holds the features of every node under `do(S=1)` and
/// `do(S=0)` and is required by the gCF objective.
pub fn fit_classifier(
    g: &Graph,
    table: &NodeTable,
    split: &Split,
    interventions: Option<(&Tensor, &Tensor)>,
    cfg: &FairConfig,
) -> Result<(Classifier, Vec<f64>)> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(FairnessError::InvalidConfig(problems));
    }
    if cfg.objective == Objective::Gcf && interventions.is_none() {
        return Err(FairnessError::MissingModel);
    }
    let train_s: Vec<u8> = split.train.iter().map(|&i| table.s[i]).collect();
    let train_y = Tensor::column(split.train.iter().map(|&i| f64::from(table.y[i])).collect());
    let weights = if cfg.objective == Objective::Cf {
        let z = table.z.select_rows(&split.train);
        Propensity::fit(&train_s, &z)?.weights(&train_s, &z)
    } else {
        Vec::new()
    };

    let mut h = Classifier::new(cfg.kind, table.x.cols(), cfg.hidden, cfg.seed);
    let prop = h.propagation(g);
    let trainable: Vec<String> = h.params.iter().map(|(n, _)| n.to_string()).collect();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), trainable);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let x = tape.constant(table.x.clone());
        let logits = h.forward(&mut tape, prop.as_ref(), x)?;
        let train_logits = tape.gather_rows(logits, &split.train)?;
        let targets = tape.constant(train_y.clone());
        let mut loss = tape.bce_with_logits(train_logits, targets)?;
        if cfg.lambda > 0.0 {
            let reg = match (cfg.objective, interventions) {
                (Objective::None, _) => None,
                (Objective::Rd, _) => Some(rd_regularizer(&mut tape, train_logits, &train_s)?),
                (Objective::Cf, _) => Some(cf_regularizer(&mut tape, train_logits, &train_s, &weights)?),
                (Objective::Gcf, Some((xp, xn))) => {
                    let xp = tape.constant(xp.clone());
                    let lp = h.forward(&mut tape, prop.as_ref(), xp)?;
                    let lp = tape.gather_rows(lp, &split.train)?;
                    let xn = tape.constant(xn.clone());
                    let ln = h.forward(&mut tape, prop.as_ref(), xn)?;
                    let ln = tape.gather_rows(ln, &split.train)?;
                    Some(gcf_regularizer(&mut tape, lp, ln, cfg.tau)?)
                }
                (Objective::Gcf, None) => unreachable!("checked above"),
            };
            if let Some(reg) = reg {
                let weighted = tape.scale(reg, cfg.lambda);
                loss = tape.add(loss, weighted)?;
            }
        }
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(FairnessError::Diverged(epoch));
        }
        trace.push(value);
        let grads = tape.backward(loss)?;
        h.params.absorb_grads(&tape, &grads)?;
        opt.step(&mut h.params)?;
    }
    Ok((h, trace))
}

/// Trains with [`fit_classifier`] on a stratified split, taking the gCF
/// objective's interventional features from `model`, and reports metrics on
/// the held-out nodes.
pub fn train_fair_classifier(
    dataset: &str,
    g: &Graph,
    table: &NodeTable,
    model: Option<&MpvaModel>,
    cfg: &FairConfig,
) -> Result<FairRun> {
    if cfg.objective == Objective::Gcf && model.is_none() {
        return Err(FairnessError::MissingModel);
    }
    let split = Split::stratified(&table.s, cfg.test_fraction, cfg.seed)?;
    let interventions = match (cfg.objective, model) {
        (Objective::Gcf, Some(m)) => Some((m.intervene(g, table, 1)?.x_tilde, m.intervene(g, table, 0)?.x_tilde)),
        _ => None,
    };
    let (h, trace) = fit_classifier(g, table, &split, interventions.as_ref().map(|(p, n)| (p, n)), cfg)?;
    let report = report_for(dataset, &h, g, table, model, &split, cfg)?;
    Ok(FairRun {
        classifier: h,
        split,
        report,
        loss_trace: trace,
    })
}

/// Test-set report for a trained classifier, with the objective's own metric
/// on both train and test nodes.
pub fn report_for(
    dataset: &str,
    h: &Classifier,
    g: &Graph,
    table: &NodeTable,
    model: Option<&MpvaModel>,
    split: &Split,
    cfg: &FairConfig,
) -> Result<FairnessReport> {
    let test = evaluate(h, g, table, model, &split.test)?;
    let train = evaluate(h, g, table, model, &split.train)?;
    Ok(FairnessReport {
        dataset: dataset.to_string(),
        method: format!("{:?}-{}", cfg.kind, cfg.objective.name()).to_lowercase(),
        seed: cfg.seed,
        lambda: cfg.lambda,
        accuracy: test.accuracy,
        rd: test.rd,
        cf: test.cf,
        gcf: test.gcf,
        true_gcf: test.true_gcf,
        own_train: train.own(cfg.objective),
        own_test: test.own(cfg.objective),
        cf_degenerate: test.cf_degenerate,
        config_digest: cfg.digest(),
    })
}
