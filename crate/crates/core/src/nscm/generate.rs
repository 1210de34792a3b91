use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MessagePassingMechanism, NscmError, NscmSpec};
use crate::graph::Graph;
use crate::stats::LogisticModel;
use crate::table::{Exogenous, Interventional, NodeTable};
use crate::tensor::{sigmoid, Tensor};

/// Parameters of the semi-synthetic generator.
///
/// Edges are drawn independently with probability
/// `sigmoid(alpha - beta * |C_i - C_j| + gamma * 1[S_i = S_j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub preset: String,
    /// Drives the sampling of S, edges and noise.
    pub seed: u64,
    /// Fixes the interference mechanism; shared by every seed of a preset.
    pub mechanism_seed: u64,
    /// Fixes the base covariate table.
    pub base_seed: u64,
    pub n: usize,
    pub hops: usize,
    pub noise_sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Multiplier on the mechanism readout.
    pub effect_scale: f64,
    /// Hidden width of the mechanism.
    pub width: usize,
}

impl GenConfig {
    pub fn preset(name: &str, seed: u64) -> Result<Self, NscmError> {
        let base = Self {
            preset: name.to_string(),
            seed,
            mechanism_seed: 0,
            base_seed: 0,
            n: 2000,
            hops: 1,
            noise_sigma: 0.1,
            alpha: -1.0,
            beta: 1.0,
            gamma: 1.0,
            effect_scale: 1.0,
            width: 4,
        };
        match name {
            "d1" => Ok(Self {
                mechanism_seed: 2,
                noise_sigma: 0.3,
                alpha: -1.5,
                beta: 1.5,
                gamma: 0.0,
                effect_scale: 1.0,
                ..base
            }),
            "d2" => Ok(Self {
                mechanism_seed: 2,
                alpha: -1.5,
                beta: 1.5,
                gamma: 0.0,
                effect_scale: 2.0,
                ..base
            }),
            "h3" => Ok(Self {
                mechanism_seed: 13,
                hops: 3,
                alpha: -3.0,
                beta: 1.5,
                gamma: 1.0,
                effect_scale: 1.5,
                ..base
            }),
            other => Err(NscmError::UnknownPreset(other.to_string())),
        }
    }

    /// All problems at once, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 10 {
            out.push(format!("n must be at least 10, got {}", self.n));
        }
        if self.width == 0 {
            out.push("width must be positive".into());
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("effect_scale", self.effect_scale),
        ] {
            if !v.is_finite() {
                out.push(format!("{name} must be finite"));
            }
        }
        if self.noise_sigma < 0.0 {
            out.push(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if self.beta < 0.0 {
            out.push(format!("beta must be non-negative, got {}", self.beta));
        }
        out
    }
}

/// Raw covariates `C` with designated `Z` columns, plus raw S and Y used to
/// fit the sensitive-attribute and label models.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseTable {
    pub covariates: Tensor,
    pub names: Vec<String>,
    pub z_cols: Vec<usize>,
    pub s: Vec<u8>,
    pub y: Vec<u8>,
}

impl BaseTable {
    /// Credit-style table: education, marriage and age act as Z and drive S;
    /// five account columns depend partly on Z and drive Y.
    pub fn credit_like(n: usize, seed: u64) -> Self {
        const MIX: [[f64; 3]; 5] = [
            [0.5, 0.0, 0.3],
            [0.0, 0.4, -0.3],
            [-0.4, 0.2, 0.0],
            [0.3, -0.3, 0.2],
            [0.0, 0.0, 0.5],
        ];
        const Y_WEIGHTS: [f64; 5] = [1.6, -1.2, 0.9, 1.1, -0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 8);
        let mut s = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let c: [f64; 5] = std::array::from_fn(|j| {
                let e: f64 = rng.sample(StandardNormal);
                MIX[j].iter().zip(&z).map(|(m, v)| m * v).sum::<f64>() + 0.8 * e
            });
            let ps = sigmoid(0.4 + 0.3 * z[0] - 0.6 * z[1] + 0.9 * z[2]);
            s.push(u8::from(rng.gen::<f64>() < ps));
            let py = sigmoid(c.iter().zip(&Y_WEIGHTS).map(|(a, b)| a * b).sum::<f64>() - 0.3);
            y.push(u8::from(rng.gen::<f64>() < py));
            data.extend_from_slice(&z);
            data.extend_from_slice(&c);
        }
        let names = ["education", "marriage", "age", "limit_bal", "pay_status", "bill_amt", "pay_amt", "utilization"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Self {
            covariates: Tensor::matrix(n, 8, data).expect("base shape"),
            names,
            z_cols: vec![0, 1, 2],
            s,
            y,
        }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn x_cols(&self) -> Vec<usize> {
        (0..self.covariates.cols()).filter(|j| !self.z_cols.contains(j)).collect()
    }

    fn columns(&self, cols: &[usize]) -> Tensor {
        let n = self.n();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            data.extend(cols.iter().map(|&j| self.covariates.get(i, j)));
        }
        Tensor::matrix(n, cols.len(), data).expect("column selection")
    }
}

/// A generated dataset together with its generating model.
#[derive(Debug, Clone)]
pub struct SemiSynthetic {
    pub graph: Graph,
    pub table: NodeTable,
    pub spec: NscmSpec,
    pub label_probs: Vec<f64>,
}

/// Builds a networked dataset with known interventional ground truth.
///
/// S is resampled from a logistic fit on the base table, edges are drawn from
/// covariate similarity with an S-homophily bonus, a fixed random
/// message-passing network maps S to a per-node aggregate, and features are
/// `aggregate + base covariates + Gaussian noise`. Labels threshold a logistic
/// fit of the raw labels on the base feature columns.
pub fn generate_semi_synthetic(base: &BaseTable, cfg: &GenConfig) -> Result<SemiSynthetic, NscmError> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(NscmError::InvalidConfig(problems));
    }
    let n = base.n();
    if n == 0 {
        return Err(NscmError::EmptyBase);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x_cols = base.x_cols();
    let base_x = base.columns(&x_cols);
    let z = base.columns(&base.z_cols);

    let f_s = LogisticModel::fit(&base.covariates, &base.s, "sensitive attribute")?;
    let p_s = f_s.predict_proba(&base.covariates);
    let s: Vec<u8> = p_s.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect();
    if s.iter().all(|&v| v == s[0]) {
        return Err(NscmError::Degenerate("sampled sensitive attribute is constant".into()));
    }

    let graph = similarity_graph(&base.covariates, &s, cfg, &mut rng)?;

    let mut mech_rng = ChaCha8Rng::seed_from_u64(cfg.mechanism_seed);
    let f_mp = MessagePassingMechanism::random(cfg.hops, cfg.width, x_cols.len(), cfg.effect_scale, &mut mech_rng);

    let noise_data = (0..n * x_cols.len())
        .map(|_| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noise = Tensor::matrix(n, x_cols.len(), noise_data).expect("noise shape");

    let label_fn = LogisticModel::fit(&base_x, &base.y, "label")?;
    let spec = NscmSpec {
        hops: cfg.hops,
        f_mp,
        noise_sigma: cfg.noise_sigma,
        f_s,
        label_fn,
    };

    let a = spec.f_mp.apply(&graph, &s);
    let x = NscmSpec::f_int(&a, &base_x, &noise);
    let (y, label_probs) = spec.labels(&x);
    if y.iter().all(|&v| v == y[0]) {
        return Err(NscmError::Degenerate("generated labels are constant".into()));
    }

    let mut table = NodeTable::new(s, z, x, y)?;
    table.z_names = base.z_cols.iter().map(|&j| base.names[j].clone()).collect();
    table.x_names = x_cols.iter().map(|&j| base.names[j].clone()).collect();
    table.exogenous = Some(Exogenous { base: base_x, noise });

    let x_pos = ground_truth_intervention(&graph, &spec, &table, 1)?;
    let x_neg = ground_truth_intervention(&graph, &spec, &table, 0)?;
    let (y_pos, _) = spec.labels(&x_pos);
    let (y_neg, _) = spec.labels(&x_neg);
    table.interventional = Some(Interventional {
        x_pos,
        x_neg,
        y_pos,
        y_neg,
    });
    Ok(SemiSynthetic {
        graph,
        table,
        spec,
        label_probs,
    })
}

fn similarity_graph(c: &Tensor, s: &[u8], cfg: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Graph, NscmError> {
    let n = c.rows();
    let mut edges = Vec::new();
    for i in 0..n {
        let ci = c.row(i);
        for j in i + 1..n {
            let dist = ci
                .iter()
                .zip(c.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let same = if s[i] == s[j] { cfg.gamma } else { 0.0 };
            let p = sigmoid(cfg.alpha - cfg.beta * dist + same);
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(Graph::new(n, &edges)?)
}

/// Features under `do(S = s_value)` for every node, replaying the stored
/// base covariates and noise.
pub fn ground_truth_intervention(g: &Graph, spec: &NscmSpec, table: &NodeTable, s_value: u8) -> Result<Tensor, NscmError> {
    let exo = table.exogenous.as_ref().ok_or(NscmError::MissingExogenous)?;
    let forced = vec![s_value; table.n()];
    let a = spec.f_mp.apply(g, &forced);
    Ok(NscmSpec::f_int(&a, &exo.base, &exo.noise))
}

/// Features recomputed under an arbitrary assignment of S.
pub fn replay_with_assignment(g: &Graph, spec: &NscmSpec, table: &NodeTable, s: &[u8]) -> Result<Tensor, NscmError> {
    let exo = table.exogenous.as_ref().ok_or(NscmError::MissingExogenous)?;
    let a = spec.f_mp.apply(g, s);
    Ok(NscmSpec::f_int(&a, &exo.base, &exo.noise))
}
