use std::collections::BTreeMap;
use std::sync::Arc;

use super::{sigmoid, ParamStore, Result, Tensor, TensorError};
use crate::graph::Graph;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Fixed symmetric sparse operator used for neighborhood aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    n: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl Propagation {
    /// Unweighted sum over neighbors, no self term.
    pub fn neighbor_sum(g: &Graph) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for i in 0..g.n() {
            indices.extend_from_slice(g.neighbors(i));
            offsets.push(indices.len());
        }
        let weights = vec![1.0; indices.len()];
        Self {
            n: g.n(),
            offsets,
            indices,
            weights,
        }
    }

    /// Unweighted sum over neighbors plus the node itself, `A + I`.
    pub fn self_loop_sum(g: &Graph) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for i in 0..g.n() {
            let nbrs = g.neighbors(i);
            let at = nbrs.partition_point(|&j| j < i);
            indices.extend_from_slice(&nbrs[..at]);
            indices.push(i);
            indices.extend_from_slice(&nbrs[at..]);
            offsets.push(indices.len());
        }
        let weights = vec![1.0; indices.len()];
        Self {
            n: g.n(),
            offsets,
            indices,
            weights,
        }
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`, the usual graph-convolution operator.
    pub fn gcn_normalized(g: &Graph) -> Self {
        let deg: Vec<f64> = (0..g.n()).map(|i| g.degree(i) as f64 + 1.0).collect();
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for i in 0..g.n() {
            let mut row: Vec<usize> = g.neighbors(i).to_vec();
            row.push(i);
            row.sort_unstable();
            for j in row {
                indices.push(j);
                weights.push(1.0 / (deg[i] * deg[j]).sqrt());
            }
            offsets.push(indices.len());
        }
        Self {
            n: g.n(),
            offsets,
            indices,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, cols) = x.dims();
        if rows != self.n {
            return Err(TensorError::ShapeMismatch {
                op: "propagate",
                lhs: vec![self.n, self.n],
                rhs: x.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; rows * cols];
        let data = x.data();
        for i in 0..self.n {
            let o = &mut out[i * cols..(i + 1) * cols];
            for e in self.offsets[i]..self.offsets[i + 1] {
                let j = self.indices[e];
                let w = self.weights[e];
                for (ov, &xv) in o.iter_mut().zip(&data[j * cols..(j + 1) * cols]) {
                    *ov += w * xv;
                }
            }
        }
        Tensor::matrix(rows, cols, out)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Abs(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize, len: usize },
    GatherRows { src: Var, rows: Vec<usize> },
    SumAll(Var),
    MeanAll(Var),
    Propagate(Var, Arc<Propagation>),
    GaussianSample { mu: Var, logvar: Var, noise: Vec<f64> },
    Mse(Var, Var),
    BceWithLogits(Var, Var),
    KlStdNormal(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run record of primitive operations.
///
/// A tape is built fresh for each forward pass; parameters are bound by name
/// from a [`ParamStore`] and gradients come back keyed by the same names.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// How the right operand of an elementwise binary op lines up with the left.
#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn broadcast(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> Result<Broadcast> {
    let (r, c) = lhs.dims();
    match rhs.dims() {
        (rr, rc) if rr == r && rc == c => Ok(Broadcast::Same),
        (1, 1) => Ok(Broadcast::Scalar),
        (1, rc) if rc == c => Ok(Broadcast::Row),
        (rr, 1) if rr == r => Ok(Broadcast::Col),
        _ => Err(TensorError::ShapeMismatch {
            op,
            lhs: lhs.shape().to_vec(),
            rhs: rhs.shape().to_vec(),
        }),
    }
}

fn rhs_index(b: Broadcast, i: usize, cols: usize) -> usize {
    match b {
        Broadcast::Same => i,
        Broadcast::Row => i % cols,
        Broadcast::Col => i / cols,
        Broadcast::Scalar => 0,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Unnamed differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a named parameter; repeated calls return the same handle.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.get(name)?.clone();
        let mut value = value;
        value.clear_grad();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        let (lhs, rhs) = (self.value(a), self.value(b));
        let bc = broadcast(op, lhs, rhs)?;
        let cols = lhs.cols();
        let data = lhs
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, rhs.data()[rhs_index(bc, i, cols)]))
            .collect();
        let value = Tensor::new(lhs.shape().to_vec(), data)?;
        Ok((value, self.needs(&[a, b])))
    }

    /// Elementwise `a + b`; `b` may be a row `[1, c]`, a column `[r, 1]` or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, ng) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, ng) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (value, ng) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let ng = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), ng)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let ng = self.needs(&[a]);
        self.push(value, op, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.dims();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = x.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = (v - m).exp();
                z += *o;
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= z;
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::Softmax(a), ng))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::hcat(&tensors)?;
        let ng = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(src);
        let (r, c) = x.dims();
        if start + len > c {
            return Err(TensorError::OutOfBounds {
                op: "slice",
                index: start + len,
                extent: c,
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let value = Tensor::matrix(r, len, out)?;
        let ng = self.needs(&[src]);
        Ok(self.push(value, Op::Slice { src, start, len }, ng))
    }

    pub fn gather_rows(&mut self, src: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(src);
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
            return Err(TensorError::OutOfBounds {
                op: "gather_rows",
                index: bad,
                extent: x.rows(),
            });
        }
        let value = x.select_rows(rows);
        let ng = self.needs(&[src]);
        Ok(self.push(
            value,
            Op::GatherRows {
                src,
                rows: rows.to_vec(),
            },
            ng,
        ))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn reduce_mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.data().iter().sum::<f64>() / x.numel().max(1) as f64;
        let ng = self.needs(&[a]);
        self.push(Tensor::scalar(m), Op::MeanAll(a), ng)
    }

    pub fn propagate(&mut self, a: Var, p: &Arc<Propagation>) -> Result<Var> {
        let value = p.apply(self.value(a))?;
        let ng = self.needs(&[a]);
        Ok(self.push(value, Op::Propagate(a, Arc::clone(p)), ng))
    }

    /// `mu + exp(logvar / 2) * noise`; the noise is a constant of the graph.
    pub fn gaussian_sample(&mut self, mu: Var, logvar: Var, noise: &Tensor) -> Result<Var> {
        let (m, lv) = (self.value(mu), self.value(logvar));
        for (other, name) in [(lv, "gaussian_sample"), (noise, "gaussian_sample")] {
            if other.shape() != m.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: name,
                    lhs: m.shape().to_vec(),
                    rhs: other.shape().to_vec(),
                });
            }
        }
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(noise.data())
            .map(|((&mu, &lv), &e)| mu + (0.5 * lv).exp() * e)
            .collect();
        let value = Tensor::new(m.shape().to_vec(), data)?;
        let ng = self.needs(&[mu, logvar]);
        Ok(self.push(
            value,
            Op::GaussianSample {
                mu,
                logvar,
                noise: noise.data().to_vec(),
            },
            ng,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() == y.shape() {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: x.shape().to_vec(),
                rhs: y.shape().to_vec(),
            })
        }
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.numel().max(1) as f64;
        let v = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let ng = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(v), Op::Mse(pred, target), ng))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against targets in [0, 1].
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.same_shape("bce_with_logits", logits, targets)?;
        let (l, t) = (self.value(logits), self.value(targets));
        let n = l.numel().max(1) as f64;
        let v = l
            .data()
            .iter()
            .zip(t.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let ng = self.needs(&[logits, targets]);
        Ok(self.push(Tensor::scalar(v), Op::BceWithLogits(logits, targets), ng))
    }

    /// `-0.5 * sum(1 + logvar - mu^2 - exp(logvar))`.
    pub fn kl_std_normal(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        self.same_shape("kl_std_normal", mu, logvar)?;
        let (m, lv) = (self.value(mu), self.value(logvar));
        let v = -0.5
            * m.data()
                .iter()
                .zip(lv.data())
                .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
                .sum::<f64>();
        let ng = self.needs(&[mu, logvar]);
        Ok(self.push(Tensor::scalar(v), Op::KlStdNormal(mu, logvar), ng))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.value(loss);
        if root.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate_grad(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient matches value shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn binary_grads(&self, grads: &mut [Option<Vec<f64>>], a: Var, b: Var, g: &[f64], da: impl Fn(usize, f64) -> f64, db: impl Fn(usize, f64) -> f64) {
        let lhs = self.value(a);
        let rhs = self.value(b);
        let bc = broadcast("backward", lhs, rhs).expect("shapes were checked on the way in");
        let cols = lhs.cols();
        self.accumulate(grads, a, |ga| {
            for (i, (o, &gi)) in ga.iter_mut().zip(g).enumerate() {
                *o += da(i, gi);
            }
        });
        self.accumulate(grads, b, |gb| {
            for (i, &gi) in g.iter().enumerate() {
                gb[rhs_index(bc, i, cols)] += db(i, gi);
            }
        });
    }

    fn propagate_grad(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let gt = Tensor::new(out.shape().to_vec(), g.to_vec()).expect("grad shape");
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    let ga = gt.matmul(&vb.transpose()).expect("matmul grad");
                    self.accumulate(grads, *a, |s| s.iter_mut().zip(ga.data()).for_each(|(o, v)| *o += v));
                }
                if self.nodes[b.0].needs_grad {
                    let gb = va.transpose().matmul(&gt).expect("matmul grad");
                    self.accumulate(grads, *b, |s| s.iter_mut().zip(gb.data()).for_each(|(o, v)| *o += v));
                }
            }
            Op::Add(a, b) => self.binary_grads(grads, *a, *b, g, |_, gi| gi, |_, gi| gi),
            Op::Sub(a, b) => self.binary_grads(grads, *a, *b, g, |_, gi| gi, |_, gi| -gi),
            Op::Mul(a, b) => {
                let (lhs, rhs) = (self.value(*a), self.value(*b));
                let bc = broadcast("backward", lhs, rhs).expect("checked");
                let cols = lhs.cols();
                let (ld, rd) = (lhs.data(), rhs.data());
                self.binary_grads(grads, *a, *b, g, |i, gi| gi * rd[rhs_index(bc, i, cols)], |i, gi| gi * ld[i]);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, |s| s.iter_mut().zip(g).for_each(|(o, gi)| *o += c * gi)),
            Op::Sigmoid(a) => self.accumulate(grads, *a, |s| {
                for ((o, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *o += gi * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => self.accumulate(grads, *a, |s| {
                for ((o, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *o += gi * (1.0 - y * y);
                }
            }),
            Op::Exp(a) => self.accumulate(grads, *a, |s| {
                for ((o, gi), y) in s.iter_mut().zip(g).zip(out.data()) {
                    *o += gi * y;
                }
            }),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |s| {
                    for ((o, gi), &xv) in s.iter_mut().zip(g).zip(x) {
                        if xv > 0.0 {
                            *o += gi;
                        }
                    }
                })
            }
            Op::Abs(a) => {
                let x = self.value(*a).data();
                self.accumulate(grads, *a, |s| {
                    for ((o, gi), &xv) in s.iter_mut().zip(g).zip(x) {
                        if xv > 0.0 {
                            *o += gi;
                        } else if xv < 0.0 {
                            *o -= gi;
                        }
                    }
                })
            }
            Op::Softmax(a) => {
                let (r, c) = out.dims();
                self.accumulate(grads, *a, |s| {
                    for i in 0..r {
                        let y = &out.data()[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            s[i * c + j] += y[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::Concat(parts) => {
                let (r, c) = out.dims();
                let mut offset = 0;
                for p in parts {
                    let pc = self.value(*p).cols();
                    self.accumulate(grads, *p, |s| {
                        for i in 0..r {
                            for j in 0..pc {
                                s[i * pc + j] += g[i * c + offset + j];
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::Slice { src, start, len } => {
                let (r, c) = self.value(*src).dims();
                self.accumulate(grads, *src, |s| {
                    for i in 0..r {
                        for j in 0..*len {
                            s[i * c + start + j] += g[i * len + j];
                        }
                    }
                })
            }
            Op::GatherRows { src, rows } => {
                let c = self.value(*src).cols();
                self.accumulate(grads, *src, |s| {
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            s[r * c + j] += g[k * c + j];
                        }
                    }
                })
            }
            Op::SumAll(a) => self.accumulate(grads, *a, |s| s.iter_mut().for_each(|o| *o += g[0])),
            Op::MeanAll(a) => {
                let n = self.value(*a).numel().max(1) as f64;
                self.accumulate(grads, *a, |s| s.iter_mut().for_each(|o| *o += g[0] / n))
            }
            Op::Propagate(a, p) => {
                // The operator is symmetric, so its adjoint is itself.
                let gt = Tensor::new(out.shape().to_vec(), g.to_vec()).expect("grad shape");
                let back = p.apply(&gt).expect("propagation grad");
                self.accumulate(grads, *a, |s| s.iter_mut().zip(back.data()).for_each(|(o, v)| *o += v));
            }
            Op::GaussianSample { mu, logvar, noise } => {
                self.accumulate(grads, *mu, |s| s.iter_mut().zip(g).for_each(|(o, gi)| *o += gi));
                let lv = self.value(*logvar).data();
                self.accumulate(grads, *logvar, |s| {
                    for (((o, gi), &l), &e) in s.iter_mut().zip(g).zip(lv).zip(noise) {
                        *o += gi * e * 0.5 * (0.5 * l).exp();
                    }
                });
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p).data(), self.value(*t).data());
                let n = pv.len().max(1) as f64;
                let k = 2.0 * g[0] / n;
                self.accumulate(grads, *p, |s| {
                    for ((o, a), b) in s.iter_mut().zip(pv).zip(tv) {
                        *o += k * (a - b);
                    }
                });
                self.accumulate(grads, *t, |s| {
                    for ((o, a), b) in s.iter_mut().zip(pv).zip(tv) {
                        *o -= k * (a - b);
                    }
                });
            }
            Op::BceWithLogits(l, t) => {
                let (lv, tv) = (self.value(*l).data(), self.value(*t).data());
                let k = g[0] / lv.len().max(1) as f64;
                self.accumulate(grads, *l, |s| {
                    for ((o, &x), &y) in s.iter_mut().zip(lv).zip(tv) {
                        *o += k * (sigmoid(x) - y);
                    }
                });
                self.accumulate(grads, *t, |s| {
                    for (o, &x) in s.iter_mut().zip(lv) {
                        *o -= k * x;
                    }
                });
            }
            Op::KlStdNormal(mu, logvar) => {
                let (m, lv) = (self.value(*mu).data(), self.value(*logvar).data());
                self.accumulate(grads, *mu, |s| {
                    for (o, &mv) in s.iter_mut().zip(m) {
                        *o += g[0] * mv;
                    }
                });
                self.accumulate(grads, *logvar, |s| {
                    for (o, &l) in s.iter_mut().zip(lv) {
                        *o += g[0] * -0.5 * (1.0 - l.exp());
                    }
                });
            }
        }
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` if `v` does not depend on any
    /// differentiable input or does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros if it was not reached.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let shape = tape.value(v).shape().to_vec();
            let n = shape.iter().product();
            Tensor::new(shape, vec![0.0; n]).expect("zero gradient")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[vec![1.0, 2.0]]));
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.reduce_sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_zero_grads() {
        let mut tape = Tape::new();
        let w = tape.leaf(t(&[vec![1.0, -3.0]]));
        let c = tape.constant(Tensor::scalar(4.0));
        let zero = tape.scale(w, 0.0);
        let s = tape.reduce_sum(zero);
        let loss = tape.add(s, c).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get_or_zeros(&tape, w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(w), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).item(), 0.5);
    }

    #[test]
    fn zero_noise_sample_is_mean() {
        let mut tape = Tape::new();
        let mu = tape.leaf(t(&[vec![0.3, -1.2]]));
        let lv = tape.leaf(t(&[vec![0.5, -0.7]]));
        let s = tape.gaussian_sample(mu, lv, &Tensor::zeros(1, 2)).unwrap();
        assert_eq!(tape.value(s).data(), tape.value(mu).data());
    }

    #[test]
    fn reparameterization_gradient_skips_noise() {
        let mut tape = Tape::new();
        let mu = tape.leaf(t(&[vec![0.3]]));
        let lv = tape.leaf(t(&[vec![0.4]]));
        let noise = Tensor::scalar(1.5);
        let s = tape.gaussian_sample(mu, lv, &noise).unwrap();
        let loss = tape.reduce_sum(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(mu).unwrap().item(), 1.0);
        let want = 1.5 * 0.5 * (0.2f64).exp();
        assert!((grads.get(lv).unwrap().item() - want).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        let mut tape = Tape::new();
        let zeros = tape.constant(Tensor::zeros(2, 3));
        let kl = tape.kl_std_normal(zeros, zeros).unwrap();
        assert_eq!(tape.value(kl).item(), 0.0);

        let x = tape.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let mse = tape.mse(x, x).unwrap();
        assert_eq!(tape.value(mse).item(), 0.0);

        let logits = tape.constant(Tensor::zeros(3, 1));
        let half = tape.constant(Tensor::full(3, 1, 0.5));
        let bce = tape.bce_with_logits(logits, half).unwrap();
        assert!((tape.value(bce).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_reports_operands() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(3, 2));
        let err = tape.add(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "add",
                lhs: vec![2, 3],
                rhs: vec![3, 2]
            }
        );
        assert!(tape.mse(a, b).is_err());
    }

    #[test]
    fn propagation_sums_neighbors() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let p = Propagation::neighbor_sum(&g);
        let x = Tensor::column(vec![1.0, 10.0, 100.0]);
        assert_eq!(p.apply(&x).unwrap().data(), &[10.0, 101.0, 10.0]);
        let gcn = Propagation::gcn_normalized(&g);
        let ones = gcn.apply(&Tensor::column(vec![1.0; 3])).unwrap();
        let want0 = 1.0 / 2.0 + 1.0 / (2.0f64 * 3.0).sqrt();
        assert!((ones.data()[0] - want0).abs() < 1e-15);
    }
}
