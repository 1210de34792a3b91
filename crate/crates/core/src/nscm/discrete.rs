//! Finite networked causal models small enough to enumerate exhaustively.
//!
//! A node is drawn uniformly at random. Its aggregate is `a = g(ball, c)`,
//! a lookup on the size and number of ones of the S-multiset in its k-hop
//! ball and its WL color `c`; its feature is `x = f_int(a, u)` with `u`
//! drawn from a noise law that may depend on the color.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NscmError;
use crate::graph::Graph;

const TABLE_TOL: f64 = 1e-12;
const MAX_OUTCOMES: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNscm {
    pub graph: Graph,
    pub hops: usize,
    /// WL colors after `hops` rounds.
    pub colors: Vec<u32>,
    pub num_colors: usize,
    /// `P(S = assignment)` indexed by bitmask (bit i is node i).
    pub s_prior: Vec<f64>,
    pub a_card: usize,
    pub x_card: usize,
    pub u_card: usize,
    /// `g` indexed by [`DiscreteNscm::mp_index`].
    pub mp: Vec<usize>,
    /// Noise law per color, `noise[c][u]`.
    pub noise: Vec<Vec<f64>>,
    /// `f_int[a][u]`.
    pub f_int: Vec<Vec<usize>>,
    /// Declared `P(x | a)`, rows indexed by `a`.
    pub px_given_a: Vec<Vec<f64>>,
}

/// Enumerated and formula-based interventional distributions side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub s_value: u8,
    pub enumerated: Vec<f64>,
    pub formula: Vec<f64>,
    pub max_abs_diff: f64,
}

pub struct DiscreteParts {
    pub graph: Graph,
    pub hops: usize,
    pub s_prior: Vec<f64>,
    pub a_card: usize,
    pub x_card: usize,
    pub mp: Vec<usize>,
    pub noise: Vec<Vec<f64>>,
    pub f_int: Vec<Vec<usize>>,
}

impl DiscreteNscm {
    /// Builds the model and declares `P(x | a)` as the observational
    /// conditional implied by the mechanisms.
    pub fn new(parts: DiscreteParts) -> Result<Self, NscmError> {
        let DiscreteParts {
            graph,
            hops,
            s_prior,
            a_card,
            x_card,
            mp,
            noise,
            f_int,
        } = parts;
        let n = graph.n();
        if n == 0 || n > 16 {
            return Err(NscmError::Discrete(format!("node count {n} outside 1..=16")));
        }
        let colors = if hops == 0 {
            vec![0; n]
        } else {
            graph.wl_colors(hops)?.colors
        };
        let num_colors = colors.iter().max().map_or(0, |&c| c as usize + 1);
        let u_card = noise.first().map_or(0, Vec::len);
        let mut m = Self {
            graph,
            hops,
            colors,
            num_colors,
            s_prior,
            a_card,
            x_card,
            u_card,
            mp,
            noise,
            f_int,
            px_given_a: Vec::new(),
        };
        m.check_shapes()?;
        m.px_given_a = m.observational_px_given_a();
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn mp_index(&self, color: usize, size: usize, ones: usize) -> usize {
        let n1 = self.n() + 1;
        (color * n1 + size) * n1 + ones
    }

    fn check_shapes(&self) -> Result<(), NscmError> {
        let n = self.n();
        let bad = |msg: String| Err(NscmError::Discrete(msg));
        if self.s_prior.len() != 1 << n {
            return bad(format!("S prior has {} entries, expected {}", self.s_prior.len(), 1 << n));
        }
        if self.mp.len() != self.num_colors * (n + 1) * (n + 1) {
            return bad(format!("aggregation table has {} entries", self.mp.len()));
        }
        if let Some(&a) = self.mp.iter().find(|&&a| a >= self.a_card) {
            return bad(format!("aggregation value {a} outside domain {}", self.a_card));
        }
        if self.noise.len() != self.num_colors || self.noise.iter().any(|r| r.len() != self.u_card) {
            return bad("noise laws must have one row per color, all of equal length".into());
        }
        if self.f_int.len() != self.a_card || self.f_int.iter().any(|r| r.len() != self.u_card) {
            return bad("internal mechanism must be a_card x u_card".into());
        }
        if let Some(&x) = self.f_int.iter().flatten().find(|&&x| x >= self.x_card) {
            return bad(format!("feature value {x} outside domain {}", self.x_card));
        }
        let outcomes = self.u_card.checked_pow(n as u32).unwrap_or(usize::MAX);
        if outcomes > MAX_OUTCOMES {
            return bad(format!("{outcomes} joint noise outcomes exceed the enumeration budget"));
        }
        Ok(())
    }

    /// Every probability table sums to one within 1e-12.
    pub fn validate(&self) -> Result<(), NscmError> {
        self.check_shapes()?;
        let mut rows: Vec<(&str, &[f64])> = vec![("S prior", &self.s_prior)];
        rows.extend(self.noise.iter().map(|r| ("noise law", r.as_slice())));
        rows.extend(self.px_given_a.iter().map(|r| ("P(x|a)", r.as_slice())));
        for (what, row) in rows {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > TABLE_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(NscmError::Discrete(format!("{what} row sums to {total}")));
            }
        }
        if self.px_given_a.len() != self.a_card || self.px_given_a.iter().any(|r| r.len() != self.x_card) {
            return Err(NscmError::Discrete("P(x|a) must be a_card x x_card".into()));
        }
        Ok(())
    }

    /// Graph Independence: the noise law does not depend on the color.
    pub fn noise_independent_of_color(&self) -> bool {
        self.noise.windows(2).all(|w| w[0] == w[1])
    }

    fn balls(&self) -> Vec<Vec<usize>> {
        (0..self.n())
            .map(|i| {
                self.graph
                    .k_hop_neighborhood(i, self.hops)
                    .expect("node in range")
                    .members
            })
            .collect()
    }

    fn aggregates(&self, balls: &[Vec<usize>], mask: usize) -> Vec<usize> {
        balls
            .iter()
            .enumerate()
            .map(|(i, ball)| {
                let ones = ball.iter().filter(|&&j| mask >> j & 1 == 1).count();
                self.mp[self.mp_index(self.colors[i] as usize, ball.len(), ones)]
            })
            .collect()
    }

    /// Distribution of the feature of a uniformly drawn node, by brute-force
    /// enumeration of every S assignment (weighted by `weights`) and every
    /// joint noise outcome.
    fn enumerate(&self, weights: &[(usize, f64)]) -> Vec<f64> {
        let n = self.n();
        let balls = self.balls();
        let mut dist = vec![0.0; self.x_card];
        let outcomes = self.u_card.pow(n as u32);
        let mut u = vec![0usize; n];
        for &(mask, p_mask) in weights {
            if p_mask == 0.0 {
                continue;
            }
            let a = self.aggregates(&balls, mask);
            for code in 0..outcomes {
                let mut rest = code;
                let mut p = p_mask;
                for (i, ui) in u.iter_mut().enumerate() {
                    *ui = rest % self.u_card;
                    rest /= self.u_card;
                    p *= self.noise[self.colors[i] as usize][*ui];
                }
                if p == 0.0 {
                    continue;
                }
                for i in 0..n {
                    dist[self.f_int[a[i]][u[i]]] += p / n as f64;
                }
            }
        }
        dist
    }

    fn forced_mask(&self, s_value: u8) -> usize {
        if s_value == 1 {
            (1 << self.n()) - 1
        } else {
            0
        }
    }

    /// `P(x | do(S = s_value))` by direct enumeration.
    pub fn enumerate_interventional(&self, s_value: u8) -> Vec<f64> {
        self.enumerate(&[(self.forced_mask(s_value), 1.0)])
    }

    /// `P(x)` by direct enumeration.
    pub fn enumerate_observational(&self) -> Vec<f64> {
        let weights: Vec<(usize, f64)> = self.s_prior.iter().copied().enumerate().collect();
        self.enumerate(&weights)
    }

    /// The observational `P(x | a)` implied by the mechanisms. Aggregate
    /// values never realized fall back to the color-averaged noise law.
    pub fn observational_px_given_a(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let balls = self.balls();
        let mut joint = vec![vec![0.0; self.x_card]; self.a_card];
        for (mask, &pm) in self.s_prior.iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            let a = self.aggregates(&balls, mask);
            for i in 0..n {
                let law = &self.noise[self.colors[i] as usize];
                for (u, &pu) in law.iter().enumerate() {
                    joint[a[i]][self.f_int[a[i]][u]] += pm * pu / n as f64;
                }
            }
        }
        let mut mean_law = vec![0.0; self.u_card];
        for &c in &self.colors {
            for (m, &p) in mean_law.iter_mut().zip(&self.noise[c as usize]) {
                *m += p / n as f64;
            }
        }
        joint
            .into_iter()
            .enumerate()
            .map(|(a, row)| {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    let mut out: Vec<f64> = row.iter().map(|v| v / total).collect();
                    renormalize(&mut out);
                    out
                } else {
                    let mut out = vec![0.0; self.x_card];
                    for (u, &pu) in mean_law.iter().enumerate() {
                        out[self.f_int[a][u]] += pu;
                    }
                    renormalize(&mut out);
                    out
                }
            })
            .collect()
    }

    /// `sum_c P(c) sum_a P(x|a) P(g(ball, c) = a)` with every ball forced to `s_value`.
    pub fn formula_interventional(&self, s_value: u8) -> Vec<f64> {
        let n = self.n();
        let balls = self.balls();
        let forced = self.aggregates(&balls, self.forced_mask(s_value));
        let mut per_color: BTreeMap<u32, (f64, Vec<f64>)> = BTreeMap::new();
        for i in 0..n {
            let entry = per_color.entry(self.colors[i]).or_insert_with(|| (0.0, vec![0.0; self.a_card]));
            entry.0 += 1.0;
            entry.1[forced[i]] += 1.0;
        }
        let mut dist = vec![0.0; self.x_card];
        for (count, a_counts) in per_color.values() {
            let p_c = count / n as f64;
            for (a, &ac) in a_counts.iter().enumerate() {
                let p_a_given_c = ac / count;
                for (x, d) in dist.iter_mut().enumerate() {
                    *d += p_c * p_a_given_c * self.px_given_a[a][x];
                }
            }
        }
        dist
    }

    pub fn compare_interventional(&self, s_value: u8) -> OracleComparison {
        let enumerated = self.enumerate_interventional(s_value);
        let formula = self.formula_interventional(s_value);
        let max_abs_diff = max_abs_diff(&enumerated, &formula);
        OracleComparison {
            s_value,
            enumerated,
            formula,
            max_abs_diff,
        }
    }

    /// Interventional distribution by enumeration, cross-checked against the
    /// aggregate-and-color formula.
    pub fn oracle_interventional_distribution(&self, s_value: u8) -> Result<Vec<f64>, NscmError> {
        let cmp = self.compare_interventional(s_value);
        if cmp.max_abs_diff > 1e-9 {
            return Err(NscmError::OracleMismatch {
                s_value,
                max_abs_diff: cmp.max_abs_diff,
            });
        }
        Ok(cmp.enumerated)
    }

    /// `max_x |P(x) - sum_{ball,c} P(ball,c) sum_a P(x|a) P(g(ball,c) = a)|`.
    pub fn observational_decomposition_check(&self) -> f64 {
        let n = self.n();
        let balls = self.balls();
        // Joint law of (ball size, ones, color) for a uniformly drawn node.
        // P(ball, c) expands over assignments and the uniformly drawn node.
        let mut rhs = vec![0.0; self.x_card];
        for (mask, &pm) in self.s_prior.iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            for (i, ball) in balls.iter().enumerate() {
                let ones = ball.iter().filter(|&&j| mask >> j & 1 == 1).count();
                let a = self.mp[self.mp_index(self.colors[i] as usize, ball.len(), ones)];
                for (x, r) in rhs.iter_mut().enumerate() {
                    *r += pm / n as f64 * self.px_given_a[a][x];
                }
            }
        }
        max_abs_diff(&self.enumerate_observational(), &rhs)
    }

    /// Random model on at most `max_n` nodes satisfying both decomposability
    /// and noise independence of color; binary S, A and X.
    pub fn random<R: Rng>(rng: &mut R, max_n: usize) -> Self {
        let n = rng.gen_range(3..=max_n.max(3));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.45) {
                    edges.push((i, j));
                }
            }
        }
        let graph = Graph::new(n, &edges).expect("valid random edges");
        let hops = rng.gen_range(1..=2);
        let num_colors = graph.wl_colors(hops).expect("rounds >= 1").num_colors();
        let s_prior = random_simplex(rng, 1 << n);
        let u_card = 3;
        let law = random_simplex(rng, u_card);
        let mp = (0..num_colors * (n + 1) * (n + 1)).map(|_| rng.gen_range(0..2)).collect();
        let f_int = (0..2).map(|_| (0..u_card).map(|_| rng.gen_range(0..2)).collect()).collect();
        Self::new(DiscreteParts {
            graph,
            hops,
            s_prior,
            a_card: 2,
            x_card: 2,
            mp,
            noise: vec![law; num_colors],
            f_int,
        })
        .expect("random model is well formed")
    }

    /// Three-node path whose endpoint and center noise laws differ: the
    /// observational `P(x|a)` no longer transports to the intervention.
    pub fn color_dependent_noise_example() -> Self {
        let graph = Graph::new(3, &[(0, 1), (1, 2)]).expect("path");
        let n = 3;
        let num_colors = 2;
        let mut mp = vec![0; num_colors * (n + 1) * (n + 1)];
        // a = 1 exactly when every S in the ball is 1.
        for c in 0..num_colors {
            for size in 0..=n {
                mp[(c * (n + 1) + size) * (n + 1) + size] = 1;
            }
        }
        Self::new(DiscreteParts {
            graph,
            hops: 1,
            s_prior: vec![1.0 / 8.0; 8],
            a_card: 2,
            x_card: 2,
            mp,
            noise: vec![vec![0.1, 0.9], vec![0.9, 0.1]],
            f_int: vec![vec![0, 1], vec![1, 0]],
        })
        .expect("example is well formed")
    }
}

fn renormalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    renormalize(&mut v);
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
