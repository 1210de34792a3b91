//! Undirected node networks, k-hop neighborhoods and Weisfeiler-Lehman colors.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({src}, {dst}) references a node outside 0..{n}")]
    IndexOutOfRange { src: usize, dst: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("node {node} outside 0..{n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("WL refinement needs at least one round")]
    ZeroRounds,
    #[error("edge list: {0}")]
    Format(String),
}

/// Simple undirected graph on nodes `0..n`.
///
/// Edges are stored once with `src < dst`; adjacency lists are sorted and symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a normalized graph. Self-loops, duplicates (in either orientation)
    /// and out-of-range indices are rejected.
    pub fn new(n: usize, edge_list: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for &(src, dst) in edge_list {
            if src >= n || dst >= n {
                return Err(GraphError::IndexOutOfRange { src, dst, n });
            }
            if src == dst {
                return Err(GraphError::SelfLoop(src));
            }
            let key = (src.min(dst), src.max(dst));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateEdge { src, dst });
            }
            adjacency[src].push(dst);
            adjacency[dst].push(src);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            n,
            edges: seen.into_iter().collect(),
            adjacency,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, each pair with `src < dst`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.n as f64
        }
    }

    fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node < self.n {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange { node, n: self.n })
        }
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, GraphError> {
        assert_eq!(perm.len(), self.n, "permutation length must equal node count");
        let edges: Vec<_> = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::new(self.n, &edges)
    }

    /// Breadth-first closure of depth `k` around `center`, center included.
    pub fn k_hop_neighborhood(&self, center: usize, k: usize) -> Result<NeighborhoodView, GraphError> {
        self.check_node(center)?;
        let mut depth = vec![usize::MAX; self.n];
        depth[center] = 0;
        let mut queue = VecDeque::from([center]);
        let mut members = vec![center];
        while let Some(u) = queue.pop_front() {
            if depth[u] == k {
                continue;
            }
            for &v in &self.adjacency[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        Ok(NeighborhoodView {
            center,
            hops: k,
            members,
        })
    }

    /// Weisfeiler-Lehman color refinement from identical initial colors.
    pub fn wl_colors(&self, rounds: usize) -> Result<ColorMap, GraphError> {
        if rounds == 0 {
            return Err(GraphError::ZeroRounds);
        }
        let initial = vec![0u32; self.n];
        let mut refiner = ColorRefiner::default();
        let raw = refiner.refine(self, &initial, rounds);
        Ok(ColorMap::from_raw(rounds, &raw))
    }

    /// Reads the `src,dst` edge-list format. `n` is the node count the indices must respect.
    pub fn read_edge_list<R: Read>(reader: R, n: usize) -> Result<Self, GraphError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| GraphError::Format(e.to_string()))?
            .clone();
        if headers.len() != 2 || headers.get(0) != Some("src") || headers.get(1) != Some("dst") {
            return Err(GraphError::Format(format!(
                "expected header \"src,dst\", found {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut edges = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| GraphError::Format(e.to_string()))?;
            let parse = |col: usize| -> Result<usize, GraphError> {
                let field = rec.get(col).unwrap_or("").trim();
                field.parse::<usize>().map_err(|_| {
                    GraphError::Format(format!("row {}: cannot parse node index {field:?}", row + 1))
                })
            };
            let (src, dst) = (parse(0)?, parse(1)?);
            if src >= n || dst >= n {
                return Err(GraphError::Format(format!(
                    "row {}: edge ({src}, {dst}) references a node outside 0..{n}",
                    row + 1
                )));
            }
            edges.push((src, dst));
        }
        Self::new(n, &edges)
    }

    pub fn write_edge_list<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "src,dst")?;
        for &(a, b) in &self.edges {
            writeln!(writer, "{a},{b}")?;
        }
        Ok(())
    }
}

/// Nodes reachable from `center` in at most `hops` steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodView {
    pub center: usize,
    pub hops: usize,
    /// Sorted node indices, center included.
    pub members: Vec<usize>,
}

impl NeighborhoodView {
    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// Sorted multiset of the given per-node values over the neighborhood.
    pub fn multiset<T: Copy + Ord>(&self, values: &[T]) -> Vec<T> {
        let mut out: Vec<T> = self.members.iter().map(|&i| values[i]).collect();
        out.sort_unstable();
        out
    }
}

/// Dense WL colors after a fixed number of rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorMap {
    pub round: usize,
    /// Per-node color ids, contiguous from 0 in first-occurrence order.
    pub colors: Vec<u32>,
}

impl ColorMap {
    fn from_raw(round: usize, raw: &[u32]) -> Self {
        let mut dense = HashMap::new();
        let colors = raw
            .iter()
            .map(|c| {
                let next = dense.len() as u32;
                *dense.entry(*c).or_insert(next)
            })
            .collect();
        Self { round, colors }
    }

    pub fn num_colors(&self) -> usize {
        self.colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
    }

    /// Partition of nodes into color classes, as sorted lists of node indices.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_colors()];
        for (i, &c) in self.colors.iter().enumerate() {
            out[c as usize].push(i);
        }
        out
    }

    /// Fraction of nodes carrying each color.
    pub fn color_frequencies(&self) -> Vec<f64> {
        let n = self.colors.len().max(1) as f64;
        self.classes().iter().map(|c| c.len() as f64 / n).collect()
    }
}

/// Injective WL relabelling. The dictionary persists across calls so that ids
/// produced for different graphs or different initial labellings are comparable.
#[derive(Debug, Default, Clone)]
pub struct ColorRefiner {
    initial: HashMap<u32, u32>,
    table: HashMap<(usize, u32, Vec<u32>), u32>,
}

impl ColorRefiner {
    /// Runs `rounds` refinement steps starting from `initial` labels and returns
    /// the final (non-dense) ids.
    pub fn refine(&mut self, g: &Graph, initial: &[u32], rounds: usize) -> Vec<u32> {
        assert_eq!(initial.len(), g.n());
        let mut current: Vec<u32> = initial
            .iter()
            .map(|&c| {
                let next = self.initial.len() as u32;
                *self.initial.entry(c).or_insert(next)
            })
            .collect();
        let mut nbr = Vec::new();
        for round in 0..rounds {
            let mut next = Vec::with_capacity(g.n());
            for i in 0..g.n() {
                nbr.clear();
                nbr.extend(g.neighbors(i).iter().map(|&j| current[j]));
                nbr.sort_unstable();
                let fresh = self.table.len() as u32;
                let id = *self
                    .table
                    .entry((round, current[i], nbr.clone()))
                    .or_insert(fresh);
                next.push(id);
            }
            current = next;
        }
        current
    }
}
