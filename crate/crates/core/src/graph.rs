//! Undirected graphs with dense node features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// An undirected simple graph `G = (V, E, X)`.
///
/// Edges are kept as a sorted list of canonical `(min, max)` pairs, so
/// `(u, v)` and `(v, u)` denote the same edge and duplicates collapse.
/// Values are immutable; every transform returns a new graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix<f32>,
}

/// A graph together with its class label in `1..=k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub label: usize,
}

#[inline]
pub fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    /// Validates and canonicalizes. Self-loops and out-of-range endpoints are
    /// rejected; repeated (in either orientation) edges collapse to one.
    pub fn new<I>(num_nodes: usize, edges: I, features: Matrix<f32>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!("{} feature rows for {num_nodes} nodes", features.rows())));
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range for {num_nodes} nodes")));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            canon.push(canonical(u, v));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self { num_nodes, edges: canon, features })
    }

    /// A graph with `num_nodes` nodes and all-zero `dim`-wide features.
    pub fn unfeatured<I>(num_nodes: usize, edges: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(num_nodes, edges, Matrix::zeros(num_nodes, dim))
    }

    pub fn empty(dim: usize) -> Self {
        Self { num_nodes: 0, edges: Vec::new(), features: Matrix::zeros(0, dim) }
    }

    /// Complete graph on `n` nodes with constant unit features of width `dim`.
    pub fn complete(n: usize, dim: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self { num_nodes: n, edges, features: Matrix::filled(n, dim, 1.0) }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.num_nodes == 0
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.binary_search(&canonical(u, v)).is_ok()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Dense symmetric 0/1 adjacency matrix with a zero diagonal.
    pub fn adjacency(&self) -> Matrix<u8> {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a.set(u, v, 1);
            a.set(v, u, 1);
        }
        a
    }

    /// Unordered node pairs that are not edges, in lexicographic order.
    pub fn non_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut it = self.edges.iter().peekable();
        for u in 0..self.num_nodes {
            for v in u + 1..self.num_nodes {
                if it.peek() == Some(&&(u, v)) {
                    it.next();
                } else {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Appends a node connected to every existing node. Its feature row is
    /// `init_feature`; the new node has index `num_nodes`.
    pub fn add_virtual_node(&self, init_feature: &[f32]) -> Result<Self> {
        if init_feature.len() != self.feature_dim() {
            return Err(Error::ShapeMismatch(format!(
                "virtual feature of width {} for {}-dimensional features",
                init_feature.len(),
                self.feature_dim()
            )));
        }
        let n = self.num_nodes;
        let mut edges = self.edges.clone();
        edges.extend((0..n).map(|v| (v, n)));
        edges.sort_unstable();
        let features = self.features.vstack(&Matrix::row_vector(init_feature.to_vec()))?;
        Ok(Self { num_nodes: n + 1, edges, features })
    }

    /// Induced subgraph on the nodes not listed in `drop`. Kept nodes are
    /// re-indexed in their original relative order.
    pub fn remove_nodes(&self, drop: &[usize]) -> Result<Self> {
        let mut dropped = vec![false; self.num_nodes];
        for &v in drop {
            if v >= self.num_nodes {
                return Err(Error::InvalidGraph(format!("cannot drop node {v} of a {}-node graph", self.num_nodes)));
            }
            dropped[v] = true;
        }
        Ok(self.remove_masked(&dropped))
    }

    pub(crate) fn remove_masked(&self, dropped: &[bool]) -> Self {
        let mut new_index = vec![usize::MAX; self.num_nodes];
        let mut kept = Vec::with_capacity(self.num_nodes);
        for v in 0..self.num_nodes {
            if !dropped[v] {
                new_index[v] = kept.len();
                kept.push(v);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| !dropped[u] && !dropped[v])
            .map(|&(u, v)| (new_index[u], new_index[v]))
            .collect();
        Self { num_nodes: kept.len(), edges, features: self.features.select_rows(&kept) }
    }

    /// Same nodes and features, new edge set.
    pub fn with_edges<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(self.num_nodes, edges, self.features.clone())
    }

    /// Same structure, new features.
    pub fn with_features(&self, features: Matrix<f32>) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!("{} feature rows for {} nodes", features.rows(), self.num_nodes)));
        }
        Ok(Self { num_nodes: self.num_nodes, edges: self.edges.clone(), features })
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.num_nodes
            )));
        }
        let mut seen = vec![false; self.num_nodes];
        for &p in perm {
            if p >= self.num_nodes || seen[p] {
                return Err(Error::InvalidGraph("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut rows = vec![0; self.num_nodes];
        for (i, &p) in perm.iter().enumerate() {
            rows[p] = i;
        }
        let features = self.features.select_rows(&rows);
        Self::new(self.num_nodes, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])), features)
    }
}

/// Several graphs merged into one block-diagonal graph so that a single
/// sparse propagation and segment readout process them together.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub graph: Graph,
    /// Graph index of every merged node.
    pub segment: Vec<usize>,
    /// First merged node of every graph.
    pub offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Graph]) -> Result<Self> {
        let dim = graphs.first().map_or(0, |g| g.feature_dim());
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let mut features = Vec::with_capacity(total * dim);
        let mut edges = Vec::with_capacity(graphs.iter().map(|g| g.num_edges()).sum());
        let mut segment = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "graph {gi} has feature width {} instead of {dim}",
                    g.feature_dim()
                )));
            }
            offsets.push(offset);
            features.extend_from_slice(g.features().as_slice());
            edges.extend(g.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
            segment.extend(core::iter::repeat_n(gi, g.num_nodes()));
            offset += g.num_nodes();
        }
        let graph = Graph { num_nodes: total, edges, features: Matrix::from_vec(total, dim, features)? };
        Ok(Self { graph, segment, offsets })
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len()
    }
}
