//! Minimum spanning tree of the distance matrix (Kruskal) and the statistics
//! read off it: average tree length, degree distribution, hubs.

use serde::Serialize;
use thiserror::Error;

use crate::corrnet::DistMatrix;
use crate::exec::Execution;
use crate::graph::{DegreeDistribution, UnionFind};

pub const TREE_LENGTH_CONVENTION: &str = "mst_edge_sum_over_n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("need at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("top must be in 1..={n}, got {top}")]
    TopOutOfRange { top: usize, n: usize },
    #[error("not a spanning tree: {0}")]
    NotATree(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanningTree {
    n: usize,
    /// Edges in acceptance order, each with `a < b`.
    edges: Vec<TreeEdge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SpanningTree {
    /// Checks that `edges` form a spanning tree over `n` vertices.
    pub fn from_edges(n: usize, edges: Vec<TreeEdge>) -> Result<Self, TreeError> {
        if n < 2 {
            return Err(TreeError::TooFewVertices(n));
        }
        if edges.len() != n - 1 {
            return Err(TreeError::NotATree(format!("{} edges for {n} vertices", edges.len())));
        }
        let mut uf = UnionFind::new(n);
        for e in &edges {
            if e.a >= n || e.b >= n || !uf.union(e.a, e.b) {
                return Err(TreeError::NotATree(format!("edge ({}, {}) closes a cycle", e.a, e.b)));
            }
        }
        Ok(Self::assemble(n, edges))
    }

    fn assemble(n: usize, edges: Vec<TreeEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.a].push((e.b, e.weight));
            adjacency[e.b].push((e.a, e.weight));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        SpanningTree { n, edges, adjacency }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

pub fn kruskal_mst(d: &DistMatrix) -> Result<SpanningTree, TreeError> {
    kruskal_mst_with(d, Execution::default())
}

/// Kruskal over the complete graph. Candidates are ordered by
/// `(weight, i, j)`, which fixes the tree on tied weights.
pub fn kruskal_mst_with(d: &DistMatrix, exec: Execution) -> Result<SpanningTree, TreeError> {
    let n = d.n();
    if n < 2 {
        return Err(TreeError::TooFewVertices(n));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            candidates.push((d.get(i, j), i, j));
        }
    }
    exec.sort_by(&mut candidates, |x, y| {
        x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2))
    });

    let mut uf = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (weight, a, b) in candidates {
        if uf.union(a, b) {
            edges.push(TreeEdge { a, b, weight });
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    Ok(SpanningTree::assemble(n, edges))
}

/// `L = (1/N) Σ_{tree edges} d_ij`.
pub fn average_tree_length(t: &SpanningTree) -> f64 {
    t.total_weight() / t.n as f64
}

/// Mean over all vertex pairs of the weighted tree path length.
pub fn mean_pairwise_path_length(t: &SpanningTree) -> f64 {
    let n = t.n;
    let mut total = 0.0;
    let mut dist = vec![0.0f64; n];
    let mut stack = Vec::with_capacity(n);
    for src in 0..n {
        let mut seen = vec![false; n];
        seen[src] = true;
        dist[src] = 0.0;
        stack.push(src);
        while let Some(v) = stack.pop() {
            for &(w, weight) in &t.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    dist[w] = dist[v] + weight;
                    stack.push(w);
                }
            }
        }
        total += dist[src + 1..].iter().sum::<f64>();
    }
    total / (n * (n - 1) / 2) as f64
}

pub fn mst_degree_distribution(t: &SpanningTree) -> DegreeDistribution {
    DegreeDistribution::from_degrees(t.degrees())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Hub {
    pub id: usize,
    pub ticker: String,
    pub degree: usize,
}

/// Vertices by degree descending, ties by ascending id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HubRanking(pub Vec<Hub>);

pub fn hub_ranking(t: &SpanningTree, tickers: &[String], top: usize) -> Result<HubRanking, TreeError> {
    if top == 0 || top > t.n {
        return Err(TreeError::TopOutOfRange { top, n: t.n });
    }
    let mut order: Vec<(usize, usize)> = t.degrees().into_iter().enumerate().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(HubRanking(
        order
            .into_iter()
            .take(top)
            .map(|(id, degree)| Hub {
                id,
                ticker: tickers.get(id).cloned().unwrap_or_else(|| id.to_string()),
                degree,
            })
            .collect(),
    ))
}
