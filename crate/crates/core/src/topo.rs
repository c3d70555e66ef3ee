//! Threshold networks: an undirected edge joins `i` and `j` whenever
//! `C_ij >= theta`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrnet::CorrMatrix;
use crate::exec::Execution;
use crate::graph::{adjacency_from_edges, DegreeDistribution, UnionFind};

/// Components with at most this many vertices are flagged as small.
pub const SMALL_CLUSTER_MAX: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopoError {
    #[error("threshold {0} outside [-1, 1]")]
    ThetaOutOfRange(f64),
    #[error("largest component scope needs at least one edge")]
    EmptyScope,
    #[error("threshold grid must be sorted ascending")]
    UnsortedThetas,
    #[error("multiples list is empty")]
    NoMultiples,
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
}

/// Which vertices a degree statistic is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Whole,
    #[default]
    Largest,
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "whole" => Ok(Scope::Whole),
            "largest" | "largest_component" => Ok(Scope::Largest),
            other => Err(format!("unknown scope {other:?} (expected whole|largest)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdGraph {
    theta: f64,
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl ThresholdGraph {
    /// Simple undirected graph from an explicit edge list (normalized to
    /// `i < j`, sorted). Rejects self-loops, duplicates and out-of-range ids.
    pub fn from_edges(n: usize, theta: f64, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopoError> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(TopoError::InvalidEdge(a, b));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(TopoError::InvalidEdge(w[0].0, w[0].1));
        }
        let adjacency = adjacency_from_edges(n, list.iter().copied());
        Ok(ThresholdGraph {
            theta,
            n,
            edges: list,
            adjacency,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }
}

pub fn build_threshold_network(c: &CorrMatrix, theta: f64) -> Result<ThresholdGraph, TopoError> {
    if !(-1.0..=1.0).contains(&theta) {
        return Err(TopoError::ThetaOutOfRange(theta));
    }
    let n = c.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if c.get(i, j) >= theta {
                edges.push((i, j));
            }
        }
    }
    let adjacency = adjacency_from_edges(n, edges.iter().copied());
    Ok(ThresholdGraph {
        theta,
        n,
        edges,
        adjacency,
    })
}

/// `mean + k * std` of the upper-triangle coefficients for each multiple `k`
/// (sample standard deviation).
pub fn sigma_thresholds(c: &CorrMatrix, multiples: &[i32]) -> Result<Vec<f64>, TopoError> {
    if multiples.is_empty() {
        return Err(TopoError::NoMultiples);
    }
    let values = c.upper_triangle();
    if values.is_empty() {
        return Ok(vec![1.0; multiples.len()]);
    }
    let s = crate::stats::moments(&values);
    Ok(multiples.iter().map(|&k| s.mean + k as f64 * s.std).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentReport {
    /// Vertex ids per component, each sorted; components ordered by size
    /// descending, then by smallest member.
    pub components: Vec<Vec<usize>>,
    pub largest_fraction: f64,
}

impl ComponentReport {
    pub fn largest(&self) -> &[usize] {
        &self.components[0]
    }

    pub fn is_small(&self, index: usize) -> bool {
        self.components[index].len() <= SMALL_CLUSTER_MAX
    }

    pub fn small_cluster_count(&self) -> usize {
        (0..self.components.len()).filter(|&i| self.is_small(i)).count()
    }
}

pub fn connected_components(g: &ThresholdGraph) -> ComponentReport {
    let mut uf = UnionFind::new(g.n);
    for &(a, b) in &g.edges {
        uf.union(a, b);
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for v in 0..g.n {
        let r = uf.find(v);
        by_root[r].push(v);
    }
    let mut components: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let largest_fraction = components.first().map_or(0.0, |c| c.len() as f64 / g.n as f64);
    ComponentReport {
        components,
        largest_fraction,
    }
}

/// `2|E| / N`.
pub fn mean_degree(g: &ThresholdGraph) -> f64 {
    if g.n == 0 {
        return 0.0;
    }
    2.0 * g.edges.len() as f64 / g.n as f64
}

pub fn degree_distribution(g: &ThresholdGraph, scope: Scope) -> Result<DegreeDistribution, TopoError> {
    match scope {
        Scope::Whole => Ok(DegreeDistribution::from_degrees(g.degrees())),
        Scope::Largest => {
            if g.edges.is_empty() {
                return Err(TopoError::EmptyScope);
            }
            let comps = connected_components(g);
            Ok(DegreeDistribution::from_degrees(
                comps.largest().iter().map(|&v| g.degree(v)),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusteringCoefficients {
    pub per_vertex: Vec<f64>,
    /// Mean over all N vertices, isolated ones included.
    pub average: f64,
}

impl ClusteringCoefficients {
    pub fn average_over(&self, vertices: &[usize]) -> f64 {
        if vertices.is_empty() {
            return 0.0;
        }
        vertices.iter().map(|&v| self.per_vertex[v]).sum::<f64>() / vertices.len() as f64
    }
}

/// `C_i = 2 m_i / (n_i (n_i - 1))`, zero when `n_i <= 1`.
pub fn clustering_coefficients(g: &ThresholdGraph) -> ClusteringCoefficients {
    let n = g.n;
    let mut linked = vec![false; n * n];
    for &(a, b) in &g.edges {
        linked[a * n + b] = true;
        linked[b * n + a] = true;
    }
    let per_vertex: Vec<f64> = (0..n)
        .map(|v| {
            let nb = &g.adjacency[v];
            let k = nb.len();
            if k <= 1 {
                return 0.0;
            }
            let mut m = 0usize;
            for (x, &a) in nb.iter().enumerate() {
                let row = &linked[a * n..(a + 1) * n];
                m += nb[x + 1..].iter().filter(|&&b| row[b]).count();
            }
            2.0 * m as f64 / (k * (k - 1)) as f64
        })
        .collect();
    let average = if n == 0 {
        0.0
    } else {
        per_vertex.iter().sum::<f64>() / n as f64
    };
    ClusteringCoefficients {
        per_vertex,
        average,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub mean_degree: f64,
    pub avg_clustering: f64,
    pub largest_fraction: f64,
    pub largest_size: usize,
    pub edge_count: usize,
    pub components: usize,
}

pub fn threshold_sweep(c: &CorrMatrix, thetas: &[f64]) -> Result<Vec<SweepRow>, TopoError> {
    threshold_sweep_with(c, thetas, Execution::default())
}

/// One row per threshold, each computed independently.
pub fn threshold_sweep_with(c: &CorrMatrix, thetas: &[f64], exec: Execution) -> Result<Vec<SweepRow>, TopoError> {
    if thetas.windows(2).any(|w| w[0] > w[1]) {
        return Err(TopoError::UnsortedThetas);
    }
    if let Some(&bad) = thetas.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(TopoError::ThetaOutOfRange(bad));
    }
    Ok(exec.map_slice(thetas, |&theta| {
        let g = build_threshold_network(c, theta).expect("theta validated");
        let comps = connected_components(&g);
        SweepRow {
            theta,
            mean_degree: mean_degree(&g),
            avg_clustering: clustering_coefficients(&g).average,
            largest_fraction: comps.largest_fraction,
            largest_size: comps.largest().len(),
            edge_count: g.edges.len(),
            components: comps.components.len(),
        }
    }))
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("theta\tmean_degree\tavg_clustering\tlargest_fraction\tedge_count\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.theta, r.mean_degree, r.avg_clustering, r.largest_fraction, r.edge_count
        );
    }
    out
}

/// Inclusive arithmetic grid `lo, lo+step, ..., <= hi`, with each point
/// computed as `lo + k*step` to avoid accumulated drift.
pub fn theta_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || lo > hi {
        return Vec::new();
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| lo + k as f64 * step).collect()
}

/// Breadth-first reachability; used as an independent component check.
pub fn reachable_from(g: &ThresholdGraph, start: usize) -> Vec<usize> {
    let mut seen = vec![false; g.n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(v) = queue.pop_front() {
        out.push(v);
        for &w in &g.adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    out.sort_unstable();
    out
}
