//! Building blocks shared by threshold graphs and spanning trees.

use std::collections::BTreeMap;

use serde::Serialize;

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Degree counts and their empirical probability mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeDistribution {
    pub counts: BTreeMap<usize, usize>,
    pub pmf: BTreeMap<usize, f64>,
}

impl DegreeDistribution {
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0usize;
        for k in degrees {
            *counts.entry(k).or_insert(0) += 1;
            total += 1;
        }
        let pmf = counts
            .iter()
            .map(|(&k, &c)| (k, c as f64 / total as f64))
            .collect();
        DegreeDistribution { counts, pmf }
    }

    pub fn vertex_count(&self) -> usize {
        self.counts.values().sum()
    }
}

pub(crate) fn adjacency_from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}
