//! Average-linkage (UPGMA) clustering, cophenetic distances and the
//! cophenetic correlation coefficient.
//!
//! Cluster references follow the usual linkage-matrix convention: leaves are
//! `0..N`, the cluster formed by merge `k` is `N + k`.

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrnet::DistMatrix;
use crate::exec::Execution;

pub const DEFAULT_BAND_CUTOFFS: [f64; 2] = [1.0, 1.2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HierError {
    #[error("need at least {need} leaves, got {got}")]
    TooFewLeaves { need: usize, got: usize },
    #[error("zero variance in {0} pair values")]
    DegenerateVariance(&'static str),
    #[error("cutoffs must be sorted ascending")]
    UnsortedCutoffs,
    #[error("matrix sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("invalid merge tree: {0}")]
    InvalidTree(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeTree {
    n: usize,
    merges: Vec<Merge>,
}

impl MergeTree {
    /// Validates child references and sizes of an externally built tree.
    pub fn from_merges(n: usize, merges: Vec<Merge>) -> Result<Self, HierError> {
        if n < 2 {
            return Err(HierError::TooFewLeaves { need: 2, got: n });
        }
        if merges.len() != n - 1 {
            return Err(HierError::InvalidTree(format!("{} merges for {n} leaves", merges.len())));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut size = vec![1usize; 2 * n - 1];
        for (k, m) in merges.iter().enumerate() {
            for child in [m.left, m.right] {
                if child >= n + k {
                    return Err(HierError::InvalidTree(format!("merge {k} references future cluster {child}")));
                }
                if std::mem::replace(&mut used[child], true) {
                    return Err(HierError::InvalidTree(format!("cluster {child} merged twice")));
                }
            }
            size[n + k] = size[m.left] + size[m.right];
            if size[n + k] != m.size {
                return Err(HierError::InvalidTree(format!("merge {k} size {} != {}", m.size, size[n + k])));
            }
        }
        Ok(MergeTree { n, merges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Height of the node with cluster id `id` (leaves are at 0).
    pub fn node_height(&self, id: usize) -> f64 {
        if id < self.n {
            0.0
        } else {
            self.merges[id - self.n].height
        }
    }

    /// Leaf members of every cluster id, each sorted.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members: Vec<Vec<usize>> = (0..self.n).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut joined = members[m.left].clone();
            joined.extend_from_slice(&members[m.right]);
            joined.sort_unstable();
            members.push(joined);
        }
        members
    }

    /// For each leaf, the height of the first merge that contains it.
    pub fn leaf_first_merge_heights(&self) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.n];
        for m in &self.merges {
            for child in [m.left, m.right] {
                if child < self.n {
                    out[child] = m.height;
                }
            }
        }
        out
    }
}

pub fn upgma(d: &DistMatrix) -> Result<MergeTree, HierError> {
    upgma_with(d, Execution::default())
}

/// Repeatedly merges the pair of clusters with the smallest mean
/// inter-cluster distance. Ties break on the smallest member ids of the two
/// clusters. Distances to the merged cluster follow the size-weighted
/// Lance–Williams update.
pub fn upgma_with(d: &DistMatrix, exec: Execution) -> Result<MergeTree, HierError> {
    let n = d.n();
    if n < 2 {
        return Err(HierError::TooFewLeaves { need: 2, got: n });
    }
    // Slot s holds the cluster whose smallest member is s.
    let mut dist: Vec<f64> = d.values().iter().copied().collect();
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut cluster_id: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    let less = |x: &(f64, usize, usize), y: &(f64, usize, usize)| match x.0.total_cmp(&y.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (x.1, x.2) < (y.1, y.2),
    };

    for k in 0..n - 1 {
        let (height, p, q) = {
            let dist = &dist;
            let active = &active;
            exec.min_by_range(
                n,
                |p| {
                    if !active[p] {
                        return None;
                    }
                    let row = &dist[p * n..(p + 1) * n];
                    let mut best: Option<(f64, usize, usize)> = None;
                    for q in p + 1..n {
                        if active[q] && best.is_none_or(|b| row[q] < b.0) {
                            best = Some((row[q], p, q));
                        }
                    }
                    best
                },
                less,
            )
            .expect("at least two active clusters")
        };

        merges.push(Merge {
            left: cluster_id[p],
            right: cluster_id[q],
            height,
            size: size[p] + size[q],
        });

        let w = size[q] as f64 / (size[p] + size[q]) as f64;
        for x in 0..n {
            if !active[x] || x == p || x == q {
                continue;
            }
            let a = dist[p * n + x];
            let b = dist[q * n + x];
            let merged = (a + w * (b - a)).clamp(a.min(b), a.max(b));
            dist[p * n + x] = merged;
            dist[x * n + p] = merged;
        }
        active[q] = false;
        size[p] += size[q];
        cluster_id[p] = n + k;
    }
    Ok(MergeTree { n, merges })
}

/// `c_ij` = height of the merge where leaves `i` and `j` first share a cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct CopheneticMatrix {
    values: Array2<f64>,
}

impl CopheneticMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }
}

pub fn cophenetic_matrix(t: &MergeTree) -> CopheneticMatrix {
    let n = t.n;
    let members = t.members();
    let mut values = Array2::<f64>::zeros((n, n));
    for m in &t.merges {
        for &i in &members[m.left] {
            for &j in &members[m.right] {
                values[[i, j]] = m.height;
                values[[j, i]] = m.height;
            }
        }
    }
    CopheneticMatrix { values }
}

/// Pearson correlation between `{d_ij}` and `{c_ij}` over `i < j`.
pub fn cophenetic_correlation(d: &DistMatrix, c: &CopheneticMatrix) -> Result<f64, HierError> {
    let n = d.n();
    if c.n() != n {
        return Err(HierError::SizeMismatch(n, c.n()));
    }
    if n < 3 {
        return Err(HierError::TooFewLeaves { need: 3, got: n });
    }
    let dv = d.upper_triangle();
    let cv: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| c.get(i, j)).collect();
    let m = dv.len() as f64;
    let dm = dv.iter().sum::<f64>() / m;
    let cm = cv.iter().sum::<f64>() / m;
    let (mut sdc, mut sdd, mut scc) = (0.0, 0.0, 0.0);
    for (x, y) in dv.iter().zip(&cv) {
        let (a, b) = (x - dm, y - cm);
        sdc += a * b;
        sdd += a * a;
        scc += b * b;
    }
    if sdd == 0.0 {
        return Err(HierError::DegenerateVariance("distance"));
    }
    if scc == 0.0 {
        return Err(HierError::DegenerateVariance("cophenetic"));
    }
    Ok((sdc / (sdd * scc).sqrt()).clamp(-1.0, 1.0))
}

/// Which heights are binned by [`pair_height_bands`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// The `N - 1` merge heights of the dendrogram.
    #[default]
    MergeHeights,
    /// One value per leaf: the height at which it first joins a cluster.
    LeafFirstMerge,
    /// All `N(N-1)/2` cophenetic distances.
    AllPairs,
}

impl FromStr for BandMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "merge_heights" | "merges" => Ok(BandMode::MergeHeights),
            "leaf_first_merge" | "leaves" => Ok(BandMode::LeafFirstMerge),
            "all_pairs" | "pairs" => Ok(BandMode::AllPairs),
            other => Err(format!(
                "unknown band mode {other:?} (expected merge_heights|leaf_first_merge|all_pairs)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCounts {
    pub mode: BandMode,
    pub cutoffs: Vec<f64>,
    /// `counts[0]` holds values `<= cutoffs[0]`, `counts[k]` values in
    /// `(cutoffs[k-1], cutoffs[k]]`, the last one values above every cutoff.
    pub counts: Vec<usize>,
}

pub fn pair_height_bands(t: &MergeTree, cutoffs: &[f64], mode: BandMode) -> Result<BandCounts, HierError> {
    if cutoffs.windows(2).any(|w| w[0] > w[1]) {
        return Err(HierError::UnsortedCutoffs);
    }
    let values: Vec<f64> = match mode {
        BandMode::MergeHeights => t.merges.iter().map(|m| m.height).collect(),
        BandMode::LeafFirstMerge => t.leaf_first_merge_heights(),
        BandMode::AllPairs => {
            let c = cophenetic_matrix(t);
            (0..t.n).flat_map(|i| (i + 1..t.n).map(move |j| (i, j))).map(|(i, j)| c.get(i, j)).collect()
        }
    };
    let mut counts = vec![0usize; cutoffs.len() + 1];
    for v in values {
        counts[cutoffs.partition_point(|&c| c < v)] += 1;
    }
    Ok(BandCounts {
        mode,
        cutoffs: cutoffs.to_vec(),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(n: usize, entries: &[((usize, usize), f64)]) -> DistMatrix {
        let mut m = Array2::zeros((n, n));
        for &((i, j), v) in entries {
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
        DistMatrix::from_values((0..n).map(|i| format!("v{i}")).collect(), m).unwrap()
    }

    fn two_pairs() -> DistMatrix {
        dist(
            4,
            &[((0, 1), 0.1), ((2, 3), 0.1), ((0, 2), 1.0), ((0, 3), 1.0), ((1, 2), 1.0), ((1, 3), 1.0)],
        )
    }

    #[test]
    fn two_leaves() {
        let t = upgma(&dist(2, &[((0, 1), 0.4)])).unwrap();
        assert_eq!(t.merges(), [Merge { left: 0, right: 1, height: 0.4, size: 2 }]);
        assert_eq!(cophenetic_matrix(&t).get(0, 1), 0.4);
    }

    #[test]
    fn three_points() {
        let d = dist(3, &[((0, 1), 1.0), ((0, 2), 2.0), ((1, 2), 2.0)]);
        let t = upgma(&d).unwrap();
        assert_eq!(
            t.merges(),
            [
                Merge { left: 0, right: 1, height: 1.0, size: 2 },
                Merge { left: 3, right: 2, height: 2.0, size: 3 },
            ]
        );
        let c = cophenetic_matrix(&t);
        assert_eq!((c.get(0, 1), c.get(0, 2), c.get(1, 2)), (1.0, 2.0, 2.0));
        // d is an ultrametric, so the hierarchy reproduces it exactly
        assert_abs_diff_eq!(cophenetic_correlation(&d, &c).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tight_pairs() {
        let t = upgma(&two_pairs()).unwrap();
        let h: Vec<f64> = t.merges().iter().map(|m| m.height).collect();
        assert_eq!(h, vec![0.1, 0.1, 1.0]);
        assert_eq!((t.merges()[0].left, t.merges()[0].right), (0, 1));
        assert_eq!((t.merges()[1].left, t.merges()[1].right), (2, 3));
        assert_eq!(t.merges()[2].size, 4);
    }

    #[test]
    fn bands() {
        let t = upgma(&two_pairs()).unwrap();
        let b = pair_height_bands(&t, &[0.5], BandMode::LeafFirstMerge).unwrap();
        assert_eq!(b.counts, vec![4, 0]);
        let b = pair_height_bands(&t, &[0.5], BandMode::MergeHeights).unwrap();
        assert_eq!(b.counts, vec![2, 1]);
        let b = pair_height_bands(&t, &[0.5], BandMode::AllPairs).unwrap();
        assert_eq!(b.counts, vec![2, 4]);
        // boundary value goes to the lower band
        let b = pair_height_bands(&t, &[0.1, 1.0], BandMode::MergeHeights).unwrap();
        assert_eq!(b.counts, vec![2, 1, 0]);
        let b = pair_height_bands(&t, &DEFAULT_BAND_CUTOFFS, BandMode::MergeHeights).unwrap();
        assert_eq!(b.counts, vec![3, 0, 0]);
        assert_eq!(
            pair_height_bands(&t, &[1.2, 1.0], BandMode::MergeHeights),
            Err(HierError::UnsortedCutoffs)
        );
    }

    #[test]
    fn ccc_errors() {
        let d = dist(2, &[((0, 1), 1.0)]);
        let t = upgma(&d).unwrap();
        assert!(matches!(
            cophenetic_correlation(&d, &cophenetic_matrix(&t)),
            Err(HierError::TooFewLeaves { .. })
        ));
        let d = dist(3, &[((0, 1), 1.0), ((0, 2), 1.0), ((1, 2), 1.0)]);
        let t = upgma(&d).unwrap();
        assert_eq!(
            cophenetic_correlation(&d, &cophenetic_matrix(&t)),
            Err(HierError::DegenerateVariance("distance"))
        );
    }

    #[test]
    fn merge_tree_validation() {
        let bad = vec![
            Merge { left: 0, right: 1, height: 1.0, size: 2 },
            Merge { left: 0, right: 2, height: 2.0, size: 2 },
        ];
        assert!(MergeTree::from_merges(3, bad).is_err());
        let t = upgma(&two_pairs()).unwrap();
        assert_eq!(MergeTree::from_merges(4, t.merges().to_vec()).unwrap(), t);
    }
}
