//! Reference implementations used as oracles by the integration tests.
//! Each follows the textbook definition with no shared code from the crate.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric matrix with zero diagonal and entries in `(lo, hi)`.
pub fn random_symmetric(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(lo..hi);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

pub fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i:02}")).collect()
}

/// `C_ij = (<r_i r_j> - <r_i><r_j>) / sqrt((<r_i^2> - <r_i>^2)(<r_j^2> - <r_j>^2))`
/// with `returns[t][i]`.
pub fn naive_correlation(returns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t = returns.len() as f64;
    let n = returns[0].len();
    let avg = |f: &dyn Fn(&Vec<f64>) -> f64| returns.iter().map(f).sum::<f64>() / t;
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let ri = avg(&|r| r[i]);
            let rj = avg(&|r| r[j]);
            let rij = avg(&|r| r[i] * r[j]);
            let ri2 = avg(&|r| r[i] * r[i]);
            let rj2 = avg(&|r| r[j] * r[j]);
            c[i][j] = (rij - ri * rj) / ((ri2 - ri * ri) * (rj2 - rj * rj)).sqrt();
        }
    }
    c
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Decodes a Prüfer sequence into the edge list of a labeled tree.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).expect("a leaf exists");
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Minimum total weight over all `n^(n-2)` labeled spanning trees.
pub fn exhaustive_mst_weight(d: &Array2<f64>) -> f64 {
    exhaustive_mst(d).0
}

/// The lightest labeled spanning tree by enumeration of Prüfer sequences,
/// with its edges as sorted `(min, max)` pairs.
pub fn exhaustive_mst(d: &Array2<f64>) -> (f64, Vec<(usize, usize)>) {
    let n = d.nrows();
    if n == 2 {
        return (d[[0, 1]], vec![(0, 1)]);
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = (f64::INFINITY, Vec::new());
    loop {
        let edges = prufer_edges(&seq, n);
        let w: f64 = edges.iter().map(|&(a, b)| d[[a, b]]).sum();
        if w < best.0 {
            let mut e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            e.sort_unstable();
            best = (w, e);
        }
        let mut k = 0;
        loop {
            if k == len {
                return best;
            }
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
    }
}

/// One agglomeration step of the definitional average-linkage procedure.
#[derive(Clone, Debug)]
pub struct NaiveMerge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

/// Average linkage by re-scanning: every step recomputes the mean
/// leaf-to-leaf distance for every pair of current clusters from `d`.
/// Ties go to the pair with the smallest (min member, min member).
pub fn naive_upgma(d: &Array2<f64>) -> Vec<NaiveMerge> {
    let n = d.nrows();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += d[[i, j]];
                    }
                }
                let mean = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let key = |x: usize, y: usize| (clusters[x][0].min(clusters[y][0]), clusters[x][0].max(clusters[y][0]));
                let better = match best {
                    None => true,
                    Some((h, x, y)) => mean < h || (mean == h && key(a, b) < key(x, y)),
                };
                if better {
                    best = Some((mean, a, b));
                }
            }
        }
        let (height, a, b) = best.unwrap();
        let (a, b) = if clusters[a][0] < clusters[b][0] { (a, b) } else { (b, a) };
        let right = clusters[b].clone();
        let left = clusters[a].clone();
        let mut joined = [left.clone(), right.clone()].concat();
        joined.sort_unstable();
        clusters[a] = joined;
        clusters.remove(b);
        clusters.sort_by_key(|c| c[0]);
        out.push(NaiveMerge { left, right, height });
    }
    out
}

/// Random ultrametric: leaves merged in random order at strictly increasing
/// heights on a coarse grid so every value is exactly representable.
pub fn random_ultrametric(rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut m = Array2::zeros((n, n));
    let mut h = 0.0;
    while clusters.len() > 1 {
        h += rng.random_range(1..8) as f64 / 16.0;
        let a = rng.random_range(0..clusters.len());
        let ca = clusters.swap_remove(a);
        let b = rng.random_range(0..clusters.len());
        let cb = clusters.swap_remove(b);
        for &i in &ca {
            for &j in &cb {
                m[[i, j]] = h;
                m[[j, i]] = h;
            }
        }
        clusters.push([ca, cb].concat());
    }
    m
}

/// Triangle-count clustering `2 m_i / (n_i (n_i - 1))` from an adjacency matrix.
pub fn brute_clustering(adj: &[Vec<bool>]) -> Vec<f64> {
    let n = adj.len();
    (0..n)
        .map(|i| {
            let nb: Vec<usize> = (0..n).filter(|&j| adj[i][j]).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0;
            for a in 0..k {
                for b in a + 1..k {
                    if adj[nb[a]][nb[b]] {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

/// Component label per vertex by depth-first flooding.
pub fn flood_components(adj: &[Vec<bool>]) -> Vec<usize> {
    let n = adj.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        label[s] = next;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if adj[v][u] && label[u] == usize::MAX {
                    label[u] = next;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    label
}

/// Slope and intercept of `ln y` on `ln x` via the 2x2 normal equations.
pub fn normal_equations(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x.ln(), y.ln());
        sx += u;
        sy += v;
        sxx += u * u;
        sxy += u * v;
    }
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy * sxx - sx * sxy) / det;
    (slope, intercept)
}
