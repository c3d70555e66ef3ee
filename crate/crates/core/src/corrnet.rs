//! Cross-correlation and distance matrices.
//!
//! Off-diagonal coefficients are Pearson correlations of the raw return
//! columns. This equals `<r_i r_j> - <r_i><r_j>` on returns normalized by the
//! population standard deviation, with an exact unit diagonal.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::ingest::ReturnPanel;
use crate::stats::{moments, DistStats};

pub const CORRELATION_CONVENTION: &str = "pearson_raw_returns";
pub const DEFAULT_BIN_WIDTH: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrError {
    #[error("need at least {need} {what}, got {got}")]
    TooSmall { what: &'static str, need: usize, got: usize },
    #[error("ticker {0} has zero return variance")]
    ZeroVariance(String),
    #[error("invalid matrix: {0}")]
    Invalid(String),
    #[error("histogram bin width must be in (0, 2], got {0}")]
    BinWidth(f64),
}

fn validate_square(tickers: &[String], values: &Array2<f64>) -> Result<(), CorrError> {
    let (r, c) = values.dim();
    if r != c || r != tickers.len() {
        return Err(CorrError::Invalid(format!(
            "{r}x{c} matrix for {} tickers",
            tickers.len()
        )));
    }
    for i in 0..r {
        for j in 0..i {
            if values[[i, j]] != values[[j, i]] {
                return Err(CorrError::Invalid(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Symmetric correlation matrix with unit diagonal and entries in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl CorrMatrix {
    /// Wraps a precomputed matrix. Entries are clamped to [-1, 1] and the
    /// diagonal set to 1.
    pub fn from_values(tickers: Vec<String>, mut values: Array2<f64>) -> Result<Self, CorrError> {
        validate_square(&tickers, &values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CorrError::Invalid("non-finite coefficient".into()));
        }
        values.mapv_inplace(|v| v.clamp(-1.0, 1.0));
        for i in 0..tickers.len() {
            values[[i, i]] = 1.0;
        }
        Ok(CorrMatrix { tickers, values })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Coefficients `C_ij` for `i < j`, row-major.
    pub fn upper_triangle(&self) -> Vec<f64> {
        upper_triangle(&self.values)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.tickers, &self.values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_json(&self.tickers, &self.values)
    }
}

/// Mantegna distances `d_ij = sqrt(2 (1 - C_ij))`, in [0, 2].
#[derive(Clone, Debug, PartialEq)]
pub struct DistMatrix {
    tickers: Vec<String>,
    values: Array2<f64>,
}

impl DistMatrix {
    /// Wraps an arbitrary symmetric dissimilarity matrix with zero diagonal.
    pub fn from_values(tickers: Vec<String>, values: Array2<f64>) -> Result<Self, CorrError> {
        validate_square(&tickers, &values)?;
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(CorrError::Invalid(format!("distance {v} at ({i}, {j})")));
            }
            if i == j && v != 0.0 {
                return Err(CorrError::Invalid(format!("nonzero diagonal at {i}")));
            }
        }
        Ok(DistMatrix { tickers, values })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        upper_triangle(&self.values)
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.tickers, &self.values)
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_json(&self.tickers, &self.values)
    }
}

fn upper_triangle(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[[i, j]]);
        }
    }
    out
}

fn matrix_csv(tickers: &[String], m: &Array2<f64>) -> String {
    let mut out = String::from("ticker");
    for t in tickers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for (i, t) in tickers.iter().enumerate() {
        out.push_str(t);
        for j in 0..tickers.len() {
            let _ = write!(out, ",{}", m[[i, j]]);
        }
        out.push('\n');
    }
    out
}

fn matrix_json(tickers: &[String], m: &Array2<f64>) -> serde_json::Value {
    serde_json::json!({
        "tickers": tickers,
        "n": tickers.len(),
        "values": m.iter().copied().collect::<Vec<f64>>(),
    })
}

pub fn cross_correlation(returns: &ReturnPanel) -> Result<CorrMatrix, CorrError> {
    cross_correlation_with(returns, Execution::default())
}

/// Correlation matrix of the return columns. Each entry's time sum runs in
/// fixed order, so serial and parallel results are bit-identical.
pub fn cross_correlation_with(returns: &ReturnPanel, exec: Execution) -> Result<CorrMatrix, CorrError> {
    let (t, n) = returns.raw.dim();
    if t < 2 {
        return Err(CorrError::TooSmall { what: "return rows", need: 2, got: t });
    }
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let col = returns.raw.column(i);
            let mean = col.iter().sum::<f64>() / t as f64;
            col.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(CorrError::ZeroVariance(returns.tickers[i].clone()));
    }

    let rows = exec.map_range(n, |i| {
        (i + 1..n)
            .map(|j| {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            })
            .collect::<Vec<f64>>()
    });

    let mut values = Array2::<f64>::eye(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(CorrMatrix {
        tickers: returns.tickers.clone(),
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub center: f64,
    pub density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientDistribution {
    pub stats: DistStats,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
}

impl CoefficientDistribution {
    /// Two-column `bin_center<TAB>density` table with a header row.
    pub fn histogram_tsv(&self) -> String {
        let mut out = String::from("bin_center\tdensity\n");
        for b in &self.histogram {
            let _ = writeln!(out, "{}\t{}", b.center, b.density);
        }
        out
    }
}

/// Statistics and a density histogram over [-1, 1] of the `N(N-1)/2`
/// upper-triangle coefficients.
pub fn coefficient_distribution(c: &CorrMatrix, bin_width: f64) -> Result<CoefficientDistribution, CorrError> {
    if c.n() < 2 {
        return Err(CorrError::TooSmall { what: "tickers", need: 2, got: c.n() });
    }
    if !(bin_width > 0.0 && bin_width <= 2.0) {
        return Err(CorrError::BinWidth(bin_width));
    }
    let values = c.upper_triangle();
    let stats = moments(&values);
    let bins = (2.0 / bin_width).ceil() as usize;
    let mut counts = vec![0usize; bins];
    for v in &values {
        let k = (((v + 1.0) / bin_width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len() as f64;
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramBin {
            center: -1.0 + (k as f64 + 0.5) * bin_width,
            density: count as f64 / (total * bin_width),
        })
        .collect();
    Ok(CoefficientDistribution {
        stats,
        bin_width,
        histogram,
    })
}

pub fn distance_matrix(c: &CorrMatrix) -> DistMatrix {
    let mut values = c.values.mapv(|v| (2.0 * (1.0 - v)).max(0.0).sqrt());
    for i in 0..c.n() {
        values[[i, i]] = 0.0;
    }
    DistMatrix {
        tickers: c.tickers.clone(),
        values,
    }
}
