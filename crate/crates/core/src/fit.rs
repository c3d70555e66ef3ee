//! Power-law exponents from ordinary least squares on log-log points.
//!
//! A law `y ~ x^(-gamma)` is fitted as `ln y = a - gamma ln x`; the reported
//! exponent is `-slope`, so decaying laws have positive exponents.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::DegreeDistribution;
use crate::topo::SweepRow;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points in range, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive value at x = {x}, y = {y}")]
    NonPositiveValue { x: f64, y: f64 },
    #[error("all x values are equal; slope undefined")]
    DegenerateX,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRange {
    pub min: f64,
    pub max: f64,
}

impl FitRange {
    pub fn new(min: f64, max: f64) -> Self {
        FitRange { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

impl FromStr for FitRange {
    type Err = String;
    /// Parses `lo:hi`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s.split_once(':').ok_or_else(|| format!("{s:?}: expected lo:hi"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| format!("{s:?}: bad lower bound"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("{s:?}: bad upper bound"))?;
        if !(lo <= hi) {
            return Err(format!("{s:?}: lower bound exceeds upper bound"));
        }
        Ok(FitRange::new(lo, hi))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r_squared: f64,
    /// Intercept of the log-log line, `ln` of the prefactor.
    pub intercept: f64,
    pub n_points: usize,
    /// Smallest and largest x actually used.
    pub range: (f64, f64),
}

/// OLS of `ln y` on `ln x` over the points inside `range` (all points when
/// `None`).
///
/// When every `ln y` is equal the fit is an exact constant: slope 0,
/// `r_squared = 1`, `stderr = 0`.
pub fn fit_power_law(points: &[(f64, f64)], range: Option<FitRange>) -> Result<PowerLawFit, FitError> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| range.is_none_or(|r| r.contains(x)))
        .collect();
    if let Some(&(x, y)) = selected.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(FitError::NonPositiveValue { x, y });
    }
    if selected.len() < 3 {
        return Err(FitError::TooFewPoints(selected.len()));
    }
    let n = selected.len() as f64;
    let lx: Vec<f64> = selected.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = selected.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 || lx.iter().all(|&x| x == lx[0]) {
        return Err(FitError::DegenerateX);
    }
    let x_range = selected
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));

    let y_scale = ly.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    let flat = ly.iter().all(|y| (y - my).abs() <= 8.0 * f64::EPSILON * y_scale);
    if flat {
        return Ok(PowerLawFit {
            exponent: 0.0,
            stderr: 0.0,
            r_squared: 1.0,
            intercept: my,
            n_points: selected.len(),
            range: x_range,
        });
    }

    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let stderr = if selected.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = (1.0 - sse / syy).clamp(0.0, 1.0);
    Ok(PowerLawFit {
        exponent: if slope == 0.0 { 0.0 } else { -slope },
        stderr,
        r_squared,
        intercept,
        n_points: selected.len(),
        range: x_range,
    })
}

/// Degree binning before a fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binning {
    /// One point per observed degree.
    #[default]
    Unit,
    /// Degrees pooled into `[2^m, 2^(m+1))`, mass divided by bin width, placed
    /// at the geometric mean of the bin's first and last degree.
    Log2,
}

impl FromStr for Binning {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unit" => Ok(Binning::Unit),
            "log2" | "log" => Ok(Binning::Log2),
            other => Err(format!("unknown binning {other:?} (expected unit|log2)")),
        }
    }
}

/// The `(k, P(k))` points a degree fit operates on: `k = 0` and empty degrees
/// are dropped.
pub fn degree_points(dd: &DegreeDistribution, binning: Binning) -> Vec<(f64, f64)> {
    let unit = dd.pmf.iter().filter(|(&k, &p)| k > 0 && p > 0.0).map(|(&k, &p)| (k as f64, p));
    match binning {
        Binning::Unit => unit.collect(),
        Binning::Log2 => {
            let mut bins: std::collections::BTreeMap<u32, f64> = Default::default();
            for (k, p) in unit {
                *bins.entry((k as u64).ilog2()).or_default() += p;
            }
            bins.into_iter()
                .map(|(m, mass)| {
                    let lo = (1u64 << m) as f64;
                    let hi = (1u64 << (m + 1)) as f64 - 1.0;
                    ((lo * hi).sqrt(), mass / (hi - lo + 1.0))
                })
                .collect()
        }
    }
}

pub fn fit_degree_exponent(dd: &DegreeDistribution, range: Option<FitRange>) -> Result<PowerLawFit, FitError> {
    fit_degree_exponent_binned(dd, range, Binning::Unit)
}

pub fn fit_degree_exponent_binned(
    dd: &DegreeDistribution,
    range: Option<FitRange>,
    binning: Binning,
) -> Result<PowerLawFit, FitError> {
    fit_power_law(&degree_points(dd, binning), range)
}

/// `C(theta) ~ theta^(-alpha)` over the sweep rows with theta in `range`.
pub fn fit_clustering_scaling(sweep: &[SweepRow], range: FitRange) -> Result<PowerLawFit, FitError> {
    let points: Vec<(f64, f64)> = sweep.iter().map(|r| (r.theta, r.avg_clustering)).collect();
    fit_power_law(&points, Some(range))
}

/// Renders `value(err)` with the error expressed in units of the last digit:
/// two decimals by default, one decimal when both hundredths digits are zero,
/// e.g. `1.98(36)`, `2.2(9)`, `1.00(0)`.
pub fn format_exponent(fit: &PowerLawFit) -> String {
    format_value_error(fit.exponent, fit.stderr)
}

pub fn format_value_error(value: f64, err: f64) -> String {
    let v = (value * 100.0).round() as i64;
    let e = (err.abs() * 100.0).round() as i64;
    if e == 0 {
        return format!("{:.2}(0)", v as f64 / 100.0);
    }
    if v % 10 == 0 && e % 10 == 0 {
        format!("{:.1}({})", v as f64 / 100.0, e / 10)
    } else {
        format!("{:.2}({})", v as f64 / 100.0, e)
    }
}
