//! Descriptive statistics for return panels and coefficient distributions.
//!
//! Skewness and kurtosis are the population moment ratios
//! `(1/n) Σ z^3` and `(1/n) Σ z^4` with `z = (x - mean) / σ_pop`. Kurtosis is
//! raw (a Gaussian gives 3, not 0).

use serde::Serialize;
use thiserror::Error;

use crate::ingest::ReturnPanel;

pub const KURTOSIS_CONVENTION: &str = "raw";
pub const VOLATILITY_CONVENTION: &str = "cross_sectional_std";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistStats {
    pub n: usize,
    pub mean: f64,
    /// Sample (n-1) standard deviation.
    pub std: f64,
    /// `None` when the sample has zero spread.
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Moments of `values`; the caller guarantees `values` is nonempty.
/// A single value gets `std = 0`.
pub(crate) fn moments(values: &[f64]) -> DistStats {
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    let std = if n > 1 { (m2 / (nf - 1.0)).sqrt() } else { 0.0 };
    let pop_std = (m2 / nf).sqrt();
    let (skewness, kurtosis) = if pop_std > 0.0 {
        let (m3, m4) = values.iter().fold((0.0, 0.0), |(s3, s4), x| {
            let z = (x - mean) / pop_std;
            (s3 + z * z * z, s4 + z * z * z * z)
        });
        (Some(m3 / nf), Some(m4 / nf))
    } else {
        (None, None)
    };
    DistStats {
        n,
        mean,
        std,
        skewness,
        kurtosis,
    }
}

pub fn dist_stats(values: &[f64]) -> Result<DistStats, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewSamples(values.len()));
    }
    Ok(moments(values))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolatilityReport {
    pub per_day: Vec<f64>,
    pub mean_volatility: f64,
}

/// Per-day cross-sectional sample standard deviation of raw returns, and its
/// time average. A single-ticker panel has zero cross-sectional spread.
pub fn mean_volatility(returns: &ReturnPanel) -> VolatilityReport {
    let per_day: Vec<f64> = returns
        .raw
        .rows()
        .into_iter()
        .map(|row| crate::ingest::sample_std(row.iter().copied()))
        .collect();
    let mean_volatility = if per_day.is_empty() {
        0.0
    } else {
        per_day.iter().sum::<f64>() / per_day.len() as f64
    };
    VolatilityReport {
        per_day,
        mean_volatility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn symmetric_sample() {
        let s = dist_stats(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_abs_diff_eq!(s.skewness.unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_evaluated_moments() {
        // deviations -1,-1,-1,3; population variance 3
        let s = dist_stats(&[1.0, 1.0, 1.0, 5.0]).unwrap();
        assert_abs_diff_eq!(s.mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.skewness.unwrap(), 24.0 / 3f64.powf(1.5) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.skewness.unwrap(), 1.1547, epsilon = 1e-4);
        assert_abs_diff_eq!(s.kurtosis.unwrap(), 7.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_kurtosis_near_three() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = dist_stats(&xs).unwrap();
        // sampling std of kurtosis ≈ sqrt(24/n) ≈ 0.011
        assert_abs_diff_eq!(s.kurtosis.unwrap(), 3.0, epsilon = 0.06);
        assert_abs_diff_eq!(s.skewness.unwrap(), 0.0, epsilon = 0.03);
    }

    #[test]
    fn too_few() {
        assert_eq!(dist_stats(&[1.0]), Err(StatsError::TooFewSamples(1)));
    }

    #[test]
    fn constant_sample_has_no_shape_moments() {
        let s = dist_stats(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.kurtosis, None);
    }

    fn returns(raw: ndarray::Array2<f64>) -> ReturnPanel {
        let n = raw.ncols();
        ReturnPanel {
            tickers: (0..n).map(|i| format!("T{i}")).collect(),
            dates: vec![],
            normalized: raw.clone(),
            raw,
            sigma: vec![1.0; n],
        }
    }

    #[test]
    fn volatility_examples() {
        let v = mean_volatility(&returns(array![[0.01, 0.01], [0.02, 0.02]]));
        assert_eq!(v.per_day, vec![0.0, 0.0]);
        assert_eq!(v.mean_volatility, 0.0);

        let v = mean_volatility(&returns(array![[0.01, 0.03]]));
        assert_abs_diff_eq!(v.per_day[0], 0.014_142, epsilon = 1e-6);
    }
}
