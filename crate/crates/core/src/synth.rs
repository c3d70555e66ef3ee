//! Factor-model market generator with switchable regimes.
//!
//! On day `t` of regime `r`, asset `i` in sector `s(i)` has log-return
//!
//! ```text
//! scale_r * (beta_r f(t) + sector_r g_s(i)(t) + sqrt(1 - beta_r^2 - sector_r^2) e_i(t))
//! ```
//!
//! with `f`, `g`, `e` independent standard normals. The bracket has unit
//! variance, so the pairwise correlation is `beta^2` across sectors and
//! `beta^2 + sector^2` within one. `scale_r` is the regime's
//! `idiosyncratic_sigma`.
//!
//! Draws come from ChaCha8 seeded with `seed` through `seed_from_u64`, in the
//! fixed order `f`, then `g_0..g_{S-1}`, then `e_0..e_{N-1}` for every day,
//! with normals from the `rand_distr` ziggurat sampler.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{PricePanel, WindowSpec};

pub const DEFAULT_SEED: u64 = 2008;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub name: String,
    pub n_days: usize,
    /// Loading on the market-wide factor, in [0, 1).
    pub common_loading: f64,
    /// Daily return scale of the regime.
    pub idiosyncratic_sigma: f64,
    pub n_sectors: usize,
    /// Loading on the asset's sector factor, in [0, 1).
    pub sector_loading: f64,
}

impl RegimeSpec {
    /// Sector of asset `i` among `n_assets`: contiguous, near-equal blocks.
    pub fn sector_of(&self, i: usize, n_assets: usize) -> usize {
        i * self.n_sectors / n_assets
    }

    /// Population mean of the off-diagonal correlations for `n_assets`.
    pub fn expected_mean_correlation(&self, n_assets: usize) -> f64 {
        let mut sizes = vec![0usize; self.n_sectors];
        for i in 0..n_assets {
            sizes[self.sector_of(i, n_assets)] += 1;
        }
        let same: usize = sizes.iter().map(|s| s * s.saturating_sub(1) / 2).sum();
        let pairs = n_assets * n_assets.saturating_sub(1) / 2;
        let beta2 = self.common_loading * self.common_loading;
        let sec2 = self.sector_loading * self.sector_loading;
        beta2 + sec2 * same as f64 / pairs as f64
    }
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2006, 6, 2).expect("static date")
}

fn default_initial_price() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_assets: usize,
    /// Total return days; must equal the regime sum.
    pub n_days: usize,
    pub seed: u64,
    #[serde(default = "default_initial_price")]
    pub initial_price: f64,
    /// First trading day; later days skip weekends.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub regimes: Vec<RegimeSpec>,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_assets < 2 {
            return bad(format!("n_assets = {} (need >= 2)", self.n_assets));
        }
        if self.regimes.is_empty() {
            return bad("no regimes".into());
        }
        let total: usize = self.regimes.iter().map(|r| r.n_days).sum();
        if total != self.n_days {
            return bad(format!("regime days sum to {total}, n_days = {}", self.n_days));
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad(format!("initial_price = {}", self.initial_price));
        }
        for r in &self.regimes {
            let (b, s) = (r.common_loading, r.sector_loading);
            if r.n_days == 0 {
                return bad(format!("{}: zero days", r.name));
            }
            if !(0.0..1.0).contains(&b) || !(0.0..1.0).contains(&s) || b * b + s * s >= 1.0 {
                return bad(format!("{}: loadings beta = {b}, sector = {s}", r.name));
            }
            if !(r.idiosyncratic_sigma.is_finite() && r.idiosyncratic_sigma > 0.0) {
                return bad(format!("{}: idiosyncratic_sigma = {}", r.name, r.idiosyncratic_sigma));
            }
            if r.n_sectors == 0 || r.n_sectors > self.n_assets {
                return bad(format!("{}: n_sectors = {}", r.name, r.n_sectors));
            }
        }
        Ok(())
    }

    pub fn tickers(&self) -> Vec<String> {
        let width = (self.n_assets - 1).to_string().len().max(3);
        (0..self.n_assets).map(|i| format!("S{i:0width$}")).collect()
    }

    /// Trading dates of the `n_days + 1` price rows.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.n_days + 1);
        let mut d = self.start_date;
        while out.len() <= self.n_days {
            if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        out
    }

    /// One window per regime spanning exactly its return days. Consecutive
    /// windows share their boundary price row.
    pub fn windows(&self) -> Vec<WindowSpec> {
        let dates = self.dates();
        let mut offset = 0;
        self.regimes
            .iter()
            .map(|r| {
                let w = WindowSpec {
                    name: r.name.clone(),
                    start: dates[offset],
                    end: dates[offset + r.n_days],
                };
                offset += r.n_days;
                w
            })
            .collect()
    }

    /// Sector labels from the first regime's assignment.
    pub fn sectors(&self) -> BTreeMap<String, String> {
        let first = &self.regimes[0];
        self.tickers()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, format!("sector{}", first.sector_of(i, self.n_assets))))
            .collect()
    }
}

/// Calm / crisis / recovery with 50 assets in 5 sectors, 400 days each.
pub fn crisis_scenario() -> SynthSpec {
    let regime = |name: &str, beta: f64, sigma: f64| RegimeSpec {
        name: name.into(),
        n_days: 400,
        common_loading: beta,
        idiosyncratic_sigma: sigma,
        n_sectors: 5,
        sector_loading: 0.25,
    };
    SynthSpec {
        n_assets: 50,
        n_days: 1200,
        seed: DEFAULT_SEED,
        initial_price: default_initial_price(),
        start_date: default_start(),
        regimes: vec![
            regime("calm", 0.45, 0.019),
            regime("crisis", 0.6, 0.025),
            regime("recovery", 0.38, 0.017),
        ],
    }
}

pub fn generate(spec: &SynthSpec) -> Result<PricePanel, SynthError> {
    spec.validate()?;
    let n = spec.n_assets;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut prices = Array2::<f64>::zeros((spec.n_days + 1, n));
    let mut log_level = vec![0.0f64; n];
    prices.row_mut(0).fill(spec.initial_price);

    let mut t = 0;
    for r in &spec.regimes {
        let idio = (1.0 - r.common_loading.powi(2) - r.sector_loading.powi(2)).sqrt();
        let sector: Vec<usize> = (0..n).map(|i| r.sector_of(i, n)).collect();
        let mut g = vec![0.0f64; r.n_sectors];
        for _ in 0..r.n_days {
            let f: f64 = StandardNormal.sample(&mut rng);
            for v in g.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            t += 1;
            for i in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                let ret = r.idiosyncratic_sigma * (r.common_loading * f + r.sector_loading * g[sector[i]] + idio * e);
                log_level[i] += ret;
                prices[[t, i]] = spec.initial_price * log_level[i].exp();
            }
        }
    }
    let panel = PricePanel::new(spec.tickers(), spec.dates(), prices)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(panel.with_sectors(spec.sectors()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrnet::cross_correlation;
    use crate::ingest::{log_returns, slice_window};
    use crate::stats::moments;

    fn one_regime(n: usize, days: usize, beta: f64, sector: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            n_assets: n,
            n_days: days,
            seed,
            initial_price: 50.0,
            start_date: default_start(),
            regimes: vec![RegimeSpec {
                name: "only".into(),
                n_days: days,
                common_loading: beta,
                idiosyncratic_sigma: 0.02,
                n_sectors: 5,
                sector_loading: sector,
            }],
        }
    }

    fn mean_corr(spec: &SynthSpec) -> f64 {
        let p = generate(spec).unwrap();
        let c = cross_correlation(&log_returns(&p).unwrap()).unwrap();
        moments(&c.upper_triangle()).mean
    }

    #[test]
    fn independent_assets() {
        let spec = one_regime(20, 400, 0.0, 0.0, 1);
        assert!(mean_corr(&spec).abs() < 3.0 / (400f64).sqrt());
    }

    #[test]
    fn one_factor_correlation() {
        let spec = one_regime(50, 400, 0.6, 0.0, 3);
        assert!((mean_corr(&spec) - 0.36).abs() < 0.05);
    }

    #[test]
    fn planted_correlation_long_sample() {
        let spec = one_regime(30, 4000, 0.5, 0.3, 11);
        let expected = spec.regimes[0].expected_mean_correlation(30);
        assert!((mean_corr(&spec) - expected).abs() < 0.02, "expected {expected}");
    }

    #[test]
    fn deterministic_bytes() {
        let spec = crisis_scenario();
        let a = generate(&spec).unwrap().to_wide_csv();
        let b = generate(&spec).unwrap().to_wide_csv();
        assert_eq!(a, b);
        let c = generate(&spec.clone().with_seed(1)).unwrap().to_wide_csv();
        assert_ne!(a, c);
    }

    #[test]
    fn scenario_shape_and_windows() {
        let spec = crisis_scenario();
        let p = generate(&spec).unwrap();
        assert_eq!(p.n_tickers(), 50);
        assert_eq!(p.n_rows(), 1201);
        for w in spec.windows() {
            let r = log_returns(&slice_window(&p, &w).unwrap()).unwrap();
            assert_eq!(r.n_returns(), 400);
        }
        let e: Vec<f64> = spec.regimes.iter().map(|r| r.expected_mean_correlation(50)).collect();
        assert!(e[1] > e[0] && e[0] > e[2]);
    }

    #[test]
    fn invalid_specs() {
        let mut s = crisis_scenario();
        s.n_days = 1199;
        assert!(generate(&s).is_err());
        let mut s = crisis_scenario();
        s.regimes[0].common_loading = 0.9;
        s.regimes[0].sector_loading = 0.5;
        assert!(s.validate().is_err());
        let mut s = crisis_scenario();
        s.regimes[0].idiosyncratic_sigma = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = crisis_scenario();
        assert_eq!(SynthSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn weekdays_only() {
        let d = crisis_scenario().dates();
        assert!(d.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }
}
