//! Per-window analysis pipeline and its JSON / TSV outputs.
//!
//! For every window: slice, log-returns, statistics, correlation, threshold
//! networks, sweep, MST, UPGMA and the power-law fits. Results are collected
//! into a [`WindowReport`] plus the text artifacts to be written next to it.
//! Nothing here reads the clock, so identical inputs give identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corrnet::{
    coefficient_distribution, cross_correlation_with, distance_matrix, CorrError, CorrMatrix, DEFAULT_BIN_WIDTH,
};
use crate::exec::Execution;
use crate::graph::DegreeDistribution;
use crate::export::{dendrogram_json, to_newick, ExportError, ExportFormat, LabeledGraph};
use crate::fit::{
    fit_clustering_scaling, fit_degree_exponent, format_exponent, FitError, FitRange, PowerLawFit,
};
use crate::hier::{
    cophenetic_correlation, cophenetic_matrix, pair_height_bands, upgma_with, BandCounts, BandMode, HierError, Merge,
    MergeTree, DEFAULT_BAND_CUTOFFS,
};
use crate::ingest::{log_returns, slice_window, CsvFormat, FillPolicy, IngestError, PricePanel, WindowSpec};
use crate::stats::{mean_volatility, DistStats, StatsError, KURTOSIS_CONVENTION, VOLATILITY_CONVENTION};
use crate::synth::SynthError;
use crate::topo::{
    build_threshold_network, clustering_coefficients, connected_components, degree_distribution, mean_degree,
    sigma_thresholds, sweep_tsv, theta_grid, threshold_sweep_with, Scope, ThresholdGraph, TopoError,
};
use crate::tree::{
    average_tree_length, hub_ranking, kruskal_mst_with, mean_pairwise_path_length, mst_degree_distribution, Hub,
    SpanningTree, TreeError, TREE_LENGTH_CONVENTION,
};
use crate::corrnet::CORRELATION_CONVENTION;

pub const SOFTWARE: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FIT_METHOD: &str = "ols_log_log";
pub const FIT_BINNING: &str = "unit_degree_bins";
pub const THRESHOLD_RULE: &str = "mean_plus_k_sample_std";

/// JSON Schema (draft 2020-12) for `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Hier(#[from] HierError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl PipelineError {
    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Ingest(_)
            | PipelineError::Export(_)
            | PipelineError::Synth(_)
            | PipelineError::Io { .. } => 2,
            PipelineError::Stats(_)
            | PipelineError::Corr(_)
            | PipelineError::Topo(_)
            | PipelineError::Tree(_)
            | PipelineError::Hier(_)
            | PipelineError::Fit(_)
            | PipelineError::NonFinite(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Window,
    Returns,
    Stats,
    Correlation,
    Threshold,
    Sweep,
    Mst,
    Hierarchy,
    Export,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage name");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// A pipeline failure tagged with where it happened.
#[derive(Debug, Error)]
#[error("window {window:?}, stage {stage}: {source}")]
pub struct ReportError {
    pub window: String,
    pub stage: Stage,
    #[source]
    pub source: PipelineError,
}

impl ReportError {
    pub fn new(window: &str, stage: Stage, source: impl Into<PipelineError>) -> Self {
        ReportError {
            window: window.to_string(),
            stage,
            source: source.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        ReportError::new("*", Stage::Config, PipelineError::Config(msg.into()))
    }

    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

/// Inclusive arithmetic theta grid for the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            lo: 0.05,
            hi: 0.95,
            step: 0.025,
        }
    }
}

impl SweepGrid {
    pub fn thetas(&self) -> Vec<f64> {
        theta_grid(self.lo, self.hi, self.step)
    }
}

impl FromStr for SweepGrid {
    type Err = String;
    /// Parses `lo:hi:step`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("{s:?}: expected lo:hi:step"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("{s:?}: bad number {v:?}"));
        let grid = SweepGrid {
            lo: num(lo)?,
            hi: num(hi)?,
            step: num(step)?,
        };
        if !(grid.step > 0.0) || grid.lo > grid.hi || grid.lo < -1.0 || grid.hi > 1.0 {
            return Err(format!("{s:?}: need -1 <= lo <= hi <= 1 and step > 0"));
        }
        Ok(grid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    pub threshold: bool,
    pub sweep: bool,
    pub mst: bool,
    pub hierarchy: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            threshold: true,
            sweep: true,
            mst: true,
            hierarchy: true,
        }
    }
}

/// Everything `analyze` needs besides the price panel. Loadable from TOML;
/// missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: CsvFormat,
    pub fill: FillPolicy,
    pub sectors: Option<PathBuf>,
    /// Empty means one window named `full` spanning the panel.
    pub windows: Vec<WindowSpec>,
    pub thetas: Vec<f64>,
    pub sigma_multiples: Vec<i32>,
    pub sweep: SweepGrid,
    pub clustering_fit_range: FitRange,
    /// Per-window overrides of `clustering_fit_range`.
    pub clustering_fit_ranges: BTreeMap<String, FitRange>,
    pub degree_fit_range: Option<FitRange>,
    pub mst_fit_range: Option<FitRange>,
    pub scope: Scope,
    pub band_cutoffs: Vec<f64>,
    pub band_mode: BandMode,
    pub hubs_top: usize,
    pub bin_width: f64,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub exports: Vec<ExportFormat>,
    pub stages: Stages,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            format: CsvFormat::Wide,
            fill: FillPolicy::None,
            sectors: None,
            windows: Vec::new(),
            thetas: Vec::new(),
            sigma_multiples: vec![1, 2, 3],
            sweep: SweepGrid::default(),
            clustering_fit_range: FitRange::new(0.25, 0.5),
            clustering_fit_ranges: BTreeMap::new(),
            degree_fit_range: None,
            mst_fit_range: None,
            scope: Scope::Largest,
            band_cutoffs: DEFAULT_BAND_CUTOFFS.to_vec(),
            band_mode: BandMode::MergeHeights,
            hubs_top: 10,
            bin_width: DEFAULT_BIN_WIDTH,
            seed: None,
            out: PathBuf::from("out"),
            exports: Vec::new(),
            stages: Stages::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ReportError> {
        toml::from_str(text).map_err(|e| ReportError::config(e.to_string()))
    }

    /// Windows to analyze: the configured ones, or `full` over the panel.
    pub fn resolved_windows(&self, panel: &PricePanel) -> Vec<WindowSpec> {
        if !self.windows.is_empty() {
            return self.windows.clone();
        }
        let dates = panel.dates();
        match (dates.first(), dates.last()) {
            (Some(&start), Some(&end)) => vec![WindowSpec {
                name: "full".into(),
                start,
                end,
            }],
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let s = self.stages;
        if !(s.threshold || s.sweep || s.mst || s.hierarchy) {
            return Err(ReportError::config("no analysis stage selected"));
        }
        if s.threshold && self.thetas.is_empty() && self.sigma_multiples.is_empty() {
            return Err(ReportError::config("threshold stage needs --theta or --sigma-mult values"));
        }
        let mut names = BTreeSet::new();
        for w in &self.windows {
            if !names.insert(dir_name(&w.name)) {
                return Err(ReportError::config(format!("duplicate window name {:?}", w.name)));
            }
        }
        if let Some(t) = self.thetas.iter().find(|t| !t.is_finite()) {
            return Err(ReportError::config(format!("theta {t} is not finite")));
        }
        if !(self.bin_width > 0.0 && self.bin_width <= 2.0) {
            return Err(ReportError::config(format!("bin width {} outside (0, 2]", self.bin_width)));
        }
        if self.hubs_top == 0 {
            return Err(ReportError::config("hubs_top must be positive"));
        }
        if self.band_cutoffs.windows(2).any(|w| w[0] > w[1]) {
            return Err(ReportError::config("band cutoffs must be ascending"));
        }
        Ok(())
    }

    pub fn conventions(&self) -> Conventions {
        Conventions {
            correlation: CORRELATION_CONVENTION,
            kurtosis: KURTOSIS_CONVENTION,
            volatility: VOLATILITY_CONVENTION,
            tree_length: TREE_LENGTH_CONVENTION,
            threshold_rule: THRESHOLD_RULE,
            fit_method: FIT_METHOD,
            fit_binning: FIT_BINNING,
            degree_scope: self.scope,
            band_mode: self.band_mode,
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            software: SOFTWARE,
            version: VERSION,
            seed: self.seed,
            input: self
                .input
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned()),
            conventions: self.conventions(),
        }
    }
}

/// Directory name for a window label.
pub fn dir_name(window: &str) -> String {
    window
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conventions {
    pub correlation: &'static str,
    pub kurtosis: &'static str,
    pub volatility: &'static str,
    pub tree_length: &'static str,
    pub threshold_rule: &'static str,
    pub fit_method: &'static str,
    pub fit_binning: &'static str,
    pub degree_scope: Scope,
    pub band_mode: BandMode,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub software: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub input: Option<String>,
    pub conventions: Conventions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowInfo {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub n_prices: usize,
    pub n_returns: usize,
    pub n_tickers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowStats {
    /// Over the `N(N-1)/2` off-diagonal coefficients.
    pub coefficients: DistStats,
    pub mean_volatility: f64,
    pub bin_width: f64,
    pub histogram_bins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub theta: f64,
    pub sigma_multiple: Option<i32>,
    pub edge_count: usize,
    pub mean_degree: f64,
    pub avg_clustering: f64,
    pub components: usize,
    pub small_clusters: usize,
    pub largest_size: usize,
    pub largest_fraction: f64,
    pub degree_counts: BTreeMap<usize, usize>,
    pub gamma_d: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedThreshold {
    pub theta: f64,
    pub sigma_multiple: Option<i32>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub grid: SweepGrid,
    pub rows: usize,
    pub clustering_fit_range: FitRange,
    pub alpha: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub source: String,
    pub target: String,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MstSummary {
    pub tree_length: f64,
    pub total_weight: f64,
    pub mean_pairwise_path_length: f64,
    pub edges: Vec<MstEdge>,
    pub degree_counts: BTreeMap<usize, usize>,
    pub hubs: Vec<Hub>,
    pub gamma_m: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchySummary {
    pub ccc: f64,
    pub max_height: f64,
    pub merges: Vec<Merge>,
    pub bands: BandCounts,
}

/// One power-law fit, successful or not.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRecord {
    pub name: String,
    /// `degree` or `clustering`.
    pub quantity: &'static str,
    pub requested_range: Option<FitRange>,
    #[serde(flatten)]
    pub outcome: FitOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FitOutcome {
    Ok {
        exponent: f64,
        stderr: f64,
        r_squared: f64,
        intercept: f64,
        n_points: usize,
        x_min: f64,
        x_max: f64,
        formatted: String,
    },
    Error {
        error: String,
    },
}

impl FitRecord {
    fn new<E: fmt::Display>(
        name: String,
        quantity: &'static str,
        requested_range: Option<FitRange>,
        r: Result<PowerLawFit, E>,
    ) -> Self {
        let outcome = match r {
            Ok(fit) => FitOutcome::Ok {
                exponent: fit.exponent,
                stderr: fit.stderr,
                r_squared: fit.r_squared,
                intercept: fit.intercept,
                n_points: fit.n_points,
                x_min: fit.range.0,
                x_max: fit.range.1,
                formatted: format_exponent(&fit),
            },
            Err(e) => FitOutcome::Error { error: e.to_string() },
        };
        FitRecord {
            name,
            quantity,
            requested_range,
            outcome,
        }
    }

    pub fn formatted(&self) -> Option<String> {
        match &self.outcome {
            FitOutcome::Ok { formatted, .. } => Some(formatted.clone()),
            FitOutcome::Error { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowReport {
    pub window: WindowInfo,
    pub stats: WindowStats,
    /// Keyed by the theta value.
    pub threshold_networks: BTreeMap<String, ThresholdRow>,
    pub skipped_thresholds: Vec<SkippedThreshold>,
    pub sweep: Option<SweepSummary>,
    pub mst: Option<MstSummary>,
    pub hierarchy: Option<HierarchySummary>,
    pub fits: Vec<FitRecord>,
    pub provenance: Provenance,
}

/// A window report plus the files destined for its subdirectory.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowOutput {
    pub report: WindowReport,
    /// `(file name, contents)` in a fixed order.
    pub files: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub windows: Vec<WindowReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Side-by-side view of the windows, one table per analysis.
    pub fn summary(&self) -> serde_json::Value {
        let names: Vec<&str> = self.windows.iter().map(|w| w.window.name.as_str()).collect();
        let stats: Vec<_> = self
            .windows
            .iter()
            .map(|w| {
                let c = &w.stats.coefficients;
                serde_json::json!({
                    "window": w.window.name,
                    "mean_correlation": c.mean,
                    "std": c.std,
                    "skewness": c.skewness,
                    "kurtosis": c.kurtosis,
                    "mean_volatility": w.stats.mean_volatility,
                })
            })
            .collect();
        let thresholds: Vec<_> = self
            .windows
            .iter()
            .flat_map(|w| {
                w.threshold_networks.values().map(move |r| {
                    serde_json::json!({
                        "window": w.window.name,
                        "sigma_multiple": r.sigma_multiple,
                        "theta": r.theta,
                        "largest_fraction": r.largest_fraction,
                        "gamma_d": r.gamma_d,
                    })
                })
            })
            .collect();
        let clustering: Vec<_> = self
            .windows
            .iter()
            .filter_map(|w| {
                w.sweep.as_ref().map(|s| {
                    serde_json::json!({
                        "window": w.window.name,
                        "range": s.clustering_fit_range,
                        "alpha": s.alpha,
                    })
                })
            })
            .collect();
        let mst: Vec<_> = self
            .windows
            .iter()
            .filter_map(|w| {
                w.mst.as_ref().map(|m| {
                    serde_json::json!({
                        "window": w.window.name,
                        "tree_length": m.tree_length,
                        "top_hub": m.hubs.first(),
                        "gamma_m": m.gamma_m,
                    })
                })
            })
            .collect();
        let hierarchy: Vec<_> = self
            .windows
            .iter()
            .filter_map(|w| {
                w.hierarchy.as_ref().map(|h| {
                    serde_json::json!({
                        "window": w.window.name,
                        "ccc": h.ccc,
                        "band_cutoffs": h.bands.cutoffs,
                        "band_counts": h.bands.counts,
                    })
                })
            })
            .collect();
        serde_json::json!({
            "windows": names,
            "stats": stats,
            "threshold_networks": thresholds,
            "clustering": clustering,
            "mst": mst,
            "hierarchy": hierarchy,
        })
    }
}

/// Threshold requests after resolving sigma multiples.
fn threshold_targets(c: &CorrMatrix, cfg: &RunConfig) -> Result<Vec<(Option<i32>, f64)>, TopoError> {
    let mut out = Vec::new();
    if !cfg.sigma_multiples.is_empty() {
        let thetas = sigma_thresholds(c, &cfg.sigma_multiples)?;
        out.extend(cfg.sigma_multiples.iter().map(|&k| Some(k)).zip(thetas));
    }
    out.extend(cfg.thetas.iter().map(|&t| (None, t)));
    Ok(out)
}

fn threshold_label(multiple: Option<i32>, theta: f64) -> String {
    match multiple {
        Some(k) => format!("k{k}"),
        None => format!("t{theta}"),
    }
}

fn ensure_finite(window: &str, stage: Stage, what: &str, values: &[f64]) -> Result<(), ReportError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ReportError::new(window, stage, PipelineError::NonFinite(what.to_string())))
    }
}

fn graph_files(
    stem: &str,
    graph: &LabeledGraph,
    formats: &[ExportFormat],
    files: &mut Vec<(String, String)>,
) -> Result<(), ExportError> {
    for &f in formats {
        if matches!(f, ExportFormat::Dot | ExportFormat::Graphml | ExportFormat::Edgelist | ExportFormat::Json) {
            files.push((format!("{stem}.{}", f.extension()), graph.write(f)?));
        }
    }
    Ok(())
}

/// The row and the degree distribution over `scope`; `None` when the scope
/// has no edges.
fn threshold_row(
    g: &ThresholdGraph,
    multiple: Option<i32>,
    scope: Scope,
) -> Result<(ThresholdRow, Option<DegreeDistribution>), TopoError> {
    let comps = connected_components(g);
    let dd = match degree_distribution(g, scope) {
        Ok(dd) => Some(dd),
        Err(TopoError::EmptyScope) => None,
        Err(e) => return Err(e),
    };
    Ok((
        ThresholdRow {
            theta: g.theta(),
            sigma_multiple: multiple,
            edge_count: g.edges().len(),
            mean_degree: mean_degree(g),
            avg_clustering: clustering_coefficients(g).average,
            components: comps.components.len(),
            small_clusters: comps.small_cluster_count(),
            largest_size: comps.largest().len(),
            largest_fraction: comps.largest_fraction,
            degree_counts: dd.as_ref().map(|d| d.counts.clone()).unwrap_or_default(),
            gamma_d: None,
        },
        dd,
    ))
}

/// Runs every enabled stage on one window.
pub fn analyze_window(
    panel: &PricePanel,
    window: &WindowSpec,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<WindowOutput, ReportError> {
    let name = window.name.as_str();
    let err = |stage: Stage| move |e: PipelineError| ReportError::new(name, stage, e);

    let sub = slice_window(panel, window).map_err(|e| err(Stage::Window)(e.into()))?;
    let returns = log_returns(&sub).map_err(|e| err(Stage::Returns)(e.into()))?;
    let corr = cross_correlation_with(&returns, exec).map_err(|e| err(Stage::Correlation)(e.into()))?;
    let dist_c = coefficient_distribution(&corr, cfg.bin_width).map_err(|e| err(Stage::Stats)(e.into()))?;
    let vol = mean_volatility(&returns);
    let c = &dist_c.stats;
    ensure_finite(name, Stage::Stats, "coefficient statistics", &[c.mean, c.std, vol.mean_volatility])?;

    let tickers = corr.tickers().to_vec();
    let sectors = sub.sector_labels();
    let mut files = vec![("histogram.tsv".to_string(), dist_c.histogram_tsv())];
    let mut fits = Vec::new();
    let export_err = |e: ExportError| err(Stage::Export)(e.into());

    if cfg.exports.contains(&ExportFormat::Csv) {
        files.push(("corr.csv".into(), corr.to_csv()));
    }
    if cfg.exports.contains(&ExportFormat::Json) {
        files.push((
            "corr.json".into(),
            serde_json::to_string_pretty(&corr.to_json()).expect("json") + "\n",
        ));
    }

    let mut threshold_networks = BTreeMap::new();
    let mut skipped_thresholds = Vec::new();
    if cfg.stages.threshold {
        let targets = threshold_targets(&corr, cfg).map_err(|e| err(Stage::Threshold)(e.into()))?;
        for (multiple, theta) in targets {
            if !(-1.0..=1.0).contains(&theta) {
                skipped_thresholds.push(SkippedThreshold {
                    theta,
                    sigma_multiple: multiple,
                    reason: format!("theta {theta} outside [-1, 1]"),
                });
                continue;
            }
            let key = theta.to_string();
            if threshold_networks.contains_key(&key) {
                continue;
            }
            let g = build_threshold_network(&corr, theta).map_err(|e| err(Stage::Threshold)(e.into()))?;
            let (mut row, dd) = threshold_row(&g, multiple, cfg.scope).map_err(|e| err(Stage::Threshold)(e.into()))?;
            ensure_finite(name, Stage::Threshold, "threshold row", &[row.mean_degree, row.avg_clustering])?;
            let label = threshold_label(multiple, theta);
            let record = FitRecord::new(
                format!("gamma_d:{label}"),
                "degree",
                cfg.degree_fit_range,
                match &dd {
                    Some(dd) => fit_degree_exponent(dd, cfg.degree_fit_range).map_err(|e| e.to_string()),
                    None => Err("no edges at this threshold".to_string()),
                },
            );
            row.gamma_d = record.formatted();
            fits.push(record);
            let lg = LabeledGraph::from_threshold(&format!("{name} theta={theta}"), &g, &tickers, &sectors);
            graph_files(&format!("threshold_{label}"), &lg, &cfg.exports, &mut files).map_err(export_err)?;
            threshold_networks.insert(key, row);
        }
    }

    let mut sweep = None;
    if cfg.stages.sweep {
        let thetas = cfg.sweep.thetas();
        let rows = threshold_sweep_with(&corr, &thetas, exec).map_err(|e| err(Stage::Sweep)(e.into()))?;
        let range = cfg.clustering_fit_ranges.get(name).copied().unwrap_or(cfg.clustering_fit_range);
        let record = FitRecord::new("alpha".into(), "clustering", Some(range), fit_clustering_scaling(&rows, range));
        sweep = Some(SweepSummary {
            grid: cfg.sweep,
            rows: rows.len(),
            clustering_fit_range: range,
            alpha: record.formatted(),
        });
        fits.push(record);
        files.push(("sweep.tsv".into(), sweep_tsv(&rows)));
    }

    let dist = distance_matrix(&corr);
    let mut mst = None;
    if cfg.stages.mst {
        let t: SpanningTree = kruskal_mst_with(&dist, exec).map_err(|e| err(Stage::Mst)(e.into()))?;
        let top = cfg.hubs_top.min(t.n());
        let hubs = hub_ranking(&t, &tickers, top).map_err(|e| err(Stage::Mst)(e.into()))?;
        let dd = mst_degree_distribution(&t);
        let record = FitRecord::new(
            "gamma_m".into(),
            "degree",
            cfg.mst_fit_range,
            fit_degree_exponent(&dd, cfg.mst_fit_range),
        );
        let summary = MstSummary {
            tree_length: average_tree_length(&t),
            total_weight: t.total_weight(),
            mean_pairwise_path_length: mean_pairwise_path_length(&t),
            edges: t
                .edges()
                .iter()
                .map(|e| MstEdge {
                    a: e.a,
                    b: e.b,
                    source: tickers[e.a].clone(),
                    target: tickers[e.b].clone(),
                    distance: e.weight,
                })
                .collect(),
            degree_counts: dd.counts.clone(),
            hubs: hubs.0,
            gamma_m: record.formatted(),
        };
        ensure_finite(
            name,
            Stage::Mst,
            "tree summary",
            &[summary.tree_length, summary.total_weight, summary.mean_pairwise_path_length],
        )?;
        fits.push(record);
        let lg = LabeledGraph::from_tree(&format!("{name} mst"), &t, &tickers, &sectors);
        graph_files("mst", &lg, &cfg.exports, &mut files).map_err(export_err)?;
        mst = Some(summary);
    }

    let mut hierarchy = None;
    if cfg.stages.hierarchy {
        let hier_err = |e: HierError| err(Stage::Hierarchy)(e.into());
        let tree: MergeTree = upgma_with(&dist, exec).map_err(hier_err)?;
        let coph = cophenetic_matrix(&tree);
        let ccc = cophenetic_correlation(&dist, &coph).map_err(hier_err)?;
        let bands = pair_height_bands(&tree, &cfg.band_cutoffs, cfg.band_mode).map_err(hier_err)?;
        let max_height = tree.merges().last().map_or(0.0, |m| m.height);
        ensure_finite(name, Stage::Hierarchy, "hierarchy summary", &[ccc, max_height])?;
        if cfg.exports.contains(&ExportFormat::Newick) {
            files.push(("dendrogram.nwk".into(), to_newick(&tree, &tickers)));
        }
        if cfg.exports.contains(&ExportFormat::Json) {
            files.push(("dendrogram.json".into(), dendrogram_json(&tree, &tickers)));
        }
        hierarchy = Some(HierarchySummary {
            ccc,
            max_height,
            merges: tree.merges().to_vec(),
            bands,
        });
    }

    let report = WindowReport {
        window: WindowInfo {
            name: window.name.clone(),
            start: window.start,
            end: window.end,
            first_date: sub.dates()[0],
            last_date: *sub.dates().last().expect("nonempty window"),
            n_prices: sub.n_rows(),
            n_returns: returns.n_returns(),
            n_tickers: returns.n_tickers(),
        },
        stats: WindowStats {
            coefficients: dist_c.stats.clone(),
            mean_volatility: vol.mean_volatility,
            bin_width: dist_c.bin_width,
            histogram_bins: dist_c.histogram.len(),
        },
        threshold_networks,
        skipped_thresholds,
        sweep,
        mst,
        hierarchy,
        fits,
        provenance: cfg.provenance(),
    };
    Ok(WindowOutput { report, files })
}

/// Analyzes every window; windows run through `exec`. The first failing
/// window in configuration order is reported.
pub fn analyze(panel: &PricePanel, cfg: &RunConfig, exec: Execution) -> Result<(Report, Vec<WindowOutput>), ReportError> {
    cfg.validate()?;
    let windows = cfg.resolved_windows(panel);
    if windows.is_empty() {
        return Err(ReportError::config("no windows to analyze"));
    }
    let outputs: Vec<WindowOutput> = exec
        .map_slice(&windows, |w| analyze_window(panel, w, cfg, exec))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let report = Report {
        provenance: cfg.provenance(),
        windows: outputs.iter().map(|o| o.report.clone()).collect(),
    };
    Ok((report, outputs))
}

fn write_file(path: &Path, contents: &str, window: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| {
        ReportError::new(
            window,
            Stage::Write,
            PipelineError::Io {
                path: path.to_path_buf(),
                source,
            },
        )
    })
}

fn create_dir(path: &Path, window: &str) -> Result<(), ReportError> {
    std::fs::create_dir_all(path).map_err(|source| {
        ReportError::new(
            window,
            Stage::Write,
            PipelineError::Io {
                path: path.to_path_buf(),
                source,
            },
        )
    })
}

/// Writes `report.json`, `summary.json` and one subdirectory per window.
pub fn write_outputs(out: &Path, report: &Report, outputs: &[WindowOutput]) -> Result<(), ReportError> {
    create_dir(out, "*")?;
    write_file(&out.join("report.json"), &report.to_json(), "*")?;
    let summary = serde_json::to_string_pretty(&report.summary()).expect("summary serializes") + "\n";
    write_file(&out.join("summary.json"), &summary, "*")?;
    for o in outputs {
        let name = &o.report.window.name;
        let dir = out.join(dir_name(name));
        create_dir(&dir, name)?;
        for (file, contents) in &o.files {
            write_file(&dir.join(file), contents, name)?;
        }
    }
    Ok(())
}

/// Artifact selectable by the `export` command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Mst,
    Threshold,
    Dendrogram,
    Corr,
}

impl FromStr for GraphKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mst" => Ok(GraphKind::Mst),
            "threshold" | "tn" => Ok(GraphKind::Threshold),
            "dendrogram" | "hierarchy" => Ok(GraphKind::Dendrogram),
            "corr" | "correlation" => Ok(GraphKind::Corr),
            other => Err(format!("unknown graph {other:?} (expected mst|threshold|dendrogram|corr)")),
        }
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Mst => "mst",
            GraphKind::Threshold => "threshold",
            GraphKind::Dendrogram => "dendrogram",
            GraphKind::Corr => "corr",
        })
    }
}

/// Threshold choice for a threshold-graph export.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaChoice {
    Value(f64),
    SigmaMultiple(i32),
}

/// Computes one artifact for one window and serializes it.
pub fn export_artifact(
    panel: &PricePanel,
    window: &WindowSpec,
    kind: GraphKind,
    theta: Option<ThetaChoice>,
    format: ExportFormat,
    exec: Execution,
) -> Result<String, ReportError> {
    let name = window.name.as_str();
    let err = |stage: Stage| move |e: PipelineError| ReportError::new(name, stage, e);
    let mismatch = || {
        ReportError::new(
            name,
            Stage::Export,
            ExportError::FormatMismatch {
                format,
                artifact: match kind {
                    GraphKind::Mst => "mst",
                    GraphKind::Threshold => "threshold graph",
                    GraphKind::Dendrogram => "dendrogram",
                    GraphKind::Corr => "correlation matrix",
                },
            },
        )
    };
    // reject bad combinations before any numerics run
    let ok = match kind {
        GraphKind::Mst | GraphKind::Threshold => matches!(
            format,
            ExportFormat::Dot | ExportFormat::Graphml | ExportFormat::Edgelist | ExportFormat::Json
        ),
        GraphKind::Dendrogram => matches!(format, ExportFormat::Newick | ExportFormat::Json),
        GraphKind::Corr => matches!(format, ExportFormat::Csv | ExportFormat::Json),
    };
    if !ok {
        return Err(mismatch());
    }
    if kind == GraphKind::Threshold && theta.is_none() {
        return Err(ReportError::new(
            name,
            Stage::Export,
            ExportError::MissingArtifact("threshold graph needs --theta or --sigma-mult".into()),
        ));
    }

    let sub = slice_window(panel, window).map_err(|e| err(Stage::Window)(e.into()))?;
    let returns = log_returns(&sub).map_err(|e| err(Stage::Returns)(e.into()))?;
    let corr = cross_correlation_with(&returns, exec).map_err(|e| err(Stage::Correlation)(e.into()))?;
    let tickers = corr.tickers().to_vec();
    let sectors = sub.sector_labels();
    let export_err = |e: ExportError| err(Stage::Export)(e.into());
    match kind {
        GraphKind::Corr => Ok(match format {
            ExportFormat::Csv => corr.to_csv(),
            _ => serde_json::to_string_pretty(&corr.to_json()).expect("json") + "\n",
        }),
        GraphKind::Threshold => {
            let theta = match theta.expect("checked above") {
                ThetaChoice::Value(v) => v,
                ThetaChoice::SigmaMultiple(k) => {
                    sigma_thresholds(&corr, &[k]).map_err(|e| err(Stage::Threshold)(e.into()))?[0]
                }
            };
            let g = build_threshold_network(&corr, theta).map_err(|e| err(Stage::Threshold)(e.into()))?;
            LabeledGraph::from_threshold(&format!("{name} theta={theta}"), &g, &tickers, &sectors)
                .write(format)
                .map_err(export_err)
        }
        GraphKind::Mst => {
            let t = kruskal_mst_with(&distance_matrix(&corr), exec).map_err(|e| err(Stage::Mst)(e.into()))?;
            LabeledGraph::from_tree(&format!("{name} mst"), &t, &tickers, &sectors)
                .write(format)
                .map_err(export_err)
        }
        GraphKind::Dendrogram => {
            let tree = upgma_with(&distance_matrix(&corr), exec).map_err(|e| err(Stage::Hierarchy)(e.into()))?;
            Ok(match format {
                ExportFormat::Newick => to_newick(&tree, &tickers),
                _ => dendrogram_json(&tree, &tickers),
            })
        }
    }
}
