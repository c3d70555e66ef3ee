//! Correlation-network analytics for panels of asset price series.
//!
//! The pipeline runs per analysis window:
//!
//! 1. [`ingest`] parses price CSVs, slices windows and computes log-returns.
//! 2. [`corrnet`] builds the cross-correlation matrix and the distance
//!    `d_ij = sqrt(2 (1 - C_ij))`.
//! 3. [`topo`] thresholds the correlation matrix into graphs and measures
//!    components, degrees and clustering coefficients.
//! 4. [`tree`] extracts the minimum spanning tree of the distance matrix.
//! 5. [`hier`] runs average-linkage clustering and the cophenetic correlation.
//! 6. [`fit`] estimates power-law exponents by log-log least squares.
//!
//! [`synth`] generates factor-model markets with known correlation structure,
//! and [`report`] ties everything together into the JSON report the CLI emits.
//!
//! Data-parallel inner loops (pair sums, sweeps, arg-min scans) run on rayon
//! when the `parallel` feature is enabled. Every parallel path produces output
//! bit-identical to its serial counterpart; see [`Execution`].

pub mod corrnet;
pub mod exec;
pub mod export;
pub mod fit;
pub mod graph;
pub mod hier;
pub mod ingest;
pub mod report;
pub mod stats;
pub mod synth;
pub mod topo;
pub mod tree;

pub mod cli;

pub use exec::Execution;
