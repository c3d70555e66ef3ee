//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;

use marketnet::corrnet::{cross_correlation, distance_matrix, CorrMatrix, DistMatrix};
use marketnet::export::{parse_dot, parse_graphml, parse_newick, to_dot, to_graphml, to_newick, LabeledGraph};
use marketnet::fit::{fit_degree_exponent, fit_power_law, format_exponent, format_value_error, PowerLawFit};
use marketnet::graph::DegreeDistribution;
use marketnet::hier::{cophenetic_correlation, cophenetic_matrix, upgma};
use marketnet::ingest::{log_returns, PricePanel};
use marketnet::report::{analyze, RunConfig, Stages, REPORT_SCHEMA};
use marketnet::synth::{crisis_scenario, generate, DEFAULT_SEED};
use marketnet::topo::{build_threshold_network, connected_components, mean_degree, theta_grid};
use marketnet::tree::{average_tree_length, kruskal_mst};
use marketnet::Execution;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn dist(m: Array2<f64>) -> DistMatrix {
    DistMatrix::from_values(common::tickers(m.nrows()), m).unwrap()
}

fn random_panel(rng: &mut impl Rng, n: usize, rows: usize) -> PricePanel {
    let start = chrono::NaiveDate::from_ymd_opt(2008, 1, 1).unwrap();
    let dates = (0..rows).map(|k| start + chrono::Days::new(k as u64)).collect();
    let prices = Array2::from_shape_fn((rows, n), |_| rng.random_range(1.0..100.0));
    PricePanel::new(common::tickers(n), dates, prices).unwrap()
}

fn mst_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let mut matches = 0;
    let total = 200;
    for k in 0..total {
        let n = 4 + k % 4;
        let m = common::random_symmetric(&mut rng, n, 0.0, 2.0);
        let t = kruskal_mst(&dist(m.clone())).unwrap();
        let (best, best_edges) = common::exhaustive_mst(&m);
        let mut edges: Vec<(usize, usize)> = t.edges().iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect();
        edges.sort_unstable();
        if edges == best_edges && (t.total_weight() - best).abs() <= 1e-12 {
            matches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        matches == total && within(elapsed, Duration::from_secs(10)),
        format!("{matches}/{total} trees equal the exhaustive optimum, {elapsed:.2?} (limit 10s)"),
    )
}

fn upgma_oracle() -> Outcome {
    let mut rng = common::rng(2);
    let total = 100;
    let mut agree = 0;
    let mut worst: f64 = 0.0;
    let mut ultrametric_violations = 0;
    for k in 0..total {
        let n = 4 + k % 9;
        let m = common::random_symmetric(&mut rng, n, 0.05, 2.0);
        let tree = upgma(&dist(m.clone())).unwrap();
        let oracle = common::naive_upgma(&m);
        let members = tree.members();
        let mut same = true;
        for (got, want) in tree.merges().iter().zip(&oracle) {
            worst = worst.max((got.height - want.height).abs());
            same &= (got.height - want.height).abs() <= 1e-10
                && members[got.left] == want.left
                && members[got.right] == want.right;
        }
        if same {
            agree += 1;
        }
        let c = cophenetic_matrix(&tree);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if c.get(i, j) > c.get(i, l).max(c.get(l, j)) {
                        ultrametric_violations += 1;
                    }
                }
            }
        }
    }
    outcome(
        agree == total && ultrametric_violations == 0,
        format!(
            "{agree}/{total} dendrograms equal the re-scan (max height diff {worst:.1e}), {ultrametric_violations} ultrametric violations"
        ),
    )
}

fn ccc_check() -> Outcome {
    let mut rng = common::rng(3);
    let mut worst_ultra: f64 = 0.0;
    let mut worst_direct: f64 = 0.0;
    for k in 0..100 {
        let n = 3 + k % 10;
        let u = dist(common::random_ultrametric(&mut rng, n));
        let ccc = cophenetic_correlation(&u, &cophenetic_matrix(&upgma(&u).unwrap())).unwrap();
        worst_ultra = worst_ultra.max((ccc - 1.0).abs());

        let d = dist(common::random_symmetric(&mut rng, n, 0.05, 2.0));
        let c = cophenetic_matrix(&upgma(&d).unwrap());
        let ccc = cophenetic_correlation(&d, &c).unwrap();
        let (mut dv, mut cv) = (Vec::new(), Vec::new());
        for i in 0..n {
            for j in i + 1..n {
                dv.push(d.get(i, j));
                cv.push(c.get(i, j));
            }
        }
        worst_direct = worst_direct.max((ccc - common::pearson(&dv, &cv)).abs());
    }
    outcome(
        worst_ultra <= 1e-12 && worst_direct <= 1e-12,
        format!("ultrametric |CCC-1| <= {worst_ultra:.1e}, random |CCC-pearson| <= {worst_direct:.1e} (tol 1e-12)"),
    )
}

fn correlation_oracle() -> Outcome {
    let mut rng = common::rng(4);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let n = 2 + k % 7;
        let rows = 4 + k % 18;
        let r = log_returns(&random_panel(&mut rng, n, rows)).unwrap();
        let c = cross_correlation(&r).unwrap();
        let table: Vec<Vec<f64>> = r.raw.rows().into_iter().map(|row| row.to_vec()).collect();
        let oracle = common::naive_correlation(&table);
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((c.get(i, j) - oracle[i][j]).abs());
            }
        }
    }
    let mut m = Array2::from_elem((3, 3), 1.0);
    m[[0, 2]] = -1.0;
    m[[2, 0]] = -1.0;
    m[[1, 2]] = -1.0;
    m[[2, 1]] = -1.0;
    let d = distance_matrix(&CorrMatrix::from_values(common::tickers(3), m).unwrap());
    let endpoints = d.get(0, 1) == 0.0 && d.get(0, 2) == 2.0 && d.get(1, 2) == 2.0;
    outcome(
        worst <= 1e-12 && endpoints,
        format!("max |C - definition| = {worst:.1e} (tol 1e-12); d(C=1)=0 and d(C=-1)=2: {endpoints}"),
    )
}

fn threshold_monotonicity() -> Outcome {
    let mut rng = common::rng(5);
    let mut violations = 0;
    let mut graphs = 0;
    for k in 0..100 {
        let n = 3 + k % 20;
        let c = if k % 2 == 0 {
            cross_correlation(&log_returns(&random_panel(&mut rng, n, 30)).unwrap()).unwrap()
        } else {
            let mut m = common::random_symmetric(&mut rng, n, -1.0, 1.0);
            for i in 0..n {
                m[[i, i]] = 1.0;
            }
            CorrMatrix::from_values(common::tickers(n), m).unwrap()
        };
        let mut prev: Option<(usize, f64, usize)> = None;
        for theta in theta_grid(-1.0, 1.0, 0.025) {
            let g = build_threshold_network(&c, theta).unwrap();
            graphs += 1;
            if g.degrees().iter().sum::<usize>() != 2 * g.edges().len() {
                violations += 1;
            }
            let now = (g.edges().len(), mean_degree(&g), connected_components(&g).largest().len());
            if let Some(p) = prev {
                if now.0 > p.0 || now.1 > p.1 || now.2 > p.2 {
                    violations += 1;
                }
            }
            prev = Some(now);
        }
    }
    outcome(violations == 0, format!("{graphs} graphs, {violations} violations of monotonicity or handshake"))
}

/// Inverse-CDF sampling from `P(k) ∝ k^-gamma` on `1..=k_max`.
fn sample_power_law(rng: &mut impl Rng, gamma: f64, k_max: usize, draws: usize) -> Vec<usize> {
    let weights: Vec<f64> = (1..=k_max).map(|k| (k as f64).powf(-gamma)).collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    (0..draws)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.iter().position(|&c| u <= c).unwrap_or(k_max - 1) + 1
        })
        .collect()
}

fn power_law_recovery() -> Outcome {
    let start = Instant::now();
    let mut exact_ok = true;
    let mut exact_detail = Vec::new();
    for gamma in [0.85, 1.98, 2.2, 3.5] {
        let pts: Vec<(f64, f64)> = (1..=10).map(|x| (x as f64, (x as f64).powf(-gamma))).collect();
        let fit = fit_power_law(&pts, None).unwrap();
        exact_ok &= (fit.exponent - gamma).abs() <= 1e-10 && (fit.r_squared - 1.0).abs() <= 1e-12;
        exact_detail.push(format!("{:.2e}", (fit.exponent - gamma).abs()));
    }
    let degrees = sample_power_law(&mut common::rng(6), 2.2, 20, 10_000);
    let fit = fit_degree_exponent(&DegreeDistribution::from_degrees(degrees), None).unwrap();
    let sampled_ok = (fit.exponent - 2.2).abs() <= 0.2;
    let elapsed = start.elapsed();
    outcome(
        exact_ok && sampled_ok && within(elapsed, Duration::from_secs(1)),
        format!(
            "exact errors [{}]; sampled gamma=2.2 -> {:.3} (tol 0.2); {elapsed:.2?} (limit 1s)",
            exact_detail.join(", "),
            fit.exponent
        ),
    )
}

fn crisis_signature() -> Outcome {
    let start = Instant::now();
    let seeds = 20;
    let (mut corr, mut length, mut ccc) = (0, 0, 0);
    let mut misses = Vec::new();
    for seed in DEFAULT_SEED..DEFAULT_SEED + seeds {
        let spec = crisis_scenario().with_seed(seed);
        let panel = generate(&spec).unwrap();
        let cfg = RunConfig {
            windows: spec.windows(),
            stages: Stages {
                threshold: false,
                sweep: false,
                mst: true,
                hierarchy: true,
            },
            ..RunConfig::default()
        };
        let (report, _) = analyze(&panel, &cfg, Execution::Parallel).unwrap();
        let w = &report.windows;
        let c: Vec<f64> = w.iter().map(|r| r.stats.coefficients.mean).collect();
        let l: Vec<f64> = w.iter().map(|r| r.mst.as_ref().unwrap().tree_length).collect();
        let h: Vec<f64> = w.iter().map(|r| r.hierarchy.as_ref().unwrap().ccc).collect();
        corr += (c[1] > c[0] && c[1] > c[2]) as u64;
        length += (l[1] < l[0] && l[1] < l[2]) as u64;
        ccc += (h[1] > h[0] && h[1] > h[2]) as u64;
        for (label, hit) in [
            ("corr", c[1] > c[0] && c[1] > c[2]),
            ("L", l[1] < l[0] && l[1] < l[2]),
            ("CCC", h[1] > h[0] && h[1] > h[2]),
        ] {
            if !hit {
                misses.push(format!("{label}@{seed}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        corr >= 19 && length >= 19 && ccc >= 19 && within(elapsed, Duration::from_secs(60)),
        format!(
            "seeds with crisis ordering: mean corr {corr}/{seeds}, tree length {length}/{seeds}, CCC {ccc}/{seeds} (need 19); misses [{}]; {elapsed:.2?} (limit 60s)",
            misses.join(" ")
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    let mut sink_out = Vec::new();
    let mut sink_err = Vec::new();
    let code = marketnet::cli::run(
        std::iter::once("marketnet").chain(args.iter().copied()),
        &mut sink_out,
        &mut sink_err,
    );
    if code != 0 {
        eprintln!("{}", String::from_utf8_lossy(&sink_err));
    }
    code
}

fn tree_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn analyze_into(dir: &Path, csv: &Path, windows: &Path, out: &str, serial: bool) -> i32 {
    let out = dir.join(out);
    let mut args = vec![
        "analyze",
        "--input",
        csv.to_str().unwrap(),
        "--windows-file",
        windows.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--export",
        "dot",
        "--export",
        "graphml",
        "--export",
        "edgelist",
        "--export",
        "newick",
        "--export",
        "json",
        "--export",
        "csv",
    ];
    if serial {
        args.push("--serial");
    }
    run_cli(&args)
}

fn determinism(dir: &Path) -> Outcome {
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    let windows = dir.join("windows.csv");
    let ok_synth = run_cli(&["synth", "--out", a.to_str().unwrap(), "--windows-out", windows.to_str().unwrap()]) == 0
        && run_cli(&["synth", "--out", b.to_str().unwrap()]) == 0;
    let csv_same = ok_synth && std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();

    let codes = [
        analyze_into(dir, &a, &windows, "run1", false),
        analyze_into(dir, &a, &windows, "run2", false),
        analyze_into(dir, &a, &windows, "run3", true),
    ];
    if codes.iter().any(|&c| c != 0) {
        return outcome(false, format!("analyze exit codes {codes:?}"));
    }
    let r1 = tree_files(&dir.join("run1"));
    let r2 = tree_files(&dir.join("run2"));
    let r3 = tree_files(&dir.join("run3"));
    let report_same = std::fs::read(dir.join("run1/report.json")).unwrap() == std::fs::read(dir.join("run2/report.json")).unwrap();
    outcome(
        csv_same && report_same && r1 == r2 && r1 == r3,
        format!(
            "synthetic CSV identical: {csv_same}; report.json identical: {report_same}; {} output files identical across runs: {}; serial == parallel: {}",
            r1.len(),
            r1 == r2,
            r1 == r3
        ),
    )
}

fn format_conformance(dir: &Path) -> Outcome {
    let mut failures = Vec::new();
    for (v, e, want) in [(1.98, 0.36, "1.98(36)"), (2.2, 0.9, "2.2(9)"), (3.0, 0.6, "3.0(6)"), (1.0, 0.0, "1.00(0)")] {
        let got = format_value_error(v, e);
        if got != want {
            failures.push(format!("format({v},{e})={got}"));
        }
    }
    let fit = PowerLawFit {
        exponent: 0.85,
        stderr: 0.34,
        r_squared: 0.9,
        intercept: 0.0,
        n_points: 5,
        range: (1.0, 5.0),
    };
    if format_exponent(&fit) != "0.85(34)" {
        failures.push(format!("format_exponent={}", format_exponent(&fit)));
    }

    let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let validator = jsonschema::draft202012::new(&schema).unwrap();
    let report_path = dir.join("run1/report.json");
    let report: serde_json::Value = match std::fs::read_to_string(&report_path) {
        Ok(text) => serde_json::from_str(&text).unwrap(),
        Err(e) => return outcome(false, format!("{}: {e}", report_path.display())),
    };
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).take(3).collect();
    if !errors.is_empty() {
        failures.push(format!("schema: {}", errors.join("; ")));
    }

    let spec = crisis_scenario();
    let panel = generate(&spec).unwrap().with_sectors(spec.sectors());
    let returns = log_returns(&panel).unwrap();
    let c = cross_correlation(&returns).unwrap();
    let d = distance_matrix(&c);
    let tickers = c.tickers().to_vec();
    let sectors = panel.sector_labels();
    let t = kruskal_mst(&d).unwrap();
    let mst = LabeledGraph::from_tree("mst", &t, &tickers, &sectors);
    let tn = LabeledGraph::from_threshold("tn", &build_threshold_network(&c, 0.3).unwrap(), &tickers, &sectors);
    for g in [&mst, &tn] {
        if parse_dot(&to_dot(g)).ok().as_ref() != Some(g) {
            failures.push(format!("dot round trip of {}", g.name));
        }
        if parse_graphml(&to_graphml(g)).ok().as_ref() != Some(g) {
            failures.push(format!("graphml round trip of {}", g.name));
        }
    }
    let tree = upgma(&d).unwrap();
    match parse_newick(&to_newick(&tree, &tickers), Some(&tickers)) {
        Ok(back) => {
            let mut a: Vec<f64> = tree.merges().iter().map(|m| m.height).collect();
            let mut b: Vec<f64> = back.tree.merges().iter().map(|m| m.height).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let c1 = cophenetic_matrix(&tree);
            let c2 = cophenetic_matrix(&back.tree);
            let coph = c1.values().iter().zip(c2.values().iter()).all(|(x, y)| (x - y).abs() <= 1e-12);
            if a.len() != b.len() || worst > 1e-12 || !coph {
                failures.push(format!("newick heights differ by {worst:.1e}"));
            }
        }
        Err(e) => failures.push(format!("newick: {e}")),
    }
    let _ = average_tree_length(&t);
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "value(err) strings, report schema, DOT/GraphML/Newick round trips".to_string()
        } else {
            failures.join(" | ")
        },
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().to_path_buf();
    let p8 = path.clone();
    let p9 = path.clone();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("MST oracle", Box::new(mst_oracle)),
        ("UPGMA oracle", Box::new(upgma_oracle)),
        ("CCC correctness", Box::new(ccc_check)),
        ("Correlation oracle", Box::new(correlation_oracle)),
        ("Threshold monotonicity", Box::new(threshold_monotonicity)),
        ("Power-law fit recovery", Box::new(power_law_recovery)),
        ("Crisis signature on synthetic scenario", Box::new(crisis_signature)),
        ("Determinism", Box::new(move || determinism(&p8))),
        ("Format conformance", Box::new(move || format_conformance(&p9))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} - {}",
            k + 1,
            if result.pass { "PASS" } else { "FAIL" },
            name,
            result.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
