//! Command-line front end: `analyze`, `synth` and `export`.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::exec::Execution;
use crate::export::ExportFormat;
use crate::fit::FitRange;
use crate::hier::BandMode;
use crate::ingest::{parse_csv, parse_sectors, parse_windows, CsvFormat, FillPolicy, PricePanel, WindowSpec};
use crate::report::{
    analyze, export_artifact, write_outputs, GraphKind, PipelineError, ReportError, RunConfig, Stage, SweepGrid,
    ThetaChoice,
};
use crate::synth::{crisis_scenario, generate, SynthSpec};
use crate::topo::Scope;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "marketnet", version, about = "Correlation-network analysis of asset price panels")]
pub struct Cli {
    /// Evaluate every loop on the calling thread.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline per window and write reports.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic price panel from a factor-model spec.
    Synth(SynthArgs),
    /// Serialize one graph artifact for one window.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Price CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `ticker,sector` CSV.
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    /// Missing-price policy: none or forward.
    #[arg(long)]
    pub fill: Option<FillPolicy>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Input layout: wide or long.
    #[arg(long)]
    pub format: Option<CsvFormat>,
    /// TOML run configuration; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `name:YYYY-MM-DD:YYYY-MM-DD`, repeatable.
    #[arg(long = "window")]
    pub windows: Vec<WindowSpec>,
    /// File of `name,start,end` lines.
    #[arg(long)]
    pub windows_file: Option<PathBuf>,
    /// Explicit threshold, repeatable.
    #[arg(long = "theta", allow_hyphen_values = true)]
    pub thetas: Vec<f64>,
    /// Threshold at mean + k std, repeatable.
    #[arg(long = "sigma-mult", allow_hyphen_values = true)]
    pub sigma_multiples: Vec<i32>,
    /// Sweep grid `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: Option<SweepGrid>,
    /// Clustering-scaling fit range `lo:hi`.
    #[arg(long)]
    pub fit_range: Option<FitRange>,
    /// Degree range `lo:hi` for threshold-network exponents.
    #[arg(long)]
    pub degree_fit_range: Option<FitRange>,
    /// Degree-fit scope: largest or whole.
    #[arg(long)]
    pub scope: Option<Scope>,
    /// Which heights the band fractions count.
    #[arg(long)]
    pub band_mode: Option<BandMode>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// dot, graphml, edgelist, newick, json or csv; repeatable.
    #[arg(long = "export")]
    pub exports: Vec<ExportFormat>,
    /// Seed recorded in the report provenance.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML scenario; the built-in crisis scenario when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sectors_out: Option<PathBuf>,
    /// Writes the regime windows as `name,start,end` lines.
    #[arg(long)]
    pub windows_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Input layout: wide or long.
    #[arg(long, default_value = "wide")]
    pub input_format: CsvFormat,
    /// `name:start:end`; the whole panel when omitted.
    #[arg(long)]
    pub window: Option<WindowSpec>,
    /// mst, threshold, dendrogram or corr.
    #[arg(long)]
    pub graph: GraphKind,
    /// Explicit threshold for a threshold graph.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "sigma_mult")]
    pub theta: Option<f64>,
    /// Threshold at mean + k std.
    #[arg(long, allow_hyphen_values = true)]
    pub sigma_mult: Option<i32>,
    /// dot, graphml, edgelist, newick, json or csv.
    #[arg(long)]
    pub format: ExportFormat,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn io_error(path: &Path, source: std::io::Error, stage: Stage) -> ReportError {
    ReportError::new(
        "*",
        stage,
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        },
    )
}

fn read(path: &Path, stage: Stage) -> Result<String, ReportError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e, stage))
}

fn write(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e, Stage::Write))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e, Stage::Write))
}

fn load_panel(
    input: &Path,
    format: CsvFormat,
    fill: FillPolicy,
    sectors: Option<&Path>,
) -> Result<PricePanel, ReportError> {
    let text = read(input, Stage::Ingest)?;
    let parse_err = |e| ReportError::new("*", Stage::Ingest, PipelineError::Ingest(e));
    let mut panel = parse_csv(&text, format, fill).map_err(parse_err)?;
    if let Some(path) = sectors {
        panel = panel.with_sectors(parse_sectors(&read(path, Stage::Ingest)?).map_err(parse_err)?);
    }
    Ok(panel)
}

fn exec(serial: bool) -> Execution {
    if serial {
        Execution::Serial
    } else {
        Execution::Parallel
    }
}

/// Merges the optional config file with command-line overrides.
pub fn resolve_config(args: &AnalyzeArgs) -> Result<RunConfig, ReportError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_toml(&read(path, Stage::Config)?)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.input.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &args.input.sectors {
        cfg.sectors = Some(p.clone());
    }
    if let Some(f) = args.input.fill {
        cfg.fill = f;
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    let mut windows = args.windows.clone();
    if let Some(path) = &args.windows_file {
        let parsed = parse_windows(&read(path, Stage::Config)?)
            .map_err(|e| ReportError::new("*", Stage::Config, PipelineError::Ingest(e)))?;
        windows.extend(parsed);
    }
    if !windows.is_empty() {
        cfg.windows = windows;
    }
    if !args.thetas.is_empty() || !args.sigma_multiples.is_empty() {
        cfg.thetas = args.thetas.clone();
        cfg.sigma_multiples = args.sigma_multiples.clone();
    }
    if let Some(s) = args.sweep {
        cfg.sweep = s;
    }
    if let Some(r) = args.fit_range {
        cfg.clustering_fit_range = r;
        cfg.clustering_fit_ranges.clear();
    }
    if let Some(r) = args.degree_fit_range {
        cfg.degree_fit_range = Some(r);
    }
    if let Some(s) = args.scope {
        cfg.scope = s;
    }
    if let Some(m) = args.band_mode {
        cfg.band_mode = m;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if !args.exports.is_empty() {
        cfg.exports = args.exports.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    Ok(cfg)
}

pub fn cmd_analyze(args: &AnalyzeArgs, exec: Execution, out: &mut dyn Write) -> Result<(), ReportError> {
    let cfg = resolve_config(args)?;
    cfg.validate()?;
    let input = cfg.input.clone().ok_or_else(|| ReportError::config("no input file (--input)"))?;
    let panel = load_panel(&input, cfg.format, cfg.fill, cfg.sectors.as_deref())?;
    let (report, outputs) = analyze(&panel, &cfg, exec)?;
    write_outputs(&cfg.out, &report, &outputs)?;
    let _ = writeln!(
        out,
        "analyzed {} window(s); wrote {}",
        report.windows.len(),
        cfg.out.join("report.json").display()
    );
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), ReportError> {
    let synth_err = |e| ReportError::new("*", Stage::Config, PipelineError::Synth(e));
    let mut spec = match &args.spec {
        Some(path) => SynthSpec::from_toml(&read(path, Stage::Config)?).map_err(synth_err)?,
        None => crisis_scenario(),
    };
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    // generate validates the spec, so nothing is written for a bad one
    let panel = generate(&spec).map_err(synth_err)?;
    write(&args.out, &panel.to_wide_csv())?;
    if let Some(path) = &args.sectors_out {
        let mut text = String::from("ticker,sector\n");
        for (t, s) in spec.sectors() {
            text.push_str(&format!("{t},{s}\n"));
        }
        write(path, &text)?;
    }
    if let Some(path) = &args.windows_out {
        let mut text = String::from("name,start,end\n");
        for w in spec.windows() {
            text.push_str(&format!("{},{},{}\n", w.name, w.start, w.end));
        }
        write(path, &text)?;
    }
    let _ = writeln!(
        out,
        "wrote {} rows x {} tickers to {}",
        panel.n_rows(),
        panel.n_tickers(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_export(args: &ExportArgs, exec: Execution, out: &mut dyn Write) -> Result<(), ReportError> {
    let input = args
        .input
        .input
        .as_ref()
        .ok_or_else(|| ReportError::config("no input file (--input)"))?;
    let panel = load_panel(
        input,
        args.input_format,
        args.input.fill.unwrap_or_default(),
        args.input.sectors.as_deref(),
    )?;
    let window = match &args.window {
        Some(w) => w.clone(),
        None => RunConfig::default()
            .resolved_windows(&panel)
            .pop()
            .ok_or_else(|| ReportError::config("empty panel"))?,
    };
    let theta = match (args.theta, args.sigma_mult) {
        (Some(v), _) => Some(ThetaChoice::Value(v)),
        (None, Some(k)) => Some(ThetaChoice::SigmaMultiple(k)),
        (None, None) => None,
    };
    let text = export_artifact(&panel, &window, args.graph, theta, args.format, exec)?;
    match &args.out {
        Some(path) => write(path, &text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e, Stage::Write)),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let exec = exec(cli.serial);
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, exec, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Export(a) => cmd_export(a, exec, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let kind = match e.exit_code() {
                EXIT_USAGE => "usage error",
                EXIT_DATA if e.stage == Stage::Ingest => "parse error",
                EXIT_DATA => "data error",
                _ => "numeric error",
            };
            let _ = writeln!(stderr, "marketnet: {kind}: {e}");
            e.exit_code()
        }
    }
}
