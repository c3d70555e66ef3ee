//! Price-panel ingestion, window slicing and log-returns.
//!
//! Two CSV layouts are accepted:
//!
//! * wide: `date,T1,T2,...` with one row per trading day;
//! * long: `date,ticker,close` with one row per observation, pivoted to wide.
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`) and treated as opaque sortable keys; the
//! rows present in the file define the trading calendar. Tickers are sorted
//! lexicographically and their position is the vertex id used by every graph
//! built downstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("input is empty")]
    Empty,
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("duplicate ticker {0:?} in header")]
    DuplicateTicker(String),
    #[error("line {line}: unparseable date {value:?}")]
    BadDate { line: u64, value: String },
    #[error("line {line}: unparseable price {value:?} for {ticker}")]
    BadNumber { line: u64, ticker: String, value: String },
    #[error("line {line} ({date}): non-positive price {value} for {ticker}")]
    NonPositivePrice { line: u64, date: NaiveDate, ticker: String, value: f64 },
    #[error("duplicate observation for ({date}, {ticker})")]
    DuplicateEntry { date: NaiveDate, ticker: String },
    #[error("missing price for {ticker} on {date}")]
    MissingCell { date: NaiveDate, ticker: String },
    #[error("missing leading prices for {ticker}; forward fill cannot start before the first observation")]
    LeadingGap { ticker: String },
    #[error("panel shape mismatch: {0}")]
    Shape(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("window {window:?} selects no rows")]
    EmptyWindow { window: String },
    #[error("window {window:?} selects {rows} rows; at least 3 are required")]
    TooFewRows { window: String, rows: usize },
    #[error("panel has {rows} rows; at least 3 prices are needed for returns")]
    NotEnoughPrices { rows: usize },
    #[error("ticker {ticker} has zero return variance")]
    ZeroVariance { ticker: String },
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvFormat {
    #[default]
    Wide,
    Long,
}

impl FromStr for CsvFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "wide" => Ok(CsvFormat::Wide),
            "long" => Ok(CsvFormat::Long),
            other => Err(format!("unknown csv format {other:?} (expected wide|long)")),
        }
    }
}

/// Missing-cell policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillPolicy {
    /// Reject any missing cell.
    #[default]
    None,
    /// Carry the last observed price forward; leading gaps are still rejected.
    Forward,
}

impl FromStr for FillPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(FillPolicy::None),
            "forward" => Ok(FillPolicy::Forward),
            other => Err(format!("unknown fill policy {other:?} (expected none|forward)")),
        }
    }
}

/// Dates × tickers matrix of strictly positive closing prices.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    prices: Array2<f64>,
    sectors: BTreeMap<String, String>,
}

impl PricePanel {
    /// Builds a panel, sorting columns by ticker and rows by date.
    pub fn new(tickers: Vec<String>, dates: Vec<NaiveDate>, prices: Array2<f64>) -> Result<Self> {
        let (rows, cols) = prices.dim();
        if rows != dates.len() || cols != tickers.len() {
            return Err(IngestError::Shape(format!(
                "{rows}x{cols} prices for {} dates and {} tickers",
                dates.len(),
                tickers.len()
            )));
        }
        if tickers.is_empty() || dates.is_empty() {
            return Err(IngestError::Empty);
        }
        let mut seen = BTreeSet::new();
        for t in &tickers {
            if t.is_empty() {
                return Err(IngestError::BadHeader("empty ticker name".into()));
            }
            if !seen.insert(t.as_str()) {
                return Err(IngestError::DuplicateTicker(t.clone()));
            }
        }

        let mut col_order: Vec<usize> = (0..cols).collect();
        col_order.sort_by(|&a, &b| tickers[a].cmp(&tickers[b]));
        let mut row_order: Vec<usize> = (0..rows).collect();
        row_order.sort_by_key(|&r| dates[r]);
        for w in row_order.windows(2) {
            if dates[w[0]] == dates[w[1]] {
                return Err(IngestError::DuplicateEntry {
                    date: dates[w[0]],
                    ticker: "*".into(),
                });
            }
        }

        let sorted = Array2::from_shape_fn((rows, cols), |(r, c)| prices[[row_order[r], col_order[c]]]);
        let tickers: Vec<String> = col_order.iter().map(|&c| tickers[c].clone()).collect();
        let dates: Vec<NaiveDate> = row_order.iter().map(|&r| dates[r]).collect();
        for ((r, c), &p) in sorted.indexed_iter() {
            if !(p.is_finite() && p > 0.0) {
                return Err(IngestError::NonPositivePrice {
                    line: 0,
                    date: dates[r],
                    ticker: tickers[c].clone(),
                    value: p,
                });
            }
        }
        Ok(PricePanel {
            tickers,
            dates,
            prices: sorted,
            sectors: BTreeMap::new(),
        })
    }

    /// Attaches ticker → sector labels. Labels for unknown tickers are dropped.
    pub fn with_sectors(mut self, sectors: BTreeMap<String, String>) -> Self {
        self.sectors = sectors
            .into_iter()
            .filter(|(t, _)| self.tickers.binary_search(t).is_ok())
            .collect();
        self
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn sectors(&self) -> &BTreeMap<String, String> {
        &self.sectors
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    /// Sector labels aligned with vertex ids.
    pub fn sector_labels(&self) -> Vec<Option<String>> {
        self.tickers.iter().map(|t| self.sectors.get(t).cloned()).collect()
    }

    /// Serializes to wide CSV. Prices use the shortest round-trip
    /// representation, so reparsing yields an identical panel.
    pub fn to_wide_csv(&self) -> String {
        let mut out = String::with_capacity(self.n_rows() * (self.n_tickers() + 1) * 12);
        out.push_str("date");
        for t in &self.tickers {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (r, d) in self.dates.iter().enumerate() {
            let _ = write!(out, "{}", d.format(DATE_FORMAT));
            for c in 0..self.n_tickers() {
                let _ = write!(out, ",{}", self.prices[[r, c]]);
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Csv {
        line,
        message: e.to_string(),
    }
}

fn parse_price(cell: &str, line: u64, date: NaiveDate, ticker: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let value: f64 = cell.parse().map_err(|_| IngestError::BadNumber {
        line,
        ticker: ticker.to_string(),
        value: cell.to_string(),
    })?;
    if !value.is_finite() {
        return Err(IngestError::BadNumber {
            line,
            ticker: ticker.to_string(),
            value: cell.to_string(),
        });
    }
    if value <= 0.0 {
        return Err(IngestError::NonPositivePrice {
            line,
            date,
            ticker: ticker.to_string(),
            value,
        });
    }
    Ok(Some(value))
}

/// Parses a price CSV into a validated panel.
pub fn parse_csv(text: &str, format: CsvFormat, fill: FillPolicy) -> Result<PricePanel> {
    if text.trim().is_empty() {
        return Err(IngestError::Empty);
    }
    let (tickers, rows) = match format {
        CsvFormat::Wide => read_wide(text)?,
        CsvFormat::Long => read_long(text)?,
    };
    assemble(tickers, rows, fill)
}

type RawRows = Vec<(NaiveDate, Vec<Option<f64>>)>;

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn read_wide(text: &str) -> Result<(Vec<String>, RawRows)> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(IngestError::BadHeader(
            "wide format expects `date,TICKER1,...`".into(),
        ));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for t in &tickers {
        if t.is_empty() {
            return Err(IngestError::BadHeader("empty ticker name".into()));
        }
        if !seen.insert(t.as_str()) {
            return Err(IngestError::DuplicateTicker(t.clone()));
        }
    }

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() > header.len() {
            return Err(IngestError::Csv {
                line,
                message: format!("{} fields, header has {}", rec.len(), header.len()),
            });
        }
        let date = parse_date(&rec[0]).ok_or_else(|| IngestError::BadDate {
            line,
            value: rec[0].to_string(),
        })?;
        let mut cells = Vec::with_capacity(tickers.len());
        for (c, ticker) in tickers.iter().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("");
            cells.push(parse_price(cell, line, date, ticker)?);
        }
        rows.push((date, cells));
    }
    Ok((tickers, rows))
}

fn read_long(text: &str) -> Result<(Vec<String>, RawRows)> {
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(di), Some(ti), Some(pi)) = (find("date"), find("ticker"), find("close")) else {
        return Err(IngestError::BadHeader(
            "long format expects columns `date,ticker,close`".into(),
        ));
    };

    let mut obs: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = parse_date(field(di)).ok_or_else(|| IngestError::BadDate {
            line,
            value: field(di).to_string(),
        })?;
        let ticker = field(ti).to_string();
        if ticker.is_empty() {
            return Err(IngestError::Csv {
                line,
                message: "empty ticker".into(),
            });
        }
        let Some(price) = parse_price(field(pi), line, date, &ticker)? else {
            continue;
        };
        if obs.insert((date, ticker.clone()), price).is_some() {
            return Err(IngestError::DuplicateEntry { date, ticker });
        }
    }

    let tickers: Vec<String> = obs
        .keys()
        .map(|(_, t)| t.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dates: BTreeSet<NaiveDate> = obs.keys().map(|(d, _)| *d).collect();
    let rows = dates
        .into_iter()
        .map(|d| {
            let cells = tickers
                .iter()
                .map(|t| obs.get(&(d, t.clone())).copied())
                .collect();
            (d, cells)
        })
        .collect();
    Ok((tickers, rows))
}

fn assemble(tickers: Vec<String>, mut rows: RawRows, fill: FillPolicy) -> Result<PricePanel> {
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(IngestError::DuplicateEntry {
                date: w[0].0,
                ticker: "*".into(),
            });
        }
    }

    let n = tickers.len();
    let mut prices = Array2::<f64>::zeros((rows.len(), n));
    for c in 0..n {
        let mut last: Option<f64> = None;
        for (r, (date, cells)) in rows.iter().enumerate() {
            let value = match (cells[c], fill) {
                (Some(v), _) => v,
                (None, FillPolicy::Forward) => last.ok_or_else(|| IngestError::LeadingGap {
                    ticker: tickers[c].clone(),
                })?,
                (None, FillPolicy::None) => {
                    return Err(IngestError::MissingCell {
                        date: *date,
                        ticker: tickers[c].clone(),
                    })
                }
            };
            last = Some(value);
            prices[[r, c]] = value;
        }
    }
    let dates = rows.into_iter().map(|(d, _)| d).collect();
    PricePanel::new(tickers, dates, prices)
}

/// Parses `ticker,sector` lines (optional header, `#` comments).
pub fn parse_sectors(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((ticker, sector)) = line.split_once(',') else {
            return Err(IngestError::Csv {
                line: i as u64 + 1,
                message: "expected `ticker,sector`".into(),
            });
        };
        let (ticker, sector) = (ticker.trim(), sector.trim());
        if i == 0 && ticker.eq_ignore_ascii_case("ticker") {
            continue;
        }
        out.insert(ticker.to_string(), sector.to_string());
    }
    Ok(out)
}

/// Named inclusive date range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl WindowSpec {
    pub fn new(name: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(IngestError::InvalidWindow("empty window name".into()));
        }
        if start > end {
            return Err(IngestError::InvalidWindow(format!(
                "{name}: start {start} after end {end}"
            )));
        }
        Ok(WindowSpec { name, start, end })
    }

    /// The three crisis windows used for the 2006–2010 KOSPI study.
    pub fn crisis_windows() -> Vec<WindowSpec> {
        let d = |s: &str| parse_date(s).expect("static date");
        vec![
            WindowSpec { name: "before".into(), start: d("2006-06-02"), end: d("2007-11-30") },
            WindowSpec { name: "during".into(), start: d("2007-12-03"), end: d("2009-06-30") },
            WindowSpec { name: "after".into(), start: d("2009-07-01"), end: d("2010-12-30") },
        ]
    }
}

impl FromStr for WindowSpec {
    type Err = IngestError;

    /// Parses `name:start:end`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [name, start, end] = parts.as_slice() else {
            return Err(IngestError::InvalidWindow(format!(
                "{s:?}: expected name:YYYY-MM-DD:YYYY-MM-DD"
            )));
        };
        let date = |v: &str| {
            parse_date(v).ok_or_else(|| IngestError::InvalidWindow(format!("{s:?}: bad date {v:?}")))
        };
        WindowSpec::new(name.trim(), date(start)?, date(end)?)
    }
}

/// Parses a window file listing `name,start,end` triples.
pub fn parse_windows(text: &str) -> Result<Vec<WindowSpec>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("name,start,end") {
            continue;
        }
        out.push(line.replace(',', ":").parse()?);
    }
    Ok(out)
}

/// Rows with `start <= date <= end`.
pub fn slice_window(panel: &PricePanel, window: &WindowSpec) -> Result<PricePanel> {
    if window.start > window.end {
        return Err(IngestError::InvalidWindow(window.name.clone()));
    }
    let lo = panel.dates.partition_point(|d| *d < window.start);
    let hi = panel.dates.partition_point(|d| *d <= window.end);
    let rows = hi.saturating_sub(lo);
    if rows == 0 {
        return Err(IngestError::EmptyWindow {
            window: window.name.clone(),
        });
    }
    if rows < 3 {
        return Err(IngestError::TooFewRows {
            window: window.name.clone(),
            rows,
        });
    }
    Ok(PricePanel {
        tickers: panel.tickers.clone(),
        dates: panel.dates[lo..hi].to_vec(),
        prices: panel.prices.slice(ndarray::s![lo..hi, ..]).to_owned(),
        sectors: panel.sectors.clone(),
    })
}

/// Raw and volatility-normalized log-returns of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnPanel {
    pub tickers: Vec<String>,
    /// Date of the later price of each return.
    pub dates: Vec<NaiveDate>,
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
    /// Sample (n-1) standard deviation of each raw column.
    pub sigma: Vec<f64>,
}

impl ReturnPanel {
    pub fn n_returns(&self) -> usize {
        self.raw.nrows()
    }

    pub fn n_tickers(&self) -> usize {
        self.raw.ncols()
    }
}

pub(crate) fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// `r_i(t) = ln I_i(t) - ln I_i(t-1)`, plus the same series divided by its
/// sample standard deviation.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let rows = panel.n_rows();
    if rows < 3 {
        return Err(IngestError::NotEnoughPrices { rows });
    }
    let n = panel.n_tickers();
    let logs = panel.prices.mapv(f64::ln);
    let raw = Array2::from_shape_fn((rows - 1, n), |(t, i)| logs[[t + 1, i]] - logs[[t, i]]);

    let mut sigma = Vec::with_capacity(n);
    for (i, col) in raw.columns().into_iter().enumerate() {
        let first = col[0];
        let s = sample_std(col.iter().copied());
        if col.iter().all(|&v| v == first) || s == 0.0 {
            return Err(IngestError::ZeroVariance {
                ticker: panel.tickers[i].clone(),
            });
        }
        sigma.push(s);
    }
    let normalized = Array2::from_shape_fn(raw.dim(), |(t, i)| raw[[t, i]] / sigma[i]);
    Ok(ReturnPanel {
        tickers: panel.tickers.clone(),
        dates: panel.dates[1..].to_vec(),
        raw,
        normalized,
        sigma,
    })
}
