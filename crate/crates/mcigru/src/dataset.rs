//! Daily bar ingestion, returns, temporal splits, robust normalization and
//! windowed sample construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-day features, in storage order.
pub const FEATURE_NAMES: [&str; 6] = ["open", "close", "high", "low", "volume", "turnover"];
pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// Closes are carried across at most this many consecutive missing bars.
pub const MAX_FORWARD_FILL: usize = 5;

/// Stocks with fewer valid days than this in the statistics split are
/// dropped by [`preprocess`].
pub const MIN_STATS_DAYS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StockBar {
    pub ticker: String,
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub turnover: f64,
}

impl StockBar {
    fn features(&self) -> [f64; N_FEATURES] {
        [
            self.open,
            self.close,
            self.high,
            self.low,
            self.volume,
            self.turnover,
        ]
    }

    fn is_valid(&self) -> bool {
        let prices = [self.open, self.high, self.low, self.close];
        prices.iter().all(|p| p.is_finite() && *p > 0.0)
            && self.volume.is_finite()
            && self.volume >= 0.0
            && self.turnover.is_finite()
            && self.turnover >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Inclusive calendar range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train: DateRange,
    pub valid: DateRange,
    pub test: DateRange,
}

impl SplitBoundaries {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if r.start > r.end {
                return Err(Error::Config(format!(
                    "{name} range starts after it ends ({} > {})",
                    r.start, r.end
                )));
            }
        }
        if self.train.end >= self.valid.start || self.valid.end >= self.test.start {
            return Err(Error::Config(
                "split ranges must be disjoint and ordered train < valid < test".into(),
            ));
        }
        Ok(())
    }

    fn tag(&self, d: NaiveDate) -> Option<Split> {
        if self.train.contains(d) {
            Some(Split::Train)
        } else if self.valid.contains(d) {
            Some(Split::Valid)
        } else if self.test.contains(d) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// Header names for each logical CSV column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub date: String,
    pub ticker: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub turnover: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            ticker: "ticker".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            turnover: "turnover".into(),
        }
    }
}

impl ColumnSchema {
    fn columns(&self) -> [&str; 8] {
        [
            &self.date,
            &self.ticker,
            &self.open,
            &self.high,
            &self.low,
            &self.close,
            &self.volume,
            &self.turnover,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub tickers: usize,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
}

/// Aligned stock × day panel.
///
/// `features` holds raw bar values until [`preprocess`] replaces them with
/// clipped z-scores. Raw open/close prices are kept separately (forward-filled
/// over short gaps) for returns and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    features: Vec<f64>,
    raw_open: Vec<Option<f64>>,
    raw_close: Vec<Option<f64>>,
    valid: Vec<bool>,
    returns: Vec<Option<f64>>,
    split_tags: Option<Vec<Split>>,
    normalized: bool,
}

impl Panel {
    /// Builds a panel from bars. Tickers are sorted lexicographically, dates
    /// ascending; missing (ticker, date) cells are marked invalid.
    pub fn from_bars(bars: Vec<StockBar>) -> Result<(Panel, LoadReport)> {
        let rows_read = bars.len();
        let mut seen = HashMap::new();
        let mut dups = BTreeSet::new();
        for b in &bars {
            if seen.insert((b.ticker.clone(), b.date), ()).is_some() {
                dups.insert((b.ticker.clone(), b.date));
            }
        }
        if !dups.is_empty() {
            return Err(Error::DuplicateRows(dups.into_iter().collect()));
        }

        let mut rejected = 0;
        let mut kept: BTreeMap<(String, NaiveDate), StockBar> = BTreeMap::new();
        for b in bars {
            if b.is_valid() {
                kept.insert((b.ticker.clone(), b.date), b);
            } else {
                rejected += 1;
            }
        }
        let tickers: Vec<String> = kept
            .keys()
            .map(|(t, _)| t.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let dates: Vec<NaiveDate> = kept
            .keys()
            .map(|(_, d)| *d)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let (n, t) = (tickers.len(), dates.len());
        let mut panel = Panel {
            features: vec![0.0; n * t * N_FEATURES],
            raw_open: vec![None; n * t],
            raw_close: vec![None; n * t],
            valid: vec![false; n * t],
            returns: vec![None; n * t],
            split_tags: None,
            normalized: false,
            tickers,
            dates,
        };
        for i in 0..n {
            let mut gap = 0usize;
            let mut last: Option<(f64, f64)> = None;
            for d in 0..t {
                let key = (panel.tickers[i].clone(), panel.dates[d]);
                let c = i * t + d;
                match kept.get(&key) {
                    Some(bar) => {
                        panel.valid[c] = true;
                        panel.features[c * N_FEATURES..(c + 1) * N_FEATURES]
                            .copy_from_slice(&bar.features());
                        panel.raw_open[c] = Some(bar.open);
                        panel.raw_close[c] = Some(bar.close);
                        last = Some((bar.open, bar.close));
                        gap = 0;
                    }
                    None => {
                        gap += 1;
                        if gap <= MAX_FORWARD_FILL {
                            if let Some((o, cl)) = last {
                                panel.raw_open[c] = Some(o);
                                panel.raw_close[c] = Some(cl);
                            }
                        } else {
                            last = None;
                        }
                    }
                }
            }
        }
        let report = LoadReport {
            rows_read,
            rows_rejected: rejected,
            tickers: n,
            date_range: panel.dates.first().copied().zip(panel.dates.last().copied()),
        };
        Ok((panel, report))
    }

    #[inline]
    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }

    #[inline]
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    #[inline]
    fn cell(&self, stock: usize, day: usize) -> usize {
        debug_assert!(stock < self.n_stocks() && day < self.n_days());
        stock * self.n_days() + day
    }

    /// The six features of one stock-day (raw or normalized).
    pub fn features(&self, stock: usize, day: usize) -> &[f64] {
        let c = self.cell(stock, day);
        &self.features[c * N_FEATURES..(c + 1) * N_FEATURES]
    }

    /// True where a bar was observed.
    pub fn is_valid(&self, stock: usize, day: usize) -> bool {
        self.valid[self.cell(stock, day)]
    }

    /// Close price, observed or carried forward over a short gap.
    pub fn close(&self, stock: usize, day: usize) -> Option<f64> {
        self.raw_close[self.cell(stock, day)]
    }

    pub fn open(&self, stock: usize, day: usize) -> Option<f64> {
        self.raw_open[self.cell(stock, day)]
    }

    /// Close-to-close return into `day`, when defined.
    pub fn daily_return(&self, stock: usize, day: usize) -> Option<f64> {
        self.returns[self.cell(stock, day)]
    }

    pub fn split_of(&self, day: usize) -> Option<Split> {
        self.split_tags.as_ref().map(|tags| tags[day])
    }

    pub fn has_splits(&self) -> bool {
        self.split_tags.is_some()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Index range of the days tagged `split`.
    pub fn split_range(&self, split: Split) -> Option<std::ops::Range<usize>> {
        let tags = self.split_tags.as_ref()?;
        let first = tags.iter().position(|&s| s == split)?;
        let last = tags.iter().rposition(|&s| s == split)?;
        Some(first..last + 1)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.binary_search_by(|t| t.as_str().cmp(ticker)).ok()
    }

    fn select(&self, stocks: &[usize], days: &[usize]) -> Panel {
        let (n, t) = (stocks.len(), days.len());
        let mut out = Panel {
            tickers: stocks.iter().map(|&i| self.tickers[i].clone()).collect(),
            dates: days.iter().map(|&d| self.dates[d]).collect(),
            features: Vec::with_capacity(n * t * N_FEATURES),
            raw_open: Vec::with_capacity(n * t),
            raw_close: Vec::with_capacity(n * t),
            valid: Vec::with_capacity(n * t),
            returns: Vec::with_capacity(n * t),
            split_tags: self
                .split_tags
                .as_ref()
                .map(|tags| days.iter().map(|&d| tags[d]).collect()),
            normalized: self.normalized,
        };
        for &i in stocks {
            for &d in days {
                let c = self.cell(i, d);
                out.features
                    .extend_from_slice(&self.features[c * N_FEATURES..(c + 1) * N_FEATURES]);
                out.raw_open.push(self.raw_open[c]);
                out.raw_close.push(self.raw_close[c]);
                out.valid.push(self.valid[c]);
                out.returns.push(self.returns[c]);
            }
        }
        out
    }
}

/// Reads a bar CSV (UTF-8, header row, `YYYY-MM-DD` dates).
///
/// Rows with unparsable fields, non-positive prices or negative
/// volume/turnover are rejected and counted in the report.
pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<(Panel, LoadReport)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 8];
    for (slot, name) in idx.iter_mut().zip(schema.columns()) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut bars = Vec::new();
    let mut unparsable = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let num = |k: usize| field(k).parse::<f64>().ok();
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").ok();
        let ticker = field(1).to_string();
        match (date, num(2), num(3), num(4), num(5), num(6), num(7)) {
            (Some(date), Some(open), Some(high), Some(low), Some(close), Some(volume), Some(turnover))
                if !ticker.is_empty() =>
            {
                bars.push(StockBar {
                    ticker,
                    date,
                    open,
                    high,
                    low,
                    close,
                    volume,
                    turnover,
                })
            }
            _ => {
                warn!("{}: line {} could not be parsed", path.display(), line + 2);
                unparsable += 1;
            }
        }
    }
    let (panel, mut report) = Panel::from_bars(bars)?;
    report.rows_read += unparsable;
    report.rows_rejected += unparsable;
    if report.rows_rejected > 0 {
        warn!(
            "{}: rejected {} of {} rows",
            path.display(),
            report.rows_rejected,
            report.rows_read
        );
    }
    Ok((panel, report))
}

/// Fills simple close-to-close returns wherever the day has a bar and the
/// previous day's close is known (observed or carried forward).
pub fn compute_daily_returns(mut panel: Panel) -> Panel {
    let t = panel.n_days();
    for i in 0..panel.n_stocks() {
        for d in 0..t {
            let c = i * t + d;
            panel.returns[c] = if d > 0 && panel.valid[c] {
                match (panel.raw_close[c - 1], panel.raw_close[c]) {
                    (Some(prev), Some(cur)) => Some((cur - prev) / prev),
                    _ => None,
                }
            } else {
                None
            };
        }
    }
    panel
}

/// Tags every date with its split and drops dates outside all ranges.
pub fn split_by_date(panel: Panel, boundaries: &SplitBoundaries) -> Result<Panel> {
    boundaries.validate()?;
    let mut keep = Vec::new();
    let mut tags = Vec::new();
    for (d, &date) in panel.dates.iter().enumerate() {
        if let Some(tag) = boundaries.tag(date) {
            keep.push(d);
            tags.push(tag);
        }
    }
    let stocks: Vec<usize> = (0..panel.n_stocks()).collect();
    let mut out = panel.select(&stocks, &keep);
    out.split_tags = Some(tags);
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub excluded: Vec<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Robust per-stock, per-feature normalization.
///
/// Values are clipped to `median ± mad_clip · MAD` and then z-scored
/// (population standard deviation). Every statistic comes from the valid
/// days tagged `stats_split` only. Zero-variance features become all zeros.
/// Stocks with fewer than [`MIN_STATS_DAYS`] valid statistics days are
/// removed from the universe.
pub fn preprocess(
    panel: Panel,
    mad_clip: f64,
    stats_split: Split,
) -> Result<(Panel, PreprocessReport)> {
    if panel.normalized {
        return Err(Error::Config("panel is already normalized".into()));
    }
    if !(mad_clip > 0.0) {
        return Err(Error::Config(format!("mad_clip must be positive, got {mad_clip}")));
    }
    let tags = panel
        .split_tags
        .as_ref()
        .ok_or_else(|| Error::Config("preprocess requires split tags".into()))?;
    let stats_days: Vec<usize> = (0..panel.n_days())
        .filter(|&d| tags[d] == stats_split)
        .collect();

    let mut report = PreprocessReport::default();
    let mut keep = Vec::new();
    for i in 0..panel.n_stocks() {
        let count = stats_days.iter().filter(|&&d| panel.is_valid(i, d)).count();
        if count < MIN_STATS_DAYS {
            warn!(
                "excluding {}: {count} valid {} days (< {MIN_STATS_DAYS})",
                panel.tickers[i],
                stats_split.name()
            );
            report.excluded.push(panel.tickers[i].clone());
        } else {
            keep.push(i);
        }
    }
    let days: Vec<usize> = (0..panel.n_days()).collect();
    let mut out = panel.select(&keep, &days);
    let t = out.n_days();

    for i in 0..out.n_stocks() {
        let valid_stats: Vec<usize> = stats_days
            .iter()
            .copied()
            .filter(|&d| out.is_valid(i, d))
            .collect();
        for f in 0..N_FEATURES {
            let at = |d: usize| (i * t + d) * N_FEATURES + f;
            let values = sorted(valid_stats.iter().map(|&d| out.features[at(d)]).collect());
            let med = median(&values);
            let mad = median(&sorted(values.iter().map(|x| (x - med).abs()).collect()));
            // With MAD = 0 there is no robust scale to clip against.
            let (lo, hi) = if mad > 0.0 {
                (med - mad_clip * mad, med + mad_clip * mad)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            let clipped: Vec<f64> = valid_stats
                .iter()
                .map(|&d| out.features[at(d)].clamp(lo, hi))
                .collect();
            let mean = clipped.iter().sum::<f64>() / clipped.len() as f64;
            let var = clipped.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / clipped.len() as f64;
            let sd = var.sqrt();
            let degenerate = !(sd > 1e-12 * mean.abs().max(1.0));
            for d in 0..t {
                let a = at(d);
                out.features[a] = if !out.valid[i * t + d] || degenerate {
                    0.0
                } else {
                    (out.features[a].clamp(lo, hi) - mean) / sd
                };
            }
        }
    }
    out.normalized = true;
    Ok((out, report))
}

/// One anchor day: inputs, labels and the stocks that take part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaySample {
    /// Anchor day index into the panel.
    pub day: usize,
    pub date: NaiveDate,
    pub split: Option<Split>,
    pub his_t: usize,
    pub label_t: usize,
    /// `n_stocks × his_t × N_FEATURES`, oldest day first.
    pub inputs: Vec<f64>,
    /// Forward `label_t`-day return; 0 where `mask` is false.
    pub labels: Vec<f64>,
    /// Stock has bars on every window day and on the label day.
    pub mask: Vec<bool>,
}

impl DaySample {
    pub fn n_stocks(&self) -> usize {
        self.mask.len()
    }

    /// Features of `stock` at window position `step` (0 = oldest).
    pub fn input(&self, stock: usize, step: usize) -> &[f64] {
        let o = (stock * self.his_t + step) * N_FEATURES;
        &self.inputs[o..o + N_FEATURES]
    }

    pub fn stocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }

    /// Index of the last input day.
    pub fn last_input_day(&self) -> usize {
        self.day
    }

    /// Index of the first label day.
    pub fn first_label_day(&self) -> usize {
        self.day + 1
    }
}

/// Anchor days eligible inside one contiguous segment `[start, end)`.
fn eligible_anchors(start: usize, end: usize, his_t: usize, label_t: usize) -> std::ops::Range<usize> {
    let first = start + his_t - 1;
    let stop = end.saturating_sub(label_t);
    first..stop.max(first)
}

/// Builds one sample per eligible anchor day `t`: inputs cover days
/// `t − his_t + 1 ..= t`, labels are `close[t + label_t] / close[t] − 1`.
/// Windows and label horizons never cross a split boundary.
pub fn build_windows(panel: &Panel, his_t: usize, label_t: usize) -> Result<Vec<DaySample>> {
    if his_t == 0 || label_t == 0 {
        return Err(Error::Config("his_t and label_t must be at least 1".into()));
    }
    let segments: Vec<(Option<Split>, std::ops::Range<usize>)> = match &panel.split_tags {
        None => vec![(None, 0..panel.n_days())],
        Some(_) => Split::ALL
            .iter()
            .filter_map(|&s| panel.split_range(s).map(|r| (Some(s), r)))
            .collect(),
    };
    let n = panel.n_stocks();
    let mut out = Vec::new();
    for (split, range) in segments {
        let anchors = eligible_anchors(range.start, range.end, his_t, label_t);
        if anchors.is_empty() {
            warn!(
                "{} split has {} days: too short for his_t={his_t}, label_t={label_t}",
                split.map_or("whole", Split::name),
                range.len()
            );
        }
        for day in anchors {
            let mut inputs = Vec::with_capacity(n * his_t * N_FEATURES);
            let mut labels = vec![0.0; n];
            let mut mask = vec![false; n];
            for i in 0..n {
                let window = day + 1 - his_t..=day;
                for d in window.clone() {
                    inputs.extend_from_slice(panel.features(i, d));
                }
                let complete = window.clone().all(|d| panel.is_valid(i, d))
                    && panel.is_valid(i, day + label_t);
                if let (true, Some(now), Some(later)) =
                    (complete, panel.close(i, day), panel.close(i, day + label_t))
                {
                    labels[i] = (later - now) / now;
                    mask[i] = true;
                }
            }
            out.push(DaySample {
                day,
                date: panel.dates[day],
                split,
                his_t,
                label_t,
                inputs,
                labels,
                mask,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    pub fn bar(ticker: &str, d: NaiveDate, close: f64) -> StockBar {
        StockBar {
            ticker: ticker.into(),
            date: d,
            open: close,
            high: close * 1.01,
            low: close * 0.99,
            close,
            volume: 1000.0,
            turnover: 1000.0 * close,
        }
    }

    fn days(n: usize) -> Vec<NaiveDate> {
        (0..n)
            .map(|k| date("2020-01-01") + chrono::Duration::days(k as i64))
            .collect()
    }

    #[test]
    fn complete_grid() {
        let ds = days(3);
        let bars = ["B", "A"]
            .iter()
            .flat_map(|t| ds.iter().map(move |&d| bar(t, d, 10.0)))
            .collect();
        let (p, report) = Panel::from_bars(bars).unwrap();
        assert_eq!(p.tickers, vec!["A", "B"]);
        assert_eq!((p.n_stocks(), p.n_days()), (2, 3));
        assert!((0..2).all(|i| (0..3).all(|d| p.is_valid(i, d))));
        assert_eq!(report.rows_rejected, 0);
        assert_eq!(report.tickers, 2);
    }

    #[test]
    fn missing_day_is_masked_and_forward_filled() {
        let ds = days(3);
        let mut bars: Vec<_> = ds.iter().map(|&d| bar("A", d, 10.0)).collect();
        bars.push(bar("B", ds[0], 20.0));
        bars.push(bar("B", ds[2], 22.0));
        let (p, _) = Panel::from_bars(bars).unwrap();
        assert!(!p.is_valid(1, 1));
        assert_eq!(p.close(1, 1), Some(20.0));
        let p = compute_daily_returns(p);
        assert_eq!(p.daily_return(1, 1), None);
        assert!((p.daily_return(1, 2).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn long_gap_is_not_filled() {
        let ds = days(10);
        let bars = vec![bar("A", ds[0], 10.0), bar("A", ds[9], 11.0)];
        let mut all = bars;
        all.extend(ds.iter().map(|&d| bar("Z", d, 1.0)));
        let (p, _) = Panel::from_bars(all).unwrap();
        assert_eq!(p.close(0, 5), Some(10.0));
        assert_eq!(p.close(0, 6), None);
        let p = compute_daily_returns(p);
        assert_eq!(p.daily_return(0, 9), None);
    }

    #[test]
    fn duplicates_are_fatal() {
        let d = date("2020-01-01");
        let err = Panel::from_bars(vec![bar("A", d, 1.0), bar("A", d, 2.0)]).unwrap_err();
        match err {
            Error::DuplicateRows(rows) => assert_eq!(rows, vec![("A".to_string(), d)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn returns_follow_definition() {
        let ds = days(3);
        let bars = ds
            .iter()
            .zip([100.0, 95.0, 104.5])
            .map(|(&d, c)| bar("A", d, c))
            .collect();
        let p = compute_daily_returns(Panel::from_bars(bars).unwrap().0);
        assert_eq!(p.daily_return(0, 0), None);
        assert!((p.daily_return(0, 1).unwrap() + 0.05).abs() < 1e-15);
        assert!((p.daily_return(0, 2).unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn split_tags_and_drops() {
        let ds = days(10);
        let bars = ds.iter().map(|&d| bar("A", d, 1.0)).collect();
        let p = Panel::from_bars(bars).unwrap().0;
        let b = SplitBoundaries {
            train: DateRange::new(ds[0], ds[3]),
            valid: DateRange::new(ds[4], ds[5]),
            test: DateRange::new(ds[7], ds[8]),
        };
        let p = split_by_date(p, &b).unwrap();
        assert_eq!(p.n_days(), 8);
        assert!(!p.dates.contains(&ds[6]));
        assert_eq!(p.split_of(0), Some(Split::Train));
        assert_eq!(p.split_of(4), Some(Split::Valid));
        assert_eq!(p.split_of(7), Some(Split::Test));

        let overlapping = SplitBoundaries {
            valid: DateRange::new(ds[3], ds[5]),
            ..b
        };
        let p = Panel::from_bars(ds.iter().map(|&d| bar("A", d, 1.0)).collect()).unwrap().0;
        assert!(matches!(split_by_date(p, &overlapping), Err(Error::Config(_))));
    }

    #[test]
    fn anchor_count_for_one_segment() {
        assert_eq!(eligible_anchors(0, 20, 10, 5), 9..15);
        assert_eq!(eligible_anchors(0, 5, 10, 5).len(), 0);
    }

    #[test]
    fn non_positive_price_is_rejected() {
        let ds = days(2);
        let bars = vec![bar("A", ds[0], 10.0), bar("A", ds[1], -1.0), bar("B", ds[0], 1.0), bar("B", ds[1], 1.0)];
        let (p, report) = Panel::from_bars(bars).unwrap();
        assert_eq!(report.rows_rejected, 1);
        assert_eq!(report.rows_read, 4);
        assert!(p.is_valid(0, 0) && !p.is_valid(0, 1));
    }

    fn tagged(bars: Vec<StockBar>, ds: &[NaiveDate], n_train: usize) -> Panel {
        let t = ds.len();
        let b = SplitBoundaries {
            train: DateRange::new(ds[0], ds[n_train - 1]),
            valid: DateRange::new(ds[n_train], ds[n_train + (t - n_train) / 2 - 1]),
            test: DateRange::new(ds[n_train + (t - n_train) / 2], ds[t - 1]),
        };
        split_by_date(compute_daily_returns(Panel::from_bars(bars).unwrap().0), &b).unwrap()
    }

    #[test]
    fn constant_feature_normalizes_to_zero() {
        let ds = days(30);
        let bars = ds.iter().enumerate().map(|(k, &d)| bar("A", d, 10.0 + k as f64)).collect();
        let (p, report) = preprocess(tagged(bars, &ds, 24), 5.0, Split::Train).unwrap();
        assert!(report.excluded.is_empty());
        // volume is constant in `bar`
        assert!((0..30).all(|d| p.features(0, d)[4] == 0.0));
    }

    #[test]
    fn spike_is_clipped_before_scoring() {
        let ds = days(36);
        let mut raw: Vec<f64> = (0..36).map(|d| 1000.0 + 10.0 * (d % 3) as f64).collect();
        raw[29] = 101_000.0;
        let bars = ds
            .iter()
            .zip(&raw)
            .map(|(&d, &v)| StockBar {
                volume: v,
                ..bar("A", d, 10.0)
            })
            .collect();
        let (p, _) = preprocess(tagged(bars, &ds, 30), 5.0, Split::Train).unwrap();
        // train values: ten each of 1000, 1010, nine 1020 and the spike;
        // median 1010 and MAD 10, so the spike is clipped to 1060
        let mut clipped: Vec<f64> = raw[..30].to_vec();
        clipped[29] = 1060.0;
        let mean = clipped.iter().sum::<f64>() / 30.0;
        let sd = (clipped.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 30.0).sqrt();
        assert!((p.features(0, 29)[4] - (1060.0 - mean) / sd).abs() < 1e-12);
        assert!((p.features(0, 0)[4] - (1000.0 - mean) / sd).abs() < 1e-12);
    }

    #[test]
    fn normalized_train_columns_have_unit_moments() {
        let ds = days(40);
        let bars = ds
            .iter()
            .enumerate()
            .map(|(k, &d)| StockBar {
                volume: 500.0 + (k * k % 17) as f64 * 30.0,
                ..bar("A", d, 10.0 + (k % 7) as f64 + 0.1 * k as f64)
            })
            .collect();
        let (p, _) = preprocess(tagged(bars, &ds, 30), 5.0, Split::Train).unwrap();
        for f in 0..N_FEATURES {
            let col: Vec<f64> = (0..30).map(|d| p.features(0, d)[f]).collect();
            let mean = col.iter().sum::<f64>() / 30.0;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 30.0).sqrt();
            assert!(mean.abs() < 1e-10, "{}: mean {mean}", FEATURE_NAMES[f]);
            assert!((sd - 1.0).abs() < 1e-10, "{}: sd {sd}", FEATURE_NAMES[f]);
        }
    }

    #[test]
    fn windows_enumerate_anchors_and_flat_labels() {
        let ds = days(20);
        let bars = ds.iter().map(|&d| bar("A", d, 5.0)).collect();
        let p = Panel::from_bars(bars).unwrap().0;
        let far = date("2030-01-01");
        let b = SplitBoundaries {
            train: DateRange::new(ds[0], ds[19]),
            valid: DateRange::new(far, far + chrono::Duration::days(1)),
            test: DateRange::new(far + chrono::Duration::days(2), far + chrono::Duration::days(3)),
        };
        let p = split_by_date(compute_daily_returns(p), &b).unwrap();
        let w = build_windows(&p, 10, 5).unwrap();
        let anchors: Vec<usize> = w.iter().map(|s| s.day + 1).collect();
        assert_eq!(anchors, vec![10, 11, 12, 13, 14, 15]);
        assert!(w.iter().all(|s| s.labels == vec![0.0] && s.mask == vec![true]));
        assert_eq!(w[0].inputs.len(), 10 * N_FEATURES);
    }

    #[test]
    fn multi_year_ranges_are_accepted() {
        let b = SplitBoundaries {
            train: DateRange::new(date("2018-01-01"), date("2021-12-31")),
            valid: DateRange::new(date("2022-01-01"), date("2022-12-31")),
            test: DateRange::new(date("2023-01-01"), date("2023-12-31")),
        };
        b.validate().unwrap();
        assert!(b.train.contains(date("2020-06-30")) && !b.train.contains(date("2022-01-03")));
    }
}
