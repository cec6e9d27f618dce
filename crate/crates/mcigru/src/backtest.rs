//! Daily top-k long-only backtest and the risk/return metrics.

use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Panel;
use crate::error::{Error, Result};
use crate::model::ScoreTable;

pub const TRADING_DAYS: f64 = 252.0;

/// Portfolio value path with an implicit starting value of 1 before the
/// first date.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EquityCurve {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub date: NaiveDate,
    pub value: f64,
    pub ret: f64,
}

impl EquityCurve {
    /// Compounds `returns` from a value of 1.
    pub fn from_returns(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::Shape(format!(
                "{} dates for {} returns",
                dates.len(),
                returns.len()
            )));
        }
        let mut values = Vec::with_capacity(returns.len());
        let mut p = 1.0;
        for &r in &returns {
            p *= 1.0 + r;
            values.push(p);
        }
        Ok(Self {
            dates,
            values,
            returns,
        })
    }

    /// A curve earning the same return every day, e.g. a risk-free rate.
    pub fn constant(dates: Vec<NaiveDate>, daily: f64) -> Self {
        let n = dates.len();
        Self::from_returns(dates, vec![daily; n]).expect("lengths match")
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn points(&self) -> Vec<CurvePoint> {
        self.dates
            .iter()
            .zip(&self.values)
            .zip(&self.returns)
            .map(|((&date, &value), &ret)| CurvePoint { date, value, ret })
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in self.points() {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which prices realize a day's selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Scores from the close of day t earn day t+1's close-to-close return.
    #[default]
    CloseToClose,
    /// Bought at day t+1's open, valued at day t+2's open.
    OpenToOpen,
}

fn realized_return(panel: &Panel, stock: usize, day: usize, timing: Timing) -> Option<f64> {
    match timing {
        Timing::CloseToClose => panel.daily_return(stock, day + 1),
        Timing::OpenToOpen => {
            let a = panel.open(stock, day + 1)?;
            let b = panel.open(stock, day + 2)?;
            (panel.is_valid(stock, day + 1) && panel.is_valid(stock, day + 2)).then(|| b / a - 1.0)
        }
    }
}

/// Per day: scorable `(stock, score, realized return)` ascending by stock,
/// with the date the return is booked on.
fn scorable_days(scores: &ScoreTable, panel: &Panel, timing: Timing) -> Result<Vec<(NaiveDate, Vec<(usize, f64, f64)>)>> {
    if scores.tickers != panel.tickers {
        return Err(Error::Config("score tickers do not match the panel".into()));
    }
    let lag = match timing {
        Timing::CloseToClose => 1,
        Timing::OpenToOpen => 2,
    };
    let mut out = Vec::with_capacity(scores.days.len());
    for d in &scores.days {
        let day = panel
            .day_index(d.date)
            .ok_or_else(|| Error::Config(format!("score date {} is not in the panel", d.date)))?;
        if day + lag >= panel.n_days() {
            warn!("{}: no later prices to realize the selection, day skipped", d.date);
            continue;
        }
        let entries: Vec<(usize, f64, f64)> = d
            .entries
            .iter()
            .filter_map(|&(i, s, _)| realized_return(panel, i, day, timing).map(|r| (i, s, r)))
            .collect();
        out.push((panel.dates[day + lag], entries));
    }
    Ok(out)
}

/// Equal-weighted mean, summed in the given (ascending stock) order.
fn mean_in_order(entries: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in entries {
        sum += r;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Buys the `k` highest-scored stocks each day (ties go to the lower stock
/// index) with equal weights and no costs.
pub fn simulate_topk(scores: &ScoreTable, panel: &Panel, k: usize, timing: Timing) -> Result<EquityCurve> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    for (date, entries) in scorable_days(scores, panel, timing)? {
        if entries.len() < k {
            warn!("{date}: only {} scorable stocks for k = {k}", entries.len());
        }
        let mut ranked: Vec<&(usize, f64, f64)> = entries.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut picked: Vec<&(usize, f64, f64)> = ranked.into_iter().take(k).collect();
        picked.sort_by_key(|e| e.0);
        let r = mean_in_order(picked.iter().map(|e| e.2)).unwrap_or_else(|| {
            warn!("{date}: nothing to buy, holding cash");
            0.0
        });
        dates.push(date);
        returns.push(r);
    }
    EquityCurve::from_returns(dates, returns)
}

/// Equal-weighted curve over every scorable stock.
pub fn benchmark_curve(scores: &ScoreTable, panel: &Panel, timing: Timing) -> Result<EquityCurve> {
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    for (date, entries) in scorable_days(scores, panel, timing)? {
        dates.push(date);
        returns.push(mean_in_order(entries.iter().map(|e| e.2)).unwrap_or(0.0));
    }
    EquityCurve::from_returns(dates, returns)
}

/// Annualized compound return `(Π(1 + r))^(252/T) − 1`.
pub fn metric_arr(curve: &EquityCurve) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Empty("equity curve".into()));
    }
    let mut growth = 1.0;
    for (i, &r) in curve.returns.iter().enumerate() {
        if r <= -1.0 {
            return Err(Error::Bankrupt { index: i, value: r });
        }
        growth *= 1.0 + r;
    }
    Ok(growth.powf(TRADING_DAYS / curve.len() as f64) - 1.0)
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Sample standard deviation of daily returns times `sqrt(252)`.
pub fn metric_avol(curve: &EquityCurve) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::InsufficientHistory(format!(
            "volatility needs at least 2 returns, got {}",
            curve.len()
        )));
    }
    Ok(sample_std(&curve.returns) * TRADING_DAYS.sqrt())
}

/// Largest relative fall from a running peak of `values`.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    worst
}

/// Maximum drawdown of the curve including its starting value 1, as a
/// positive fraction.
pub fn metric_mdd(curve: &EquityCurve) -> f64 {
    let mut path = Vec::with_capacity(curve.len() + 1);
    path.push(1.0);
    path.extend_from_slice(&curve.values);
    max_drawdown(&path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub asr: Option<f64>,
    pub cr: Option<f64>,
    pub ir: Option<f64>,
}

/// Sharpe-style, Calmar and information ratios. A zero denominator gives
/// `None`. The information ratio is `mean / sample std` of the daily
/// excess returns over `benchmark` and is not annualized.
pub fn metric_ratios(
    arr: f64,
    avol: f64,
    mdd: f64,
    curve: &EquityCurve,
    benchmark: &EquityCurve,
) -> Result<Ratios> {
    if curve.dates != benchmark.dates {
        return Err(Error::Shape("portfolio and benchmark dates differ".into()));
    }
    let ratio = |num: f64, den: f64| (den != 0.0).then(|| num / den);
    let excess: Vec<f64> = curve
        .returns
        .iter()
        .zip(&benchmark.returns)
        .map(|(r, b)| r - b)
        .collect();
    let ir = if excess.len() < 2 {
        None
    } else {
        let mean = excess.iter().sum::<f64>() / excess.len() as f64;
        ratio(mean, sample_std(&excess))
    };
    Ok(Ratios {
        asr: ratio(arr, avol),
        cr: ratio(arr, mdd.abs()),
        ir,
    })
}

/// Mean squared and mean absolute error over aligned pairs.
pub fn metric_errors(predictions: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no prediction/label pairs".into()));
    }
    let n = predictions.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, y) in predictions.iter().zip(labels) {
        se += (p - y) * (p - y);
        ae += (p - y).abs();
    }
    Ok((se / n, ae / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestReport {
    pub k: usize,
    pub arr: f64,
    pub avol: f64,
    /// Positive fraction; rendered negative in JSON.
    pub mdd: f64,
    pub asr: Option<f64>,
    pub cr: Option<f64>,
    pub ir: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    pub timing: Timing,
    pub curve: EquityCurve,
    pub benchmark: EquityCurve,
}

#[derive(Serialize, Deserialize)]
pub struct ReportJson {
    pub k: usize,
    pub arr: f64,
    pub avol: f64,
    pub mdd: f64,
    pub asr: Option<f64>,
    pub cr: Option<f64>,
    pub ir: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    pub timing: Timing,
    pub curve: Vec<CurvePoint>,
    pub benchmark: Vec<CurvePoint>,
}

/// Options for [`run_backtest`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub k: usize,
    pub timing: Timing,
    /// Daily risk-free return; when set the information ratio is measured
    /// against it instead of the equal-weighted universe.
    pub risk_free: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            k: 10,
            timing: Timing::CloseToClose,
            risk_free: None,
        }
    }
}

/// Simulates, benchmarks and scores one set of predictions.
/// `label_t`-day forward close return from `day`, the training target.
pub fn forward_label(panel: &Panel, stock: usize, day: usize, label_t: usize) -> Option<f64> {
    let later = day + label_t;
    if later >= panel.n_days() || !panel.is_valid(stock, day) || !panel.is_valid(stock, later) {
        return None;
    }
    Some(panel.close(stock, later)? / panel.close(stock, day)? - 1.0)
}

/// Top-k curve, benchmark, the six metrics, and MSE/MAE of the scores
/// against the `label_t`-day forward returns recomputed from `panel`.
pub fn run_backtest(
    scores: &ScoreTable,
    panel: &Panel,
    cfg: &BacktestConfig,
    label_t: usize,
) -> Result<BacktestReport> {
    let curve = simulate_topk(scores, panel, cfg.k, cfg.timing)?;
    let benchmark = benchmark_curve(scores, panel, cfg.timing)?;
    let arr = metric_arr(&curve)?;
    let avol = metric_avol(&curve)?;
    let mdd = metric_mdd(&curve);
    let reference = match cfg.risk_free {
        Some(rf) => EquityCurve::constant(curve.dates.clone(), rf),
        None => benchmark.clone(),
    };
    let ratios = metric_ratios(arr, avol, mdd, &curve, &reference)?;
    let mut p = Vec::new();
    let mut y = Vec::new();
    for d in &scores.days {
        let Some(day) = panel.day_index(d.date) else { continue };
        for &(i, s, _) in &d.entries {
            if let Some(label) = forward_label(panel, i, day, label_t) {
                p.push(s);
                y.push(label);
            }
        }
    }
    let (mse, mae) = metric_errors(&p, &y)?;
    Ok(BacktestReport {
        k: cfg.k,
        arr,
        avol,
        mdd,
        asr: ratios.asr,
        cr: ratios.cr,
        ir: ratios.ir,
        mse,
        mae,
        timing: cfg.timing,
        curve,
        benchmark,
    })
}

impl BacktestReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            k: self.k,
            arr: self.arr,
            avol: self.avol,
            mdd: -self.mdd,
            asr: self.asr,
            cr: self.cr,
            ir: self.ir,
            mse: self.mse,
            mae: self.mae,
            timing: self.timing,
            curve: self.curve.points(),
            benchmark: self.benchmark.points(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_json())?)?;
        Ok(())
    }
}
