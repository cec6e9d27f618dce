//! Synthetic market with a planted, learnable return signal.
//!
//! Each stock carries a latent AR(1) signal built from a cluster factor and
//! an idiosyncratic part. The next day's return loads on the stock's own
//! signal and on the mean signal of its cluster peers, plus cluster-common
//! and idiosyncratic noise, minus a small pull of log price toward its
//! starting level so that price features stay in range across splits. The
//! signal leaks into traded volume, so a model that reads volume history and
//! the peer graph can predict returns.

use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{DateRange, SplitBoundaries, StockBar};
use crate::error::{Error, Result};
use crate::relgraph::{CorrelationGraph, ThresholdMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub clusters: usize,
    pub seed: u64,
    pub start: NaiveDate,
    /// Persistence of the latent signals.
    pub phi: f64,
    /// Loading of each signal on its cluster factor.
    pub cluster_loading: f64,
    /// Return per unit of own signal.
    pub beta: f64,
    /// Return per unit of peer-mean signal.
    pub gamma: f64,
    /// Std of the cluster-common return shock.
    pub common_noise: f64,
    /// Std of the idiosyncratic return shock.
    pub idio_noise: f64,
    /// Daily pull of log price back toward its starting level.
    pub reversion: f64,
    /// Log-volume per unit of signal.
    pub volume_loading: f64,
    /// Fractions of days in the train and validation splits.
    pub train_frac: f64,
    pub valid_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stocks: 20,
            n_days: 600,
            clusters: 4,
            seed: 7,
            start: NaiveDate::from_ymd_opt(2018, 1, 2).expect("valid date"),
            phi: 0.9,
            cluster_loading: 0.9,
            beta: 0.008,
            gamma: 0.004,
            common_noise: 0.004,
            idio_noise: 0.002,
            reversion: 0.02,
            volume_loading: 0.25,
            train_frac: 0.6,
            valid_frac: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stocks == 0 || self.clusters == 0 || self.clusters > self.n_stocks {
            return Err(Error::Config(format!(
                "need 1 ≤ clusters ≤ n_stocks, got {} clusters for {} stocks",
                self.clusters, self.n_stocks
            )));
        }
        if self.n_days < 10 {
            return Err(Error::Config(format!("n_days = {} is too short", self.n_days)));
        }
        if !(0.0..1.0).contains(&self.phi) || !(0.0..=1.0).contains(&self.cluster_loading) {
            return Err(Error::Config("phi must lie in [0, 1) and cluster_loading in [0, 1]".into()));
        }
        if !(self.train_frac > 0.0 && self.valid_frac > 0.0 && self.train_frac + self.valid_frac < 1.0) {
            return Err(Error::Config("split fractions must be positive and sum below 1".into()));
        }
        Ok(())
    }

    pub fn cluster_of(&self, stock: usize) -> usize {
        stock % self.clusters
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub config: SynthConfig,
    pub tickers: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub bars: Vec<StockBar>,
    /// Latent signal per stock and day.
    pub signals: Vec<Vec<f64>>,
    /// Realized return per stock and day (0 on the first day).
    pub returns: Vec<Vec<f64>>,
    /// Price level each stock's log price reverts toward.
    pub anchors: Vec<f64>,
    /// Cluster membership graph used to generate the data.
    pub truth: CorrelationGraph,
    pub splits: SplitBoundaries,
}

/// Weekdays starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticMarket> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, t) = (cfg.n_stocks, cfg.n_days);
    let tickers: Vec<String> = (0..n).map(|i| format!("S{i:03}")).collect();
    let dates = business_days(cfg.start, t);
    let innov = (1.0 - cfg.phi * cfg.phi).sqrt();
    let idio_w = (1.0 - cfg.cluster_loading * cfg.cluster_loading).sqrt();

    let mut factor: Vec<f64> = (0..cfg.clusters).map(|_| normal()).collect();
    let mut idio: Vec<f64> = (0..n).map(|_| normal()).collect();
    let mut signals = vec![vec![0.0; t]; n];
    let mut returns = vec![vec![0.0; t]; n];
    let anchors: Vec<f64> = (0..n).map(|i| 20.0 + 5.0 * i as f64).collect();
    let mut close = anchors.clone();
    let base_volume = vec![1e6; n];
    let members: Vec<Vec<usize>> = (0..cfg.clusters)
        .map(|g| (0..n).filter(|&i| cfg.cluster_of(i) == g).collect())
        .collect();
    let mut bars = Vec::with_capacity(n * t);

    for d in 0..t {
        if d > 0 {
            let shocks: Vec<f64> = (0..cfg.clusters).map(|_| normal()).collect();
            for i in 0..n {
                let g = cfg.cluster_of(i);
                let peers: Vec<f64> = members[g]
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| signals[j][d - 1])
                    .collect();
                let peer_mean = if peers.is_empty() {
                    0.0
                } else {
                    peers.iter().sum::<f64>() / peers.len() as f64
                };
                returns[i][d] = cfg.beta * signals[i][d - 1]
                    + cfg.gamma * peer_mean
                    + cfg.common_noise * shocks[g]
                    + cfg.idio_noise * normal()
                    - cfg.reversion * (close[i] / anchors[i]).ln();
            }
            for f in factor.iter_mut() {
                *f = cfg.phi * *f + innov * normal();
            }
            for u in idio.iter_mut() {
                *u = cfg.phi * *u + innov * normal();
            }
        }
        for i in 0..n {
            signals[i][d] = cfg.cluster_loading * factor[cfg.cluster_of(i)] + idio_w * idio[i];
        }
        for i in 0..n {
            let prev = close[i];
            close[i] = prev * (1.0 + returns[i][d]);
            let open = prev * (1.0 + 0.002 * normal());
            let high = open.max(close[i]) * (1.0 + 0.003 * normal().abs());
            let low = open.min(close[i]) * (1.0 - 0.003 * normal().abs());
            let volume = base_volume[i] * (cfg.volume_loading * signals[i][d] + 0.02 * normal()).exp();
            bars.push(StockBar {
                ticker: tickers[i].clone(),
                date: dates[d],
                open,
                high,
                low,
                close: close[i],
                volume,
                turnover: volume * close[i],
            });
        }
    }

    let mut edges = Vec::new();
    for g in &members {
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                edges.push((i, j, 1.0));
            }
        }
    }
    let truth = CorrelationGraph::from_edges(
        tickers.clone(),
        &edges,
        1.0,
        ThresholdMode::Signed,
        (dates[0], dates[t - 1]),
    )?;

    let n_train = ((t as f64) * cfg.train_frac).round() as usize;
    let n_valid = ((t as f64) * cfg.valid_frac).round() as usize;
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= t {
        return Err(Error::Config("split fractions leave an empty split".into()));
    }
    let splits = SplitBoundaries {
        train: DateRange::new(dates[0], dates[n_train - 1]),
        valid: DateRange::new(dates[n_train], dates[n_train + n_valid - 1]),
        test: DateRange::new(dates[n_train + n_valid], dates[t - 1]),
    };

    Ok(SyntheticMarket {
        config: cfg.clone(),
        tickers,
        dates,
        bars,
        signals,
        returns,
        anchors,
        truth,
        splits,
    })
}

impl SyntheticMarket {
    /// Expected return from the close of `day` to the next close, given
    /// everything generated up to `day`.
    pub fn expected_return(&self, stock: usize, day: usize) -> f64 {
        let cfg = &self.config;
        let n = cfg.n_stocks;
        let g = cfg.cluster_of(stock);
        let (mut peer_sum, mut peers) = (0.0, 0usize);
        for j in (0..n).filter(|&j| j != stock && cfg.cluster_of(j) == g) {
            peer_sum += self.signals[j][day];
            peers += 1;
        }
        let peer_mean = if peers == 0 { 0.0 } else { peer_sum / peers as f64 };
        let close = self.bars[day * n + stock].close;
        cfg.beta * self.signals[stock][day] + cfg.gamma * peer_mean
            - cfg.reversion * (close / self.anchors[stock]).ln()
    }
}

/// Writes bars with the default column names.
pub fn write_bars_csv(bars: &[StockBar], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bars {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig {
            n_stocks: 6,
            n_days: 40,
            clusters: 2,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.bars, b.bars);
        assert_eq!(a.bars.len(), 240);
        assert_eq!(a.truth.edges().len(), 2 * 3);
        assert!(a.dates.iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        a.splits.validate().unwrap();
    }

    #[test]
    fn closes_compound_returns() {
        let m = generate(&SynthConfig {
            n_stocks: 3,
            n_days: 12,
            clusters: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        let closes: Vec<f64> = m.bars.iter().filter(|b| b.ticker == "S001").map(|b| b.close).collect();
        for d in 1..12 {
            assert!((closes[d] / closes[d - 1] - 1.0 - m.returns[1][d]).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_free_returns_are_expected_returns() {
        let m = generate(&SynthConfig {
            n_stocks: 6,
            n_days: 30,
            clusters: 2,
            common_noise: 0.0,
            idio_noise: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        for d in 1..30 {
            for i in 0..6 {
                assert!((m.returns[i][d] - m.expected_return(i, d - 1)).abs() < 1e-15);
            }
        }
    }
}
