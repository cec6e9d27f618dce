use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DayBatch, MciGru};
use crate::dataset::DaySample;
use crate::error::{Error, Result};
use crate::numkernel::Real;
use crate::relgraph::Adjacency;

/// Scores of the unmasked stocks on one anchor day, ascending by stock.
#[derive(Clone, Debug, PartialEq)]
pub struct DayScores {
    pub date: NaiveDate,
    /// `(stock index, score, realized label)`; the label is NaN when unknown.
    pub entries: Vec<(usize, f64, f64)>,
}

/// Model scores keyed by `(date, ticker)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub tickers: Vec<String>,
    pub days: Vec<DayScores>,
}

#[derive(Serialize, Deserialize)]
struct Row {
    date: NaiveDate,
    ticker: String,
    score: f64,
}

impl ScoreTable {
    pub fn score(&self, date: NaiveDate, ticker: &str) -> Option<f64> {
        let stock = self.tickers.iter().position(|t| t == ticker)?;
        let day = self.days.iter().find(|d| d.date == date)?;
        day.entries.iter().find(|e| e.0 == stock).map(|e| e.1)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for d in &self.days {
            for &(i, score, _) in &d.entries {
                w.serialize(Row {
                    date: d.date,
                    ticker: self.tickers[i].clone(),
                    score,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `date,ticker,score` file; tickers are ordered as `tickers`.
    /// Labels are not stored and read back as NaN.
    pub fn read_csv(path: impl AsRef<Path>, tickers: &[String]) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let index: BTreeMap<&str, usize> =
            tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut days: BTreeMap<NaiveDate, Vec<(usize, f64, f64)>> = BTreeMap::new();
        for row in r.deserialize() {
            let row: Row = row?;
            let i = *index
                .get(row.ticker.as_str())
                .ok_or_else(|| Error::Config(format!("unknown ticker {} in scores", row.ticker)))?;
            days.entry(row.date).or_default().push((i, row.score, f64::NAN));
        }
        let days = days
            .into_iter()
            .map(|(date, mut entries)| {
                entries.sort_by_key(|e| e.0);
                DayScores { date, entries }
            })
            .collect();
        Ok(Self {
            tickers: tickers.to_vec(),
            days,
        })
    }
}

/// Averages scores per `(date, ticker)` over several tables. A pair present
/// in only some tables is averaged over those.
pub fn average_scores(tables: &[ScoreTable]) -> Result<ScoreTable> {
    let first = tables.first().ok_or_else(|| Error::Empty("no score tables to average".into()))?;
    if tables.iter().any(|t| t.tickers != first.tickers) {
        return Err(Error::Config("score tables cover different tickers".into()));
    }
    let mut acc: BTreeMap<NaiveDate, BTreeMap<usize, (f64, f64, usize)>> = BTreeMap::new();
    for t in tables {
        for d in &t.days {
            for &(i, s, y) in &d.entries {
                let e = acc.entry(d.date).or_default().entry(i).or_insert((0.0, y, 0));
                e.0 += s;
                e.2 += 1;
            }
        }
    }
    Ok(ScoreTable {
        tickers: first.tickers.clone(),
        days: acc
            .into_iter()
            .map(|(date, m)| DayScores {
                date,
                entries: m.into_iter().map(|(i, (s, y, c))| (i, s / c as f64, y)).collect(),
            })
            .collect(),
    })
}

impl<T: Real> MciGru<T> {
    /// Scores every unmasked stock on every sample day.
    pub fn predict_scores(
        &self,
        samples: &[DaySample],
        graph: &Adjacency,
        tickers: &[String],
    ) -> Result<ScoreTable> {
        let mut days = Vec::with_capacity(samples.len());
        for s in samples {
            let Some(batch) = DayBatch::<T>::from_sample(s, graph) else {
                continue;
            };
            let t = self.forward(&batch)?;
            let entries = batch
                .stocks
                .iter()
                .zip(&t.predictions)
                .map(|(&i, p)| (i, p.as_f64(), s.labels[i]))
                .collect();
            days.push(DayScores { date: s.date, entries });
        }
        Ok(ScoreTable {
            tickers: tickers.to_vec(),
            days,
        })
    }
}
