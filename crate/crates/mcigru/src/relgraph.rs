//! Stock relationship graph from trailing return correlations.

use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::dataset::Panel;
use crate::error::{Error, Result};

/// Pearson correlation of two aligned series.
///
/// Returns `None` when fewer than two observations are given or either
/// series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson: series lengths differ");
    // Single-pass co-moment accumulation (Welford).
    let mut n = 0.0;
    let (mut mean_a, mut mean_b) = (0.0, 0.0);
    let (mut m2_a, mut m2_b, mut co) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        n += 1.0;
        let dx = x - mean_a;
        mean_a += dx / n;
        let dy = y - mean_b;
        mean_b += dy / n;
        m2_a += dx * (x - mean_a);
        m2_b += dy * (y - mean_b);
        co += dx * (y - mean_b);
    }
    if n < 2.0 || !(m2_a > 0.0) || !(m2_b > 0.0) {
        return None;
    }
    Some((co / (m2_a.sqrt() * m2_b.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation over the entries where both series are defined.
pub fn pearson_masked(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson: series lengths differ");
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| x.zip(*y))
        .unzip();
    pearson(&xs, &ys)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Keep `ρ ≥ judge_value`.
    #[default]
    Signed,
    /// Keep `|ρ| ≥ judge_value`.
    Absolute,
}

impl ThresholdMode {
    fn keeps(self, rho: f64, judge_value: f64) -> bool {
        match self {
            ThresholdMode::Signed => rho >= judge_value,
            ThresholdMode::Absolute => rho.abs() >= judge_value,
        }
    }
}

/// Sorted neighbor lists; every node lists itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    lists: Vec<Vec<usize>>,
}

impl Adjacency {
    /// Builds from undirected edges, adding self-loops and symmetrizing.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut lists: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in edges {
            assert!(i < n && j < n, "edge ({i}, {j}) out of range for {n} nodes");
            if i != j {
                lists[i].push(j);
                lists[j].push(i);
            }
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Self { lists }
    }

    /// Self-loops only.
    pub fn isolated(n: usize) -> Self {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    /// Subgraph on `keep` (in that order), re-indexed to `0..keep.len()`.
    pub fn induced(&self, keep: &[usize]) -> Adjacency {
        let mut pos = vec![usize::MAX; self.lists.len()];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let lists = keep
            .iter()
            .map(|&old| {
                let mut l: Vec<usize> = self.lists[old]
                    .iter()
                    .filter_map(|&j| (pos[j] != usize::MAX).then_some(pos[j]))
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        Adjacency { lists }
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Adjacency {
        let mut lists = vec![Vec::new(); self.lists.len()];
        for (i, l) in self.lists.iter().enumerate() {
            let mut m: Vec<usize> = l.iter().map(|&j| perm[j]).collect();
            m.sort_unstable();
            lists[perm[i]] = m;
        }
        Adjacency { lists }
    }

    pub fn cross_edge_count(&self) -> usize {
        self.lists.iter().map(|l| l.len() - 1).sum::<usize>() / 2
    }
}

/// Thresholded correlation graph over the stock universe.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGraph {
    pub tickers: Vec<String>,
    /// Sorted `(neighbor, weight)` lists, self-loop included with weight 1.
    neighbors: Vec<Vec<(usize, f64)>>,
    pub judge_value: f64,
    pub mode: ThresholdMode,
    pub window: (NaiveDate, NaiveDate),
}

impl CorrelationGraph {
    /// Assembles a graph from undirected weighted edges.
    pub fn from_edges(
        tickers: Vec<String>,
        edges: &[(usize, usize, f64)],
        judge_value: f64,
        mode: ThresholdMode,
        window: (NaiveDate, NaiveDate),
    ) -> Result<Self> {
        let n = tickers.len();
        let mut neighbors: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i == j {
                continue;
            }
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
        for l in &mut neighbors {
            l.sort_by_key(|&(j, _)| j);
            l.dedup_by_key(|&mut (j, _)| j);
        }
        Ok(Self {
            tickers,
            neighbors,
            judge_value,
            mode,
            window,
        })
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.neighbors[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|p| self.neighbors[i][p].1)
    }

    /// Undirected cross edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (i, l) in self.neighbors.iter().enumerate() {
            out.extend(l.iter().filter(|&&(j, _)| j > i).map(|&(j, w)| (i, j, w)));
        }
        out
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency {
            lists: self
                .neighbors
                .iter()
                .map(|l| l.iter().map(|&(j, _)| j).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n(),
            tickers: self.tickers.clone(),
            edges: self.edges(),
            judge_value: self.judge_value,
            mode: self.mode,
            window: self.window,
        }
    }

    pub fn from_json(g: GraphJson) -> Result<Self> {
        if g.tickers.len() != g.n {
            return Err(Error::Shape(format!(
                "graph declares n = {} but lists {} tickers",
                g.n,
                g.tickers.len()
            )));
        }
        Self::from_edges(g.tickers, &g.edges, g.judge_value, g.mode, g.window)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g: GraphJson = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_json(g)
    }
}

/// On-disk graph layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub tickers: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub judge_value: f64,
    #[serde(default)]
    pub mode: ThresholdMode,
    pub window: (NaiveDate, NaiveDate),
}

/// Correlates every pair of stocks over the `lookback_days` returns ending
/// at `as_of` (inclusive) and keeps the pairs passing the threshold.
/// Pairs with an undefined correlation get no edge.
pub fn build_graph(
    panel: &Panel,
    as_of: usize,
    lookback_days: usize,
    judge_value: f64,
    mode: ThresholdMode,
) -> Result<CorrelationGraph> {
    if as_of >= panel.n_days() {
        return Err(Error::Config(format!(
            "as_of day {as_of} is outside the panel ({} days)",
            panel.n_days()
        )));
    }
    if lookback_days < 2 || lookback_days > as_of + 1 {
        return Err(Error::InsufficientHistory(format!(
            "lookback of {lookback_days} days needs at least 2 and at most {} available days",
            as_of + 1
        )));
    }
    let start = as_of + 1 - lookback_days;
    let n = panel.n_stocks();
    let series: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| (start..=as_of).map(|d| panel.daily_return(i, d)).collect())
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some(rho) = pearson_masked(&series[i], &series[j]) {
                if mode.keeps(rho, judge_value) {
                    edges.push((i, j, rho));
                }
            }
        }
    }
    if edges.is_empty() && n > 1 {
        warn!("correlation graph has no cross edges at judge_value = {judge_value}");
    }
    CorrelationGraph::from_edges(
        panel.tickers.clone(),
        &edges,
        judge_value,
        mode,
        (panel.dates[start], panel.dates[as_of]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        // sums: dx = [-1.5,-.5,.5,1.5], dy = [-.5,-1.5,1.5,.5]; Σdxdy = 3, Σdx² = Σdy² = 5
        assert!((pearson(&a, &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn undefined_cases() {
        assert_eq!(pearson(&[1.0], &[2.0]), None);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert_eq!(
            pearson_masked(&[Some(1.0), None, Some(2.0)], &[None, Some(1.0), Some(3.0)]),
            None
        );
    }

    #[test]
    fn induced_and_permuted_adjacency() {
        let adj = Adjacency::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        assert_eq!(adj.neighbors(1), &[0, 1, 2]);
        let sub = adj.induced(&[1, 3]);
        assert_eq!(sub.neighbors(0), &[0]);
        assert_eq!(sub.neighbors(1), &[1]);
        let p = adj.permuted(&[3, 2, 1, 0]);
        assert_eq!(p.neighbors(3), &[2, 3]);
        assert_eq!(adj.cross_edge_count(), 3);
    }

    fn panel_from_closes(series: &[&[f64]]) -> Panel {
        use crate::dataset::tests::{bar, date};
        let start = date("2021-01-04");
        let bars = series
            .iter()
            .enumerate()
            .flat_map(|(i, closes)| {
                closes
                    .iter()
                    .enumerate()
                    .map(move |(d, &c)| bar(&format!("S{i}"), start + chrono::Days::new(d as u64), c))
            })
            .collect();
        crate::dataset::compute_daily_returns(Panel::from_bars(bars).unwrap().0)
    }

    fn closes(returns: &[f64]) -> Vec<f64> {
        let mut c = vec![100.0];
        for r in returns {
            let last = *c.last().unwrap();
            c.push(last * (1.0 + r));
        }
        c
    }

    #[test]
    fn identical_series_keep_their_edge() {
        let a = closes(&[0.01, -0.02, 0.03, 0.0, 0.01]);
        let p = panel_from_closes(&[&a, &a]);
        let g = build_graph(&p, 5, 6, 0.8, ThresholdMode::Signed).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert!((g.weight(0, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_series_get_no_edge() {
        let a = closes(&[0.1, -0.1, 0.1, -0.1]);
        let b = closes(&[0.1, 0.1, -0.1, -0.1]);
        let p = panel_from_closes(&[&a, &b]);
        let g = build_graph(&p, 4, 5, 0.8, ThresholdMode::Signed).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.adjacency().neighbors(0), &[0]);
    }

    #[test]
    fn lookback_must_fit() {
        let a = closes(&[0.01, 0.02]);
        let p = panel_from_closes(&[&a, &a]);
        assert!(matches!(build_graph(&p, 2, 4, 0.8, ThresholdMode::Signed), Err(Error::InsufficientHistory(_))));
        assert!(matches!(build_graph(&p, 2, 1, 0.8, ThresholdMode::Signed), Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn graph_json_round_trip() {
        let a = closes(&[0.01, -0.02, 0.03, 0.0]);
        let b = closes(&[-0.01, 0.02, -0.03, 0.0]);
        let p = panel_from_closes(&[&a, &b, &a]);
        let g = build_graph(&p, 4, 5, 0.8, ThresholdMode::Absolute).unwrap();
        assert_eq!(g.edges().len(), 3);
        let back = CorrelationGraph::from_json(g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}

