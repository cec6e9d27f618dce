//! End-to-end runs: configuration, data preparation and the command
//! implementations shared by the binary and the tests.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backtest::{run_backtest, BacktestConfig, BacktestReport, Timing};
use crate::dataset::{
    build_windows, compute_daily_returns, load_panel, preprocess, split_by_date, ColumnSchema,
    DateRange, DaySample, LoadReport, Panel, Split, SplitBoundaries,
};
use crate::error::{Error, Result};
use crate::model::{average_scores, Checkpoint, MciGru, ModelConfig, ScoreTable, TrainLog};
use crate::numkernel::{Precision, Real};
use crate::relgraph::{build_graph, CorrelationGraph, ThresholdMode};
use crate::synth::{generate, write_bars_csv, SynthConfig};

/// Settings outside the network itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Bar CSV read by `ingest`.
    pub data: Option<PathBuf>,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub valid_start: Option<NaiveDate>,
    pub valid_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    /// Used when explicit split dates are absent.
    pub train_frac: f64,
    pub valid_frac: f64,
    pub mad_clip: f64,
    pub threshold_mode: ThresholdMode,
    pub precision: Precision,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub timing: Timing,
    pub risk_free: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            data: None,
            train_start: None,
            train_end: None,
            valid_start: None,
            valid_end: None,
            test_start: None,
            test_end: None,
            train_frac: 0.6,
            valid_frac: 0.2,
            mad_clip: 5.0,
            threshold_mode: ThresholdMode::Signed,
            precision: Precision::F32,
            seeds: vec![1],
            k: 10,
            timing: Timing::CloseToClose,
            risk_free: None,
        }
    }
}

/// Full run configuration, stored as one flat JSON object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub run: RunSettings,
}

fn keys_of<T: Serialize>(v: &T) -> BTreeSet<String> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

impl RunConfig {
    pub fn valid_keys() -> BTreeSet<String> {
        let mut k = keys_of(&ModelConfig::default());
        k.extend(keys_of(&RunSettings::default()));
        k.insert("modules".into());
        k
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        for v in [
            serde_json::to_value(&self.model).expect("serializable"),
            serde_json::to_value(&self.run).expect("serializable"),
        ] {
            if let Value::Object(o) = v {
                m.extend(o);
            }
        }
        Value::Object(m)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(mut map) = v else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        // `modules` is shorthand for the four module toggles.
        let modules = match map.remove("modules") {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => return Err(Error::Config(format!("modules must be a string, got {other}"))),
        };
        let model_keys = keys_of(&ModelConfig::default());
        let run_keys = keys_of(&RunSettings::default());
        let (mut model, mut run) = (Map::new(), Map::new());
        for (k, v) in map {
            if model_keys.contains(&k) {
                model.insert(k, v);
            } else if run_keys.contains(&k) {
                run.insert(k, v);
            } else {
                let valid: Vec<String> = Self::valid_keys().into_iter().collect();
                return Err(Error::Config(format!(
                    "unknown config key {k:?}; valid keys: {}",
                    valid.join(", ")
                )));
            }
        }
        let mut cfg = Self {
            model: serde_json::from_value(Value::Object(model))
                .map_err(|e| Error::Config(format!("model settings: {e}")))?,
            run: serde_json::from_value(Value::Object(run))
                .map_err(|e| Error::Config(format!("run settings: {e}")))?,
        };
        if let Some(m) = modules {
            cfg.model.set_modules(&m)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(v)
    }

    /// Applies `key=value` overrides. Values are parsed as JSON when
    /// possible and taken as strings otherwise.
    pub fn with_overrides(self, overrides: &[String]) -> Result<Self> {
        let Value::Object(map) = self.to_value() else {
            unreachable!("config serializes to an object")
        };
        Self::from_value(Value::Object(apply_overrides(map, overrides)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let r = &self.run;
        if r.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if r.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(r.mad_clip > 0.0) {
            return Err(Error::Config(format!("mad_clip must be positive, got {}", r.mad_clip)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_value())?)?;
        Ok(())
    }

    /// Explicit split dates, or fractional splits over `dates`.
    pub fn split_boundaries(&self, dates: &[NaiveDate]) -> Result<SplitBoundaries> {
        let r = &self.run;
        let explicit = [
            r.train_start,
            r.train_end,
            r.valid_start,
            r.valid_end,
            r.test_start,
            r.test_end,
        ];
        if explicit.iter().all(Option::is_some) {
            let d: Vec<NaiveDate> = explicit.iter().flatten().copied().collect();
            let b = SplitBoundaries {
                train: DateRange::new(d[0], d[1]),
                valid: DateRange::new(d[2], d[3]),
                test: DateRange::new(d[4], d[5]),
            };
            b.validate()?;
            return Ok(b);
        }
        if explicit.iter().any(Option::is_some) {
            return Err(Error::Config(
                "give all six split dates or none (fractions are used then)".into(),
            ));
        }
        let t = dates.len();
        let n_train = (t as f64 * r.train_frac).round() as usize;
        let n_valid = (t as f64 * r.valid_frac).round() as usize;
        if !(r.train_frac > 0.0 && r.valid_frac > 0.0) || n_train == 0 || n_valid == 0 || n_train + n_valid >= t {
            return Err(Error::Config(format!(
                "split fractions {}/{} leave an empty split over {t} days",
                r.train_frac, r.valid_frac
            )));
        }
        Ok(SplitBoundaries {
            train: DateRange::new(dates[0], dates[n_train - 1]),
            valid: DateRange::new(dates[n_train], dates[n_train + n_valid - 1]),
            test: DateRange::new(dates[n_train + n_valid], dates[t - 1]),
        })
    }
}

/// Normalized panel, graph and windows ready for training.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub panel: Panel,
    pub graph: CorrelationGraph,
    pub train: Vec<DaySample>,
    pub valid: Vec<DaySample>,
    pub test: Vec<DaySample>,
}

/// Splits, normalizes, builds the graph as of the last training day and
/// cuts the windows. `raw` must already carry daily returns.
pub fn prepare(raw: Panel, cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let bounds = cfg.split_boundaries(&raw.dates)?;
    let panel = split_by_date(raw, &bounds)?;
    let (panel, report) = preprocess(panel, cfg.run.mad_clip, Split::Train)?;
    if !report.excluded.is_empty() {
        warn!("excluded {} stocks with short training history", report.excluded.len());
    }
    let train_days = panel
        .split_range(Split::Train)
        .ok_or_else(|| Error::Empty("training split".into()))?;
    let as_of = train_days.end - 1;
    let mut lookback = cfg.model.graph_lookback;
    if lookback > train_days.len() {
        warn!(
            "graph lookback {lookback} exceeds the {} training days; using all of them",
            train_days.len()
        );
        lookback = train_days.len();
    }
    let graph = build_graph(
        &panel,
        as_of,
        lookback,
        cfg.model.judge_value,
        cfg.run.threshold_mode,
    )?;
    let windows = build_windows(&panel, cfg.model.his_t, cfg.model.label_t)?;
    let pick = |s: Split| -> Vec<DaySample> {
        windows.iter().filter(|w| w.split == Some(s)).cloned().collect()
    };
    Ok(Prepared {
        train: pick(Split::Train),
        valid: pick(Split::Valid),
        test: pick(Split::Test),
        panel,
        graph,
    })
}

pub fn prepared_split(prep: &Prepared, split: Split) -> &[DaySample] {
    match split {
        Split::Train => &prep.train,
        Split::Valid => &prep.valid,
        Split::Test => &prep.test,
    }
}

/// Trains one seed at precision `T` and returns its checkpoint.
pub fn train_seed<T: Real>(prep: &Prepared, model: &ModelConfig, seed: u64) -> Result<(MciGru<T>, TrainLog)> {
    let mut m = MciGru::<T>::new(ModelConfig {
        seed,
        ..model.clone()
    })?;
    let adj = prep.graph.adjacency();
    let log = m.train(&prep.train, &prep.valid, &adj)?;
    Ok((m, log))
}

/// Scores a split with a checkpoint at the precision it was saved in.
pub fn score_checkpoint(ckpt: Checkpoint, prep: &Prepared, split: Split) -> Result<ScoreTable> {
    let adj = prep.graph.adjacency();
    let samples = prepared_split(prep, split);
    let tickers = &prep.panel.tickers;
    match ckpt.precision {
        Precision::F32 => ckpt.into_model::<f32>()?.predict_scores(samples, &adj, tickers),
        Precision::F64 => ckpt.into_model::<f64>()?.predict_scores(samples, &adj, tickers),
    }
}

const PANEL_FORMAT: &str = "mcigru-panel";
const PANEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PanelCache {
    format: String,
    version: u32,
    report: LoadReport,
    panel: Panel,
}

pub fn write_panel_cache(panel: &Panel, report: &LoadReport, path: impl AsRef<Path>) -> Result<()> {
    let cache = PanelCache {
        format: PANEL_FORMAT.into(),
        version: PANEL_VERSION,
        report: report.clone(),
        panel: panel.clone(),
    };
    std::fs::write(path, serde_json::to_vec(&cache)?)?;
    Ok(())
}

pub fn read_panel_cache(path: impl AsRef<Path>) -> Result<Panel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Config(format!("cannot read panel cache {} ({e}); run ingest first", path.display()))
    })?;
    let cache: PanelCache = serde_json::from_slice(&bytes)?;
    if cache.format != PANEL_FORMAT || cache.version != PANEL_VERSION {
        return Err(Error::Config(format!(
            "{} is not a version {PANEL_VERSION} panel cache",
            path.display()
        )));
    }
    Ok(cache.panel)
}

/// Artifact locations under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.resolved.json")
    }
    pub fn panel(&self) -> PathBuf {
        self.dir.join("panel.cache")
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.json")
    }
    pub fn checkpoint(&self, seed: u64) -> PathBuf {
        self.dir.join(format!("ckpt.seed{seed}"))
    }
    pub fn losses(&self) -> PathBuf {
        self.dir.join("losses.csv")
    }
    pub fn scores(&self) -> PathBuf {
        self.dir.join("scores.csv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn curve(&self) -> PathBuf {
        self.dir.join("curve.csv")
    }
}

/// Reads the configured CSV, computes returns and writes the panel cache.
pub fn cmd_ingest(cfg: &RunConfig, out: &Layout) -> Result<LoadReport> {
    cfg.validate()?;
    let data = cfg
        .run
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data path configured (set data=PATH)".into()))?;
    let (panel, report) = load_panel(data, &ColumnSchema::default())?;
    if panel.n_days() == 0 || panel.n_stocks() == 0 {
        return Err(Error::Empty(format!("{} holds no usable rows", data.display())));
    }
    let panel = compute_daily_returns(panel);
    write_panel_cache(&panel, &report, out.panel())?;
    cfg.save(out.config())?;
    Ok(report)
}

fn apply_overrides(mut map: Map<String, Value>, overrides: &[String]) -> Result<Map<String, Value>> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

/// Generator settings from an optional JSON file plus `key=value` overrides.
pub fn load_synth_config(path: Option<&Path>, overrides: &[String]) -> Result<SynthConfig> {
    let base: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(SynthConfig::default())?,
    };
    let Value::Object(map) = base else {
        return Err(Error::Config("synthetic config must be a JSON object".into()));
    };
    let cfg: SynthConfig = serde_json::from_value(Value::Object(apply_overrides(map, overrides)?))
        .map_err(|e| Error::Config(format!("synthetic config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes a planted-signal market: `bars.csv`, the generating graph and a
/// run config pointing at both with matching split dates.
pub fn cmd_synth(synth: &SynthConfig, out: &Layout) -> Result<RunConfig> {
    let market = generate(synth)?;
    let bars = out.dir.join("bars.csv");
    write_bars_csv(&market.bars, &bars)?;
    market.truth.save(out.dir.join("truth_graph.json"))?;
    std::fs::write(out.dir.join("synth.json"), serde_json::to_vec_pretty(synth)?)?;
    let s = market.splits;
    let cfg = RunConfig {
        model: ModelConfig::default(),
        run: RunSettings {
            data: Some(bars),
            train_start: Some(s.train.start),
            train_end: Some(s.train.end),
            valid_start: Some(s.valid.start),
            valid_end: Some(s.valid.end),
            test_start: Some(s.test.start),
            test_end: Some(s.test.end),
            ..RunSettings::default()
        },
    };
    cfg.save(out.dir.join("config.json"))?;
    Ok(cfg)
}

/// Trains one model per seed and writes checkpoints, the graph and the
/// loss log (`seed,epoch,train_loss,valid_loss`).
pub fn cmd_train(cfg: &RunConfig, out: &Layout) -> Result<Vec<TrainLog>> {
    cfg.validate()?;
    let prep = prepare(read_panel_cache(out.panel())?, cfg)?;
    prep.graph.save(out.graph())?;
    cfg.save(out.config())?;
    let mut csv = String::from("seed,epoch,train_loss,valid_loss\n");
    let mut logs = Vec::new();
    for &seed in &cfg.run.seeds {
        info!("training seed {seed} ({})", cfg.model.module_label());
        let (ckpt, log) = match cfg.run.precision {
            Precision::F32 => {
                let (m, l) = train_seed::<f32>(&prep, &cfg.model, seed)?;
                (Checkpoint::from_model(&m), l)
            }
            Precision::F64 => {
                let (m, l) = train_seed::<f64>(&prep, &cfg.model, seed)?;
                (Checkpoint::from_model(&m), l)
            }
        };
        ckpt.save(out.checkpoint(seed))?;
        for e in &log.epochs {
            let v = e.valid_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(csv, "{seed},{},{},{v}", e.epoch, e.train_loss).expect("string write");
        }
        logs.push(log);
    }
    std::fs::write(out.losses(), csv)?;
    Ok(logs)
}

/// Scores the test split with every seed's checkpoint and averages the
/// scores per `(date, ticker)`.
pub fn cmd_predict(cfg: &RunConfig, out: &Layout) -> Result<ScoreTable> {
    cfg.validate()?;
    let prep = prepare(read_panel_cache(out.panel())?, cfg)?;
    let mut tables = Vec::new();
    for &seed in &cfg.run.seeds {
        let path = out.checkpoint(seed);
        let ckpt = Checkpoint::load(&path).map_err(|e| match e {
            Error::Io(io) => Error::Checkpoint(format!("{}: {io}", path.display())),
            other => other,
        })?;
        if ckpt.config != (ModelConfig { seed, ..cfg.model.clone() }) {
            warn!("{}: checkpoint config differs from the run config", path.display());
        }
        tables.push(score_checkpoint(ckpt, &prep, Split::Test)?);
    }
    let scores = average_scores(&tables)?;
    scores.write_csv(out.scores())?;
    Ok(scores)
}

/// Scores the test split with the seed ensemble, then runs the top-k
/// backtest and writes `report.json` and `curve.csv`.
pub fn cmd_backtest(cfg: &RunConfig, out: &Layout) -> Result<BacktestReport> {
    let scores = cmd_predict(cfg, out)?;
    let prep = prepare(read_panel_cache(out.panel())?, cfg)?;
    let bt = BacktestConfig {
        k: cfg.run.k,
        timing: cfg.run.timing,
        risk_free: cfg.run.risk_free,
    };
    let report = run_backtest(&scores, &prep.panel, &bt, cfg.model.label_t)?;
    write_report(&report, cfg, out)?;
    Ok(report)
}

fn write_report(report: &BacktestReport, cfg: &RunConfig, out: &Layout) -> Result<()> {
    let mut v = serde_json::to_value(report.to_json())?;
    if let Value::Object(m) = &mut v {
        m.insert(
            "meta".into(),
            serde_json::json!({
                "modules": cfg.model.module_label(),
                "seeds": cfg.run.seeds,
                "precision": cfg.run.precision,
            }),
        );
    }
    std::fs::write(out.report(), serde_json::to_vec_pretty(&v)?)?;
    report.curve.write_csv(out.curve())?;
    cfg.save(out.config())?;
    Ok(())
}

/// Parameters accepted by [`cmd_sweep`].
pub const SWEEP_PARAMETERS: [&str; 6] = [
    "judge_value",
    "label_t",
    "his_t",
    "hidden_size",
    "gat_heads",
    "num_hidden_states",
];

/// Config with one sweep parameter set. `hidden_size` sets the first GRU
/// layer and the projected temporal width; `num_hidden_states` sets `d_r`.
pub fn apply_sweep_value(cfg: &RunConfig, parameter: &str, value: f64) -> Result<RunConfig> {
    let mut c = cfg.clone();
    let count = || -> Result<usize> {
        if value >= 1.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(Error::Config(format!("{parameter} needs a positive integer, got {value}")))
        }
    };
    match parameter {
        "judge_value" => c.model.judge_value = value,
        "label_t" => c.model.label_t = count()?,
        "his_t" => c.model.his_t = count()?,
        "hidden_size" => {
            let n = count()?;
            c.model.gru_layers[0] = n;
            c.model.temporal_dim = n;
        }
        "gat_heads" => c.model.gat_heads = count()?,
        "num_hidden_states" => c.model.d_r = count()?,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; valid: {}",
                SWEEP_PARAMETERS.join(", ")
            )))
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub arr: f64,
    pub avol: f64,
    pub mdd: f64,
    pub asr: Option<f64>,
    pub cr: Option<f64>,
    pub ir: Option<f64>,
    pub mse: f64,
    pub mae: f64,
}

/// Full train, predict and backtest per value, each in its own
/// subdirectory; writes `sweep_{parameter}.csv`.
pub fn cmd_sweep(cfg: &RunConfig, out: &Layout, parameter: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    if !SWEEP_PARAMETERS.contains(&parameter) {
        return Err(Error::Config(format!(
            "unknown sweep parameter {parameter:?}; valid: {}",
            SWEEP_PARAMETERS.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply_sweep_value(cfg, parameter, v))
        .collect::<Result<Vec<_>>>()?;
    let panel = out.panel();
    let mut rows = Vec::new();
    for (&value, c) in values.iter().zip(&configs) {
        let sub = Layout::new(out.dir.join(format!("{parameter}={value}")))?;
        std::fs::copy(&panel, sub.panel()).map_err(|e| {
            Error::Config(format!("cannot read panel cache {} ({e}); run ingest first", panel.display()))
        })?;
        cmd_train(c, &sub)?;
        let r = cmd_backtest(c, &sub)?;
        rows.push(SweepRow {
            value,
            arr: r.arr,
            avol: r.avol,
            mdd: -r.mdd,
            asr: r.asr,
            cr: r.cr,
            ir: r.ir,
            mse: r.mse,
            mae: r.mae,
        });
    }
    let mut w = csv::Writer::from_path(out.dir.join(format!("sweep_{parameter}.csv")))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Human-readable summary of a report file.
pub fn cmd_report(out: &Layout) -> Result<String> {
    let v: Value = serde_json::from_slice(&std::fs::read(out.report())?)?;
    let get = |k: &str| match v.get(k) {
        Some(Value::Number(n)) if n.is_u64() => n.to_string(),
        Some(Value::Number(n)) => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::Null) | None => "n/a".into(),
        Some(other) => other.to_string(),
    };
    let mut s = String::new();
    if let Some(m) = v.get("meta").and_then(|m| m.get("modules")) {
        writeln!(s, "modules {}", m.as_str().unwrap_or("?")).expect("string write");
    }
    for k in ["k", "arr", "avol", "mdd", "asr", "cr", "ir", "mse", "mae"] {
        writeln!(s, "{k:<5} {}", get(k)).expect("string write");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_value(cfg.to_value()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let cfg = RunConfig::default()
            .with_overrides(&["his_t=20".into(), "k=5".into(), "timing=open_to_open".into()])
            .unwrap();
        assert_eq!(cfg.model.his_t, 20);
        assert_eq!(cfg.run.k, 5);
        assert_eq!(cfg.run.timing, Timing::OpenToOpen);
        let err = RunConfig::default().with_overrides(&["bogus=1".into()]).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn module_shorthand_sets_toggles() {
        let cfg = RunConfig::default().with_overrides(&["modules=I+II".into()]).unwrap();
        assert_eq!(cfg.model.module_label(), "I+II");
        assert!(!cfg.model.use_latent && !cfg.model.use_head_gat);
        assert!(RunConfig::default().with_overrides(&["modules=V".into()]).is_err());
    }

    #[test]
    fn sweep_mapping() {
        let cfg = RunConfig::default();
        let c = apply_sweep_value(&cfg, "hidden_size", 64.0).unwrap();
        assert_eq!((c.model.gru_layers[0], c.model.temporal_dim), (64, 64));
        assert_eq!(apply_sweep_value(&cfg, "num_hidden_states", 8.0).unwrap().model.d_r, 8);
        assert!(apply_sweep_value(&cfg, "dropout", 0.1).is_err());
        assert!(apply_sweep_value(&cfg, "his_t", 2.5).is_err());
    }
}
