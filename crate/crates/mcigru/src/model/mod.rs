//! The full network: temporal and cross-sectional encoders, latent state
//! fusion and the graph attention prediction head.

mod checkpoint;
mod config;
mod scores;
mod train;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use scores::{average_scores, DayScores, ScoreTable};
pub use train::{EpochLog, TrainLog};

use crate::agru::{AgruEncoder, EncoderOutput};
use crate::dataset::{DaySample, N_FEATURES};
use crate::error::{Error, Result};
use crate::gat::{encoder_specs, GatSpec, GatStack, GatStackTrace, HeadCombine};
use crate::latent::{init_bank_with, CrossAttention, CrossAttnTrace, LatentBank};
use crate::numkernel::{Activation, Matrix, ParamTensor, Parameterized, Real};
use crate::relgraph::Adjacency;

/// One anchor day restricted to its unmasked stocks.
#[derive(Clone, Debug)]
pub struct DayBatch<T> {
    pub day: usize,
    /// Panel stock indices of the rows, ascending.
    pub stocks: Vec<usize>,
    /// Window inputs, oldest first, each `stocks.len() × N_FEATURES`.
    pub inputs: Vec<Matrix<T>>,
    pub labels: Vec<T>,
    /// Graph induced on `stocks`.
    pub adj: Adjacency,
}

impl<T: Real> DayBatch<T> {
    /// `None` when every stock is masked out.
    pub fn from_sample(sample: &DaySample, graph: &Adjacency) -> Option<Self> {
        let stocks: Vec<usize> = sample.stocks().collect();
        if stocks.is_empty() {
            return None;
        }
        let inputs = (0..sample.his_t)
            .map(|step| {
                Matrix::from_fn(stocks.len(), N_FEATURES, |r, c| {
                    T::lit(sample.input(stocks[r], step)[c])
                })
            })
            .collect();
        let labels = stocks.iter().map(|&i| T::lit(sample.labels[i])).collect();
        Some(Self {
            day: sample.day,
            adj: graph.induced(&stocks),
            stocks,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.stocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stocks.is_empty()
    }

    /// The anchor day's features.
    pub fn last_inputs(&self) -> &Matrix<T> {
        self.inputs.last().expect("non-empty window")
    }
}

/// Prediction head.
#[derive(Clone, Debug, PartialEq)]
pub enum Head<T> {
    Gat(GatStack<T>),
    Linear { w: ParamTensor<T>, b: ParamTensor<T> },
}

#[derive(Clone, Debug)]
pub enum HeadTrace<T> {
    Gat(GatStackTrace<T>),
    Linear,
}

/// Latent bank paired with the cross-attention that reads it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBranch<T> {
    pub bank: LatentBank<T>,
    pub attn: CrossAttention<T>,
}

/// Intermediate activations of one day.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub temporal: EncoderOutput<T>,
    /// Projected temporal stream.
    pub a1: Matrix<T>,
    pub spatial: Option<GatStackTrace<T>>,
    pub cross1: Option<CrossAttnTrace<T>>,
    pub cross2: Option<CrossAttnTrace<T>>,
    /// Fused features `[A1 | A2 | B1 | B2]` (absent parts skipped).
    pub fused: Matrix<T>,
    pub head: HeadTrace<T>,
    pub predictions: Vec<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn a2(&self) -> Option<&Matrix<T>> {
        self.spatial.as_ref().map(GatStackTrace::output)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MciGru<T> {
    pub config: ModelConfig,
    pub temporal: AgruEncoder<T>,
    pub proj_w: ParamTensor<T>,
    pub proj_b: ParamTensor<T>,
    pub spatial: Option<GatStack<T>>,
    pub latent_temporal: Option<LatentBranch<T>>,
    pub latent_spatial: Option<LatentBranch<T>>,
    pub head: Head<T>,
}

impl<T: Real> MciGru<T> {
    /// Builds a freshly initialized network; every draw comes from one
    /// generator seeded with `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let temporal = AgruEncoder::new(
            "temporal",
            N_FEATURES,
            &config.gru_layers,
            config.reset_mode(),
            &mut rng,
        )?;
        let top = temporal.output_dim();
        let d_h = config.temporal_dim;
        let proj_w = ParamTensor::xavier("proj.w", top, d_h, top, d_h, &mut rng);
        let proj_b = ParamTensor::zeros("proj.b", 1, d_h);

        let spatial = if config.use_gat_encoder {
            let (last, hidden) = config.gat_layers.split_last().expect("validated");
            let mut specs: Vec<GatSpec> = hidden
                .iter()
                .map(|&w| encoder_specs(w, *last, config.gat_heads)[0])
                .collect();
            specs.push(encoder_specs(*last, *last, config.gat_heads)[1]);
            Some(GatStack::new("spatial", N_FEATURES, &specs, &mut rng)?)
        } else {
            None
        };

        let (latent_temporal, latent_spatial) = if config.use_latent {
            if let Some(d_i) = config.d_i {
                if d_i != d_h || (config.use_gat_encoder && d_i != config.spatial_dim()) {
                    warn!(
                        "d_i = {d_i} ignored: latent widths follow their streams ({d_h} temporal, {} cross-sectional)",
                        config.spatial_dim()
                    );
                }
            }
            let branch = |name: &str, d: usize, rng: &mut ChaCha8Rng| -> Result<LatentBranch<T>> {
                Ok(LatentBranch {
                    bank: init_bank_with(&format!("{name}.bank"), config.d_r, d, rng)?,
                    attn: CrossAttention::new(&format!("{name}.attn"), d, config.cross_heads, rng)?,
                })
            };
            let t = branch("latent1", d_h, &mut rng)?;
            let s = match &spatial {
                Some(s) => Some(branch("latent2", s.output_dim(), &mut rng)?),
                None => None,
            };
            (Some(t), s)
        } else {
            (None, None)
        };

        let d_z = config.fused_dim();
        let head = if config.use_head_gat {
            let specs = [
                GatSpec {
                    out_dim: config.head_hidden,
                    heads: config.head_heads,
                    combine: HeadCombine::Concat,
                    activation: Activation::Relu,
                },
                GatSpec {
                    out_dim: 1,
                    heads: config.head_heads,
                    combine: HeadCombine::Average,
                    activation: Activation::Identity,
                },
            ];
            Head::Gat(GatStack::new("head", d_z, &specs, &mut rng)?)
        } else {
            Head::Linear {
                w: ParamTensor::xavier("head.w", d_z, 1, d_z, 1, &mut rng),
                b: ParamTensor::zeros("head.b", 1, 1),
            }
        };

        Ok(Self {
            config,
            temporal,
            proj_w,
            proj_b,
            spatial,
            latent_temporal,
            latent_spatial,
            head,
        })
    }

    /// `(name, rows, cols)` of every tensor in parameter order.
    pub fn census(&self) -> Vec<(String, usize, usize)> {
        self.params()
            .iter()
            .map(|p| (p.name.clone(), p.value.rows(), p.value.cols()))
            .collect()
    }

    pub fn forward(&self, batch: &DayBatch<T>) -> Result<ForwardTrace<T>> {
        let temporal = self.temporal.encode(&batch.inputs)?;
        let mut a1 = temporal.a1.matmul(&self.proj_w.value);
        a1.add_row_broadcast(&self.proj_b.value);

        let spatial = match &self.spatial {
            Some(s) => Some(s.forward(batch.last_inputs(), &batch.adj)?),
            None => None,
        };
        let cross1 = match &self.latent_temporal {
            Some(l) => Some(l.attn.forward(&a1, &l.bank)?),
            None => None,
        };
        let cross2 = match (&self.latent_spatial, &spatial) {
            (Some(l), Some(s)) => Some(l.attn.forward(s.output(), &l.bank)?),
            _ => None,
        };

        let mut parts: Vec<&Matrix<T>> = vec![&a1];
        parts.extend(spatial.as_ref().map(GatStackTrace::output));
        parts.extend(cross1.as_ref().map(|c| &c.output));
        parts.extend(cross2.as_ref().map(|c| &c.output));
        let fused = Matrix::hcat(&parts);

        let (head, out) = match &self.head {
            Head::Gat(g) => {
                let t = g.forward(&fused, &batch.adj)?;
                let out = t.output().clone();
                (HeadTrace::Gat(t), out)
            }
            Head::Linear { w, b } => {
                let mut out = fused.matmul(&w.value);
                out.add_row_broadcast(&b.value);
                (HeadTrace::Linear, out)
            }
        };
        let predictions = out.into_vec();
        if let Some(p) = predictions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "prediction".into(),
                row: p,
                col: 0,
                value: predictions[p].as_f64(),
            });
        }
        Ok(ForwardTrace {
            temporal,
            a1,
            spatial,
            cross1,
            cross2,
            fused,
            head,
            predictions,
        })
    }

    /// Accumulates `∂L/∂θ` for every parameter given `∂L/∂prediction`.
    pub fn backward(&mut self, batch: &DayBatch<T>, trace: &ForwardTrace<T>, d_pred: &[T]) {
        let n = batch.len();
        let d_out = Matrix::from_vec(n, 1, d_pred.to_vec()).expect("one gradient per row");
        let d_fused = match (&mut self.head, &trace.head) {
            (Head::Gat(g), HeadTrace::Gat(t)) => g.backward(&trace.fused, &batch.adj, t, &d_out),
            (Head::Linear { w, b }, HeadTrace::Linear) => {
                trace.fused.t_matmul_acc(&d_out, &mut w.grad);
                d_out.column_sums_acc(&mut b.grad);
                d_out.matmul_t(&w.value)
            }
            _ => unreachable!("trace produced by a different head"),
        };

        let d_h = self.config.temporal_dim;
        let mut col = 0;
        let mut take = |width: usize| {
            let block = d_fused.columns(col, width);
            col += width;
            block
        };
        let mut d_a1 = take(d_h);
        let mut d_a2 = trace.a2().map(|a2| take(a2.cols()));
        let d_b1 = trace.cross1.as_ref().map(|c| take(c.output.cols()));
        let d_b2 = trace.cross2.as_ref().map(|c| take(c.output.cols()));

        if let (Some(l), Some(t), Some(g)) = (&mut self.latent_temporal, &trace.cross1, &d_b1) {
            d_a1.add_assign(&l.attn.backward(&trace.a1, &mut l.bank, t, g));
        }
        if let (Some(l), Some(t), Some(g), Some(a2)) =
            (&mut self.latent_spatial, &trace.cross2, &d_b2, trace.a2())
        {
            let extra = l.attn.backward(a2, &mut l.bank, t, g);
            if let Some(d) = d_a2.as_mut() {
                d.add_assign(&extra);
            }
        }
        if let (Some(s), Some(t), Some(g)) = (&mut self.spatial, &trace.spatial, &d_a2) {
            s.backward(batch.last_inputs(), &batch.adj, t, g);
        }

        trace.temporal.a1.t_matmul_acc(&d_a1, &mut self.proj_w.grad);
        d_a1.column_sums_acc(&mut self.proj_b.grad);
        let d_top = d_a1.matmul_t(&self.proj_w.value);
        self.temporal.backward(&batch.inputs, &trace.temporal, &d_top);
    }

    /// Forward, MSE loss and backward for one day, with the gradient scaled
    /// by `weight`. Returns the unscaled day loss.
    pub fn accumulate_day(&mut self, batch: &DayBatch<T>, weight: T) -> Result<T> {
        let trace = self.forward(batch)?;
        let loss = loss_mse(&trace.predictions, &batch.labels)?;
        let n = T::lit(batch.len() as f64);
        let d_pred: Vec<T> = trace
            .predictions
            .iter()
            .zip(&batch.labels)
            .map(|(&p, &y)| weight * T::lit(2.0) * (p - y) / n)
            .collect();
        self.backward(batch, &trace, &d_pred);
        Ok(loss)
    }

    /// Converts every parameter to another precision (moments included).
    pub fn cast<U: Real>(&self) -> MciGru<U> {
        let mut out = MciGru::<U>::new(self.config.clone()).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            dst.value = src.value.cast();
            dst.grad = src.grad.cast();
            dst.m = src.m.cast();
            dst.v = src.v.cast();
            dst.step = src.step;
        }
        out
    }
}

impl<T: Real> Parameterized<T> for MciGru<T> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut v = self.temporal.params();
        v.extend([&self.proj_w, &self.proj_b]);
        if let Some(s) = &self.spatial {
            v.extend(s.params());
        }
        for l in [&self.latent_temporal, &self.latent_spatial].into_iter().flatten() {
            v.push(&l.bank.states);
            v.extend(l.attn.params());
        }
        match &self.head {
            Head::Gat(g) => v.extend(g.params()),
            Head::Linear { w, b } => v.extend([w, b]),
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut v = self.temporal.params_mut();
        v.extend([&mut self.proj_w, &mut self.proj_b]);
        if let Some(s) = &mut self.spatial {
            v.extend(s.params_mut());
        }
        for l in [&mut self.latent_temporal, &mut self.latent_spatial].into_iter().flatten() {
            v.push(&mut l.bank.states);
            v.extend(l.attn.params_mut());
        }
        match &mut self.head {
            Head::Gat(g) => v.extend(g.params_mut()),
            Head::Linear { w, b } => v.extend([w, b]),
        }
        v
    }
}

/// Mean squared error over aligned predictions and labels.
pub fn loss_mse<T: Real>(predictions: &[T], labels: &[T]) -> Result<T> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no unmasked stocks to score".into()));
    }
    let mut total = T::zero();
    for (&p, &y) in predictions.iter().zip(labels) {
        total += (p - y) * (p - y);
    }
    Ok(total / T::lit(predictions.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[0.5, -1.0], &[0.5, -1.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[1.5, 0.0], &[0.5, -1.0]).unwrap(), 1.0);
        assert!((loss_mse(&[0.1, -0.2], &[0.0, 0.0]).unwrap() - 0.025f64).abs() < 1e-15);
        assert!(matches!(loss_mse::<f64>(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn default_model_shapes() {
        let m = MciGru::<f32>::new(ModelConfig::default()).unwrap();
        let census = m.census();
        assert!(census.iter().any(|(n, r, c)| n == "latent1.bank" && (*r, *c) == (32, 32)));
        assert!(census.iter().any(|(n, r, c)| n == "latent2.bank" && (*r, *c) == (32, 4)));
        assert!(census.iter().any(|(n, r, c)| n == "head.0.w" && (*r, *c) == (72, 32)));
        let names: Vec<_> = census.iter().map(|c| &c.0).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len(), "parameter names must be unique");
    }

    use crate::dataset::{DaySample, N_FEATURES};
    use chrono::NaiveDate;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            his_t: 3,
            gru_layers: vec![4, 3],
            temporal_dim: 4,
            gat_layers: vec![4, 2],
            gat_heads: 2,
            head_hidden: 4,
            d_r: 3,
            cross_heads: 2,
            batch_size: 2,
            epochs: 3,
            seed: 5,
            ..ModelConfig::default()
        }
    }

    fn toy_samples(days: usize, n: usize) -> Vec<DaySample> {
        let start = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
        (0..days)
            .map(|d| DaySample {
                day: d + 2,
                date: start + chrono::Days::new(d as u64),
                split: None,
                his_t: 3,
                label_t: 1,
                inputs: (0..n * 3 * N_FEATURES).map(|k| ((k * 31 + d * 7) as f64).sin()).collect(),
                labels: (0..n).map(|i| 0.01 * ((i + d) as f64).cos()).collect(),
                mask: vec![true; n],
            })
            .collect()
    }

    fn ring(n: usize) -> Adjacency {
        Adjacency::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    #[test]
    fn without_latent_the_fused_stream_is_both_encoders() {
        let cfg = ModelConfig {
            use_latent: false,
            ..toy_config()
        };
        let m = MciGru::<f64>::new(cfg).unwrap();
        let batch = DayBatch::from_sample(&toy_samples(1, 4)[0], &ring(4)).unwrap();
        let t = m.forward(&batch).unwrap();
        assert!(t.cross1.is_none() && t.cross2.is_none());
        assert_eq!(t.fused, Matrix::hcat(&[&t.a1, t.a2().unwrap()]));
        assert_eq!(t.fused.cols(), 4 + 2);
    }

    #[test]
    fn zero_epochs_keep_the_initialization() {
        let cfg = ModelConfig {
            epochs: 0,
            ..toy_config()
        };
        let mut m = MciGru::<f64>::new(cfg.clone()).unwrap();
        let log = m.train(&toy_samples(4, 4), &[], &ring(4)).unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(m, MciGru::new(cfg).unwrap());
    }

    #[test]
    fn same_seed_trains_identically() {
        let (train, valid) = (toy_samples(5, 4), toy_samples(2, 4));
        let run = || {
            let mut m = MciGru::<f32>::new(toy_config()).unwrap();
            m.train(&train, &valid, &ring(4)).unwrap();
            m
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_ne!(a, MciGru::new(toy_config()).unwrap());
    }

    #[test]
    fn predictions_repeat_and_skip_masked_stocks() {
        let m = MciGru::<f64>::new(toy_config()).unwrap();
        let mut samples = toy_samples(2, 4);
        samples[1].mask[2] = false;
        let tickers: Vec<String> = (0..4).map(|i| format!("T{i}")).collect();
        let a = m.predict_scores(&samples, &ring(4), &tickers).unwrap();
        assert_eq!(a, m.predict_scores(&samples, &ring(4), &tickers).unwrap());
        assert_eq!(a.days[0].entries.len(), 4);
        let stocks: Vec<usize> = a.days[1].entries.iter().map(|e| e.0).collect();
        assert_eq!(stocks, vec![0, 1, 3]);
        assert_eq!(a.score(samples[1].date, "T2"), None);
    }
}

