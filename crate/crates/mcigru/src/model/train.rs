use chrono::NaiveDate;
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DayBatch, MciGru};
use crate::dataset::DaySample;
use crate::error::{Error, Result};
use crate::numkernel::{adam_step, AdamConfig, Parameterized, Real};
use crate::relgraph::Adjacency;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (`None`: initialization).
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,valid_loss\n");
        for e in &self.epochs {
            let v = e.valid_loss.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, v));
        }
        s
    }
}

fn batches<T: Real>(samples: &[DaySample], graph: &Adjacency) -> Vec<(NaiveDate, DayBatch<T>)> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        match DayBatch::from_sample(s, graph) {
            Some(b) => out.push((s.date, b)),
            None => warn!("{}: every stock is masked, day skipped", s.date),
        }
    }
    out
}

impl<T: Real> MciGru<T> {
    /// Mean day loss over `samples` without touching gradients.
    pub fn evaluate(&self, samples: &[DaySample], graph: &Adjacency) -> Result<Option<f64>> {
        let days = batches::<T>(samples, graph);
        self.mean_loss(&days)
    }

    fn mean_loss(&self, days: &[(NaiveDate, DayBatch<T>)]) -> Result<Option<f64>> {
        if days.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for (_, b) in days {
            let t = self.forward(b)?;
            total += super::loss_mse(&t.predictions, &b.labels)?.as_f64();
        }
        Ok(Some(total / days.len() as f64))
    }

    /// Trains with Adam on batches of anchor days, keeping the parameters of
    /// the epoch with the lowest validation loss (or the last epoch when no
    /// validation days exist).
    pub fn train(
        &mut self,
        train: &[DaySample],
        valid: &[DaySample],
        graph: &Adjacency,
    ) -> Result<TrainLog> {
        let cfg = self.config.clone();
        cfg.validate()?;
        let adam = AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        };
        adam.validate()?;
        let train_days = batches::<T>(train, graph);
        if train_days.is_empty() && cfg.epochs > 0 {
            return Err(Error::Empty("training split has no usable anchor days".into()));
        }
        let valid_days = batches::<T>(valid, graph);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_eed0_fba7_c4e5);
        let mut order: Vec<usize> = (0..train_days.len()).collect();
        let mut log = TrainLog::default();
        let mut best: Option<(f64, MciGru<T>)> = None;

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_total = 0.0;
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                self.zero_grads();
                let weight = T::one() / T::lit(chunk.len() as f64);
                let mut batch_loss = 0.0;
                for &d in chunk {
                    let loss = match self.accumulate_day(&train_days[d].1, weight) {
                        Ok(l) => l.as_f64(),
                        Err(Error::NonFinite { .. }) => f64::NAN,
                        Err(e) => return Err(e),
                    };
                    batch_loss += loss;
                }
                if !batch_loss.is_finite()
                    || self.params().iter().any(|p| p.grad.as_slice().iter().any(|g| !g.is_finite()))
                {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        days: chunk.iter().map(|&d| train_days[d].0).collect(),
                    });
                }
                epoch_total += batch_loss;
                for p in self.params_mut() {
                    adam_step(p, &adam)?;
                }
            }
            let train_loss = epoch_total / train_days.len() as f64;
            let valid_loss = self.mean_loss(&valid_days)?;
            info!(
                "epoch {epoch}: train {train_loss:.6e} valid {}",
                valid_loss.map_or("-".into(), |v| format!("{v:.6e}"))
            );
            log.epochs.push(EpochLog {
                epoch,
                train_loss,
                valid_loss,
            });
            let score = valid_loss.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(b, _)| score < *b || valid_loss.is_none()) {
                best = Some((score, self.clone()));
                log.best_epoch = Some(epoch);
            }
        }
        if let Some((_, m)) = best {
            *self = m;
        }
        self.zero_grads();
        Ok(log)
    }
}
