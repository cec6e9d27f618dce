#![allow(dead_code)]

use mcigru::model::{DayBatch, MciGru, ModelConfig};
use mcigru::numkernel::Matrix;
use mcigru::relgraph::Adjacency;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small network with every module switched on and all widths ≤ 8.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        his_t: 3,
        gru_layers: vec![5, 3],
        temporal_dim: 4,
        gat_layers: vec![4, 2],
        gat_heads: 2,
        head_hidden: 4,
        head_heads: 2,
        d_r: 3,
        cross_heads: 2,
        seed: 17,
        ..ModelConfig::default()
    }
}

pub fn random_batch(n: usize, his_t: usize, adj: Adjacency, seed: u64) -> DayBatch<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..his_t)
        .map(|_| Matrix::from_fn(n, 6, |_, _| rng.gen_range(-1.5..1.5)))
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DayBatch {
        day: 0,
        stocks: (0..n).collect(),
        inputs,
        labels,
        adj,
    }
}

pub fn toy_model(config: ModelConfig) -> MciGru<f64> {
    MciGru::new(config).unwrap()
}

/// Mean day loss, forward only.
pub fn batch_loss(model: &MciGru<f64>, days: &[DayBatch<f64>]) -> f64 {
    let mut total = 0.0;
    for d in days {
        let t = model.forward(d).unwrap();
        total += mcigru::model::loss_mse(&t.predictions, &d.labels).unwrap();
    }
    total / days.len() as f64
}

pub fn fill_grads(model: &mut MciGru<f64>, days: &[DayBatch<f64>]) {
    use mcigru::numkernel::Parameterized;
    model.zero_grads();
    let w = 1.0 / days.len() as f64;
    for d in days {
        model.accumulate_day(d, w).unwrap();
    }
}
