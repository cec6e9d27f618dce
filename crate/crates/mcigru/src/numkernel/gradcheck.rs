//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::Parameterized;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Perturbation size for the central difference.
    pub step: f64,
    /// Entries checked per tensor; `None` checks every entry.
    pub max_entries_per_tensor: Option<usize>,
    /// Seed for choosing entries when sampling.
    pub seed: u64,
    /// Lower bound on the relative-error denominator. Pairs of gradients
    /// that are both below this magnitude are compared absolutely.
    pub magnitude_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_entries_per_tensor: None,
            seed: 0,
            magnitude_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn tensor(&self, name: &str) -> Option<&TensorCheck> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients currently stored in `model`'s parameter buffers
/// against `(loss(θ + h) − loss(θ − h)) / 2h` for each checked entry and
/// returns the worst relative error.
///
/// The caller must have populated the gradient buffers with the analytic
/// gradient of `loss` at the current parameter values. Parameter values are
/// restored exactly after each probe.
pub fn finite_diff_check<M, F>(
    model: &mut M,
    loss: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    M: Parameterized<f64>,
    F: Fn(&M) -> f64,
{
    let first = loss(model);
    let second = loss(model);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministicLoss { first, second });
    }
    if !(opts.step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {}", opts.step)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let meta: Vec<(String, usize)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.len()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        tensors: Vec::with_capacity(meta.len()),
    };

    for (k, (name, len)) in meta.into_iter().enumerate() {
        let entries: Vec<usize> = match opts.max_entries_per_tensor {
            Some(cap) if cap < len => {
                let mut v = sample(&mut rng, len, cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        let mut tensor_max = 0.0f64;
        for &e in &entries {
            let (original, analytic) = {
                let p = &model.params()[k];
                (p.value.as_slice()[e], p.grad.as_slice()[e])
            };
            model.params_mut()[k].value.as_mut_slice()[e] = original + opts.step;
            let plus = loss(model);
            model.params_mut()[k].value.as_mut_slice()[e] = original - opts.step;
            let minus = loss(model);
            model.params_mut()[k].value.as_mut_slice()[e] = original;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let rel = relative_error(analytic, numeric, opts.magnitude_floor);
            tensor_max = tensor_max.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.clone(), e, analytic, numeric));
            }
        }
        report.tensors.push(TensorCheck {
            name,
            entries_checked: entries.len(),
            max_rel_error: tensor_max,
        });
    }
    Ok(report)
}
