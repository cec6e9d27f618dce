use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::real::Real;
use crate::error::{Error, Result};

/// A trainable matrix with its gradient buffer and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub step: u64,
}

impl<T: Real> ParamTensor<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            step: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(name, Matrix::zeros(rows, cols))
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn xavier<R: Rng>(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let value = Matrix::from_fn(rows, cols, |_, _| T::lit(dist.sample(rng)));
        Self::new(name, value)
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn normal<R: Rng>(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std_dev: f64,
        rng: &mut R,
    ) -> Self {
        let dist = Normal::new(0.0, std_dev).expect("finite positive std dev");
        let value = Matrix::from_fn(rows, cols, |_, _| T::lit(dist.sample(rng)));
        Self::new(name, value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill_zero();
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. The gradient buffer is zeroed afterwards.
pub fn adam_step<T: Real>(p: &mut ParamTensor<T>, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    let t = p.step + 1;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    let c1 = T::one() - T::lit(cfg.beta1.powf(t as f64));
    let c2 = T::one() - T::lit(cfg.beta2.powf(t as f64));
    let value = p.value.as_mut_slice();
    let grad = p.grad.as_mut_slice();
    let m = p.m.as_mut_slice();
    let v = p.v.as_mut_slice();
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        grad[i] = T::zero();
    }
    p.step = t;
    Ok(())
}

/// Anything that owns trainable tensors. Both methods must list the tensors
/// in the same order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&ParamTensor<T>>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>>;

    fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl<T: Real> Parameterized<T> for Vec<ParamTensor<T>> {
    fn params(&self) -> Vec<&ParamTensor<T>> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.iter_mut().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_value_bitwise_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamTensor::<f32>::xavier("w", 4, 5, 5, 4, &mut rng);
        let before = p.value.clone();
        adam_step(&mut p, &AdamConfig::default()).unwrap();
        assert_eq!(p.step, 1);
        assert!(before
            .as_slice()
            .iter()
            .zip(p.value.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamTensor::<f64>::zeros("x", 1, 1);
        p.grad[(0, 0)] = 1.0;
        adam_step(&mut p, &AdamConfig::default()).unwrap();
        // m̂ = v̂ = 1 at t = 1, so the update is lr / (1 + eps).
        let want = -0.0002 / (1.0 + 1e-8);
        assert!((p.value[(0, 0)] - want).abs() < 1e-18);
        assert_eq!(p.grad[(0, 0)], 0.0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let mut p = ParamTensor::<f64>::zeros("x", 1, 1);
        for cfg in [
            AdamConfig { lr: 0.0, ..Default::default() },
            AdamConfig { beta1: 1.0, ..Default::default() },
            AdamConfig { beta2: 0.0, ..Default::default() },
        ] {
            assert!(matches!(adam_step(&mut p, &cfg), Err(Error::Config(_))));
        }
        assert_eq!(p.step, 0);
    }

    #[test]
    fn xavier_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ParamTensor::<f64>::xavier("w", 10, 6, 6, 10, &mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(p.value.as_slice().iter().all(|x| x.abs() <= bound));
    }
}
