//! GRU temporal encoder whose reset gate is replaced by dot-product
//! attention from the previous hidden state over the window inputs.
//!
//! Weights are stored input-major (`x · W`), i.e. transposed with respect to
//! the usual `W x` column-vector notation. A batch of stocks is processed at
//! once, one stock per row; rows never interact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    axpy, dot, sigmoid, softmax_backward_slice, softmax_slice, Matrix, ParamTensor, Real,
};

/// Which inputs the reset attention may look at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttnScope {
    /// Every window input up to and including the current step.
    #[default]
    Window,
    /// Only the current input (a singleton softmax).
    Current,
}

/// How the candidate state is gated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "scope")]
pub enum ResetMode {
    Attention(AttnScope),
    /// Classic sigmoid reset gate.
    Classic,
}

impl Default for ResetMode {
    fn default() -> Self {
        ResetMode::Attention(AttnScope::Window)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResetParams<T> {
    Attention {
        scope: AttnScope,
        w_q: ParamTensor<T>,
        w_k: ParamTensor<T>,
        w_v: ParamTensor<T>,
    },
    Classic {
        w_r: ParamTensor<T>,
        u_r: ParamTensor<T>,
        b_r: ParamTensor<T>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgruLayer<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamTensor<T>,
    pub u_z: ParamTensor<T>,
    pub b_z: ParamTensor<T>,
    pub w_h: ParamTensor<T>,
    pub u_h: ParamTensor<T>,
    pub b_h: ParamTensor<T>,
    pub reset: ResetParams<T>,
}

/// Cached activations of one time step.
#[derive(Clone, Debug)]
pub struct StepCache<T> {
    /// Attention query `h_{t−1} · W_q` (attention mode only).
    pub q: Option<Matrix<T>>,
    /// Attention weights, `N × window` (attention mode only).
    pub alpha: Option<Matrix<T>>,
    /// The gate applied to `U_h h_{t−1}`: `r'_t` or the classic `r_t`.
    pub r: Matrix<T>,
    pub u: Matrix<T>,
    pub z: Matrix<T>,
    pub h_tilde: Matrix<T>,
}

/// Everything a layer's backward pass needs.
#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    pub keys: Vec<Matrix<T>>,
    pub values: Vec<Matrix<T>>,
    pub steps: Vec<StepCache<T>>,
    /// Hidden states `h_1 … h_T`.
    pub hs: Vec<Matrix<T>>,
}

impl<T: Real> AgruLayer<T> {
    pub fn new<R: Rng>(
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        mode: ResetMode,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config(format!(
                "{prefix}: dimensions must be positive ({input_dim} -> {hidden_dim})"
            )));
        }
        let (i, h) = (input_dim, hidden_dim);
        let name = |s: &str| format!("{prefix}.{s}");
        let w_z = ParamTensor::xavier(name("w_z"), i, h, i, h, rng);
        let u_z = ParamTensor::xavier(name("u_z"), h, h, h, h, rng);
        let b_z = ParamTensor::zeros(name("b_z"), 1, h);
        let w_h = ParamTensor::xavier(name("w_h"), i, h, i, h, rng);
        let u_h = ParamTensor::xavier(name("u_h"), h, h, h, h, rng);
        let b_h = ParamTensor::zeros(name("b_h"), 1, h);
        // d_q = d_k = d_v = d_h so that r' can gate U_h h elementwise.
        let reset = match mode {
            ResetMode::Attention(scope) => ResetParams::Attention {
                scope,
                w_q: ParamTensor::xavier(name("w_q"), h, h, h, h, rng),
                w_k: ParamTensor::xavier(name("w_k"), i, h, i, h, rng),
                w_v: ParamTensor::xavier(name("w_v"), i, h, i, h, rng),
            },
            ResetMode::Classic => ResetParams::Classic {
                w_r: ParamTensor::xavier(name("w_r"), i, h, i, h, rng),
                u_r: ParamTensor::xavier(name("u_r"), h, h, h, h, rng),
                b_r: ParamTensor::zeros(name("b_r"), 1, h),
            },
        };
        Ok(Self {
            input_dim,
            hidden_dim,
            w_z,
            u_z,
            b_z,
            w_h,
            u_h,
            b_h,
            reset,
        })
    }

    pub fn mode(&self) -> ResetMode {
        match &self.reset {
            ResetParams::Attention { scope, .. } => ResetMode::Attention(*scope),
            ResetParams::Classic { .. } => ResetMode::Classic,
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        let mut v = vec![&self.w_z, &self.u_z, &self.b_z, &self.w_h, &self.u_h, &self.b_h];
        match &self.reset {
            ResetParams::Attention { w_q, w_k, w_v, .. } => v.extend([w_q, w_k, w_v]),
            ResetParams::Classic { w_r, u_r, b_r } => v.extend([w_r, u_r, b_r]),
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut v = vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ];
        match &mut self.reset {
            ResetParams::Attention { w_q, w_k, w_v, .. } => v.extend([w_q, w_k, w_v]),
            ResetParams::Classic { w_r, u_r, b_r } => v.extend([w_r, u_r, b_r]),
        }
        v
    }

    fn scale(&self) -> T {
        T::one() / T::lit(self.hidden_dim as f64).sqrt()
    }

    /// Attention weights over `keys` and the weighted value sum, per row.
    fn attend(&self, q: &Matrix<T>, keys: &[Matrix<T>], values: &[Matrix<T>]) -> (Matrix<T>, Matrix<T>) {
        let n = q.rows();
        let s = keys.len();
        let scale = self.scale();
        let mut alpha = Matrix::zeros(n, s);
        let mut r = Matrix::zeros(n, self.hidden_dim);
        for row in 0..n {
            let a = alpha.row_mut(row);
            for (k, key) in keys.iter().enumerate() {
                a[k] = dot(q.row(row), key.row(row)) * scale;
            }
            softmax_slice(a);
            let out = r.row_mut(row);
            for (k, value) in values.iter().enumerate() {
                axpy(out, a[k], value.row(row));
            }
        }
        (r, alpha)
    }

    /// Attention replacement for the reset gate: the previous hidden state
    /// queries the keys/values projected from `window` (inputs `x_1 … x_t`
    /// of this layer). Returns `(r'_t, α)`; `α` is `N × window.len()`.
    pub fn attn_reset(&self, h_prev: &Matrix<T>, window: &[Matrix<T>]) -> Result<(Matrix<T>, Matrix<T>)> {
        let ResetParams::Attention { w_q, w_k, w_v, .. } = &self.reset else {
            return Err(Error::Config("attn_reset called on a classic GRU layer".into()));
        };
        if window.is_empty() {
            return Err(Error::Empty("attention window".into()));
        }
        let q = h_prev.matmul(&w_q.value);
        let keys: Vec<_> = window.iter().map(|x| x.matmul(&w_k.value)).collect();
        let values: Vec<_> = window.iter().map(|x| x.matmul(&w_v.value)).collect();
        Ok(self.attend(&q, &keys, &values))
    }

    /// Update-gated hidden state given a precomputed reset signal `r`.
    pub fn agru_step(&self, x: &Matrix<T>, h_prev: &Matrix<T>, r: &Matrix<T>) -> Matrix<T> {
        self.gated_update(x, h_prev, r).0
    }

    fn gated_update(
        &self,
        x: &Matrix<T>,
        h_prev: &Matrix<T>,
        r: &Matrix<T>,
    ) -> (Matrix<T>, Matrix<T>, Matrix<T>, Matrix<T>) {
        let mut z = x.matmul(&self.w_z.value);
        z.add_assign(&h_prev.matmul(&self.u_z.value));
        z.add_row_broadcast(&self.b_z.value);
        let z = z.map(sigmoid);
        let u = h_prev.matmul(&self.u_h.value);
        let mut pre = x.matmul(&self.w_h.value);
        pre.add_assign(&r.hadamard(&u));
        pre.add_row_broadcast(&self.b_h.value);
        let h_tilde = pre.map(|v| v.tanh());
        let mut h = h_prev.clone();
        for ((hv, &zv), &cv) in h
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(h_tilde.as_slice())
        {
            *hv = (T::one() - zv) * *hv + zv * cv;
        }
        (h, z, u, h_tilde)
    }

    /// Runs the recursion from `h_0 = 0` over `xs` (each `N × input_dim`).
    pub fn forward(&self, xs: &[Matrix<T>]) -> LayerTrace<T> {
        let n = xs.first().map_or(0, Matrix::rows);
        let (keys, values) = match &self.reset {
            ResetParams::Attention { w_k, w_v, .. } => (
                xs.iter().map(|x| x.matmul(&w_k.value)).collect(),
                xs.iter().map(|x| x.matmul(&w_v.value)).collect(),
            ),
            ResetParams::Classic { .. } => (Vec::new(), Vec::new()),
        };
        let mut steps = Vec::with_capacity(xs.len());
        let mut hs: Vec<Matrix<T>> = Vec::with_capacity(xs.len());
        let zero = Matrix::zeros(n, self.hidden_dim);
        for (t, x) in xs.iter().enumerate() {
            let h_prev = if t == 0 { &zero } else { &hs[t - 1] };
            let (q, alpha, r) = match &self.reset {
                ResetParams::Attention { scope, w_q, .. } => {
                    let q = h_prev.matmul(&w_q.value);
                    let lo = match scope {
                        AttnScope::Window => 0,
                        AttnScope::Current => t,
                    };
                    let (r, alpha) = self.attend(&q, &keys[lo..=t], &values[lo..=t]);
                    (Some(q), Some(alpha), r)
                }
                ResetParams::Classic { w_r, u_r, b_r } => {
                    let mut r = x.matmul(&w_r.value);
                    r.add_assign(&h_prev.matmul(&u_r.value));
                    r.add_row_broadcast(&b_r.value);
                    (None, None, r.map(sigmoid))
                }
            };
            let (h, z, u, h_tilde) = self.gated_update(x, h_prev, &r);
            steps.push(StepCache {
                q,
                alpha,
                r,
                u,
                z,
                h_tilde,
            });
            hs.push(h);
        }
        LayerTrace {
            keys,
            values,
            steps,
            hs,
        }
    }

    /// Backpropagates `dhs` (gradient w.r.t. each `h_t`) through the layer,
    /// accumulating parameter gradients. Returns the gradient w.r.t. `xs`.
    pub fn backward(&mut self, xs: &[Matrix<T>], trace: &LayerTrace<T>, dhs: &[Matrix<T>]) -> Vec<Matrix<T>> {
        let steps = xs.len();
        let n = xs.first().map_or(0, Matrix::rows);
        let h = self.hidden_dim;
        let scale = self.scale();
        let zero = Matrix::zeros(n, h);
        let mut dxs: Vec<Matrix<T>> = xs.iter().map(|x| Matrix::zeros(x.rows(), x.cols())).collect();
        let attention = matches!(self.reset, ResetParams::Attention { .. });
        let mut dkeys: Vec<Matrix<T>> = if attention { vec![zero.clone(); steps] } else { Vec::new() };
        let mut dvalues = dkeys.clone();
        let mut carry = zero.clone();

        for t in (0..steps).rev() {
            let st = &trace.steps[t];
            let x = &xs[t];
            let h_prev = if t == 0 { &zero } else { &trace.hs[t - 1] };
            let mut dh = dhs[t].clone();
            dh.add_assign(&carry);

            let mut dh_tilde = Matrix::zeros(n, h);
            let mut dz = Matrix::zeros(n, h);
            let mut dh_prev = Matrix::zeros(n, h);
            for k in 0..n * h {
                let g = dh.as_slice()[k];
                let zv = st.z.as_slice()[k];
                dh_tilde.as_mut_slice()[k] = g * zv;
                dz.as_mut_slice()[k] = g * (st.h_tilde.as_slice()[k] - h_prev.as_slice()[k]);
                dh_prev.as_mut_slice()[k] = g * (T::one() - zv);
            }
            let dpre_h = Matrix::from_fn(n, h, |i, j| {
                let c = st.h_tilde[(i, j)];
                dh_tilde[(i, j)] * (T::one() - c * c)
            });
            dpre_h.column_sums_acc(&mut self.b_h.grad);
            x.t_matmul_acc(&dpre_h, &mut self.w_h.grad);
            dxs[t].add_assign(&dpre_h.matmul_t(&self.w_h.value));

            let dr = dpre_h.hadamard(&st.u);
            let du = dpre_h.hadamard(&st.r);
            h_prev.t_matmul_acc(&du, &mut self.u_h.grad);
            dh_prev.add_assign(&du.matmul_t(&self.u_h.value));

            let dpre_z = Matrix::from_fn(n, h, |i, j| {
                let zv = st.z[(i, j)];
                dz[(i, j)] * zv * (T::one() - zv)
            });
            dpre_z.column_sums_acc(&mut self.b_z.grad);
            x.t_matmul_acc(&dpre_z, &mut self.w_z.grad);
            dxs[t].add_assign(&dpre_z.matmul_t(&self.w_z.value));
            h_prev.t_matmul_acc(&dpre_z, &mut self.u_z.grad);
            dh_prev.add_assign(&dpre_z.matmul_t(&self.u_z.value));

            match &mut self.reset {
                ResetParams::Attention { scope, w_q, .. } => {
                    let lo = match scope {
                        AttnScope::Window => 0,
                        AttnScope::Current => t,
                    };
                    let alpha = st.alpha.as_ref().expect("attention trace");
                    let q = st.q.as_ref().expect("attention trace");
                    let mut dq = Matrix::zeros(n, h);
                    let mut dscore = vec![T::zero(); t + 1 - lo];
                    for row in 0..n {
                        let a = alpha.row(row);
                        let drow = dr.row(row);
                        for (k, s) in (lo..=t).enumerate() {
                            dscore[k] = dot(drow, trace.values[s].row(row));
                            axpy(dvalues[s].row_mut(row), a[k], drow);
                        }
                        softmax_backward_slice(a, &mut dscore);
                        for (k, s) in (lo..=t).enumerate() {
                            let g = dscore[k] * scale;
                            axpy(dq.row_mut(row), g, trace.keys[s].row(row));
                            axpy(dkeys[s].row_mut(row), g, q.row(row));
                        }
                    }
                    h_prev.t_matmul_acc(&dq, &mut w_q.grad);
                    dh_prev.add_assign(&dq.matmul_t(&w_q.value));
                }
                ResetParams::Classic { w_r, u_r, b_r } => {
                    let dpre_r = Matrix::from_fn(n, h, |i, j| {
                        let rv = st.r[(i, j)];
                        dr[(i, j)] * rv * (T::one() - rv)
                    });
                    dpre_r.column_sums_acc(&mut b_r.grad);
                    x.t_matmul_acc(&dpre_r, &mut w_r.grad);
                    dxs[t].add_assign(&dpre_r.matmul_t(&w_r.value));
                    h_prev.t_matmul_acc(&dpre_r, &mut u_r.grad);
                    dh_prev.add_assign(&dpre_r.matmul_t(&u_r.value));
                }
            }
            carry = dh_prev;
        }

        if let ResetParams::Attention { w_k, w_v, .. } = &mut self.reset {
            for s in 0..steps {
                xs[s].t_matmul_acc(&dkeys[s], &mut w_k.grad);
                dxs[s].add_assign(&dkeys[s].matmul_t(&w_k.value));
                xs[s].t_matmul_acc(&dvalues[s], &mut w_v.grad);
                dxs[s].add_assign(&dvalues[s].matmul_t(&w_v.value));
            }
        }
        dxs
    }
}

/// Output of the stacked encoder.
#[derive(Clone, Debug)]
pub struct EncoderOutput<T> {
    /// Final hidden state of the top layer, one row per stock.
    pub a1: Matrix<T>,
    /// Per-layer traces; `layers[l].hs` is layer `l`'s hidden sequence.
    pub layers: Vec<LayerTrace<T>>,
}

/// Stacked attention-gated GRU layers.
#[derive(Clone, Debug, PartialEq)]
pub struct AgruEncoder<T> {
    pub layers: Vec<AgruLayer<T>>,
}

impl<T: Real> AgruEncoder<T> {
    pub fn new<R: Rng>(
        prefix: &str,
        input_dim: usize,
        sizes: &[usize],
        mode: ResetMode,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Config("GRU stack needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len());
        let mut dim = input_dim;
        for (l, &size) in sizes.iter().enumerate() {
            layers.push(AgruLayer::new(&format!("{prefix}.{l}"), dim, size, mode, rng)?);
            dim = size;
        }
        Ok(Self { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden_dim)
    }

    /// Encodes `xs` (window of `N × d_x` inputs, oldest first).
    pub fn encode(&self, xs: &[Matrix<T>]) -> Result<EncoderOutput<T>> {
        if xs.is_empty() {
            return Err(Error::Empty("input window".into()));
        }
        let mut traces: Vec<LayerTrace<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = traces.last().map_or(xs, |t| t.hs.as_slice());
            traces.push(layer.forward(input));
        }
        let a1 = traces
            .last()
            .and_then(|t| t.hs.last())
            .cloned()
            .expect("non-empty stack and window");
        Ok(EncoderOutput { a1, layers: traces })
    }

    /// Backpropagates `d_a1` and returns the gradient w.r.t. the raw inputs.
    pub fn backward(&mut self, xs: &[Matrix<T>], out: &EncoderOutput<T>, d_a1: &Matrix<T>) -> Vec<Matrix<T>> {
        let steps = xs.len();
        let top = self.layers.len() - 1;
        let mut dhs: Vec<Matrix<T>> = (0..steps)
            .map(|_| Matrix::zeros(d_a1.rows(), d_a1.cols()))
            .collect();
        dhs[steps - 1] = d_a1.clone();
        for l in (0..=top).rev() {
            let input = if l == 0 { xs } else { out.layers[l - 1].hs.as_slice() };
            dhs = self.layers[l].backward(input, &out.layers[l], &dhs);
        }
        dhs
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        self.layers.iter().flat_map(AgruLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.layers.iter_mut().flat_map(AgruLayer::params_mut).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(mode: ResetMode) -> AgruLayer<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        AgruLayer::new("l", 3, 2, mode, &mut rng).unwrap()
    }

    #[test]
    fn singleton_window_attention_returns_value() {
        let l = layer(ResetMode::default());
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let h = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let (r, alpha) = l.attn_reset(&h, std::slice::from_ref(&x)).unwrap();
        assert_eq!(alpha.as_slice(), &[1.0]);
        let ResetParams::Attention { w_v, .. } = &l.reset else { unreachable!() };
        assert_eq!(r, x.matmul(&w_v.value));
    }

    #[test]
    fn identical_inputs_give_uniform_weights() {
        let l = layer(ResetMode::default());
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let h = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let window = vec![x.clone(), x.clone(), x];
        let (_, alpha) = l.attn_reset(&h, &window).unwrap();
        for &a in alpha.as_slice() {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn update_gate_extremes() {
        let mut l = layer(ResetMode::default());
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let h = Matrix::from_rows(&[vec![0.3, -0.7]]).unwrap();
        let r = Matrix::from_rows(&[vec![0.9, 0.1]]).unwrap();
        l.b_z.value = Matrix::filled(1, 2, -1e4);
        assert_eq!(l.agru_step(&x, &h, &r), h);

        l.b_z.value = Matrix::filled(1, 2, 1e4);
        let mut pre = x.matmul(&l.w_h.value);
        pre.add_assign(&r.hadamard(&h.matmul(&l.u_h.value)));
        let h_tilde = pre.map(f64::tanh);
        assert_eq!(l.agru_step(&x, &h, &r), h_tilde);
    }

    #[test]
    fn classic_layer_rejects_attn_reset() {
        let l = layer(ResetMode::Classic);
        let x = Matrix::zeros(1, 3);
        assert!(l.attn_reset(&Matrix::zeros(1, 2), &[x]).is_err());
    }

    #[test]
    fn zero_inputs_encode_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = AgruEncoder::<f64>::new("e", 6, &[32, 10], ResetMode::default(), &mut rng).unwrap();
        let xs = vec![Matrix::zeros(4, 6); 5];
        let out = enc.encode(&xs).unwrap();
        assert_eq!(out.a1.shape(), (4, 10));
        assert!(out.a1.as_slice().iter().all(|&v| v == 0.0));
    }

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    /// `v · w` with `w` stored input-major.
    fn vecmat(v: &[f64], w: &Matrix<f64>) -> Vec<f64> {
        (0..w.cols()).map(|j| (0..v.len()).map(|i| v[i] * w[(i, j)]).sum()).collect()
    }

    #[test]
    fn attention_reset_by_hand() {
        let mut l = AgruLayer::<f64>::new("l", 2, 2, ResetMode::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        l.reset = ResetParams::Attention {
            scope: AttnScope::Window,
            w_q: ParamTensor::new("q", Matrix::identity(2)),
            w_k: ParamTensor::new("k", Matrix::identity(2)),
            w_v: ParamTensor::new("v", Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()),
        };
        // logits q·k/√2 come out as 0, ln 2, ln 3, so α = [1, 2, 3] / 6
        let s2 = 2f64.sqrt();
        let xs = [[0.0, 0.0], [s2 * 2f64.ln(), 0.0], [s2 * 3f64.ln(), 1.0]]
            .map(|r| Matrix::row_vector(&r));
        let h = Matrix::row_vector(&[1.0, 0.0]);
        let (r, alpha) = l.attn_reset(&h, &xs).unwrap();
        for (a, e) in alpha.as_slice().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - e).abs() < 1e-12);
        }
        let r0 = (2.0 * s2 * 2f64.ln() + 3.0 * s2 * 3f64.ln()) / 6.0;
        assert!((r[(0, 0)] - r0).abs() < 1e-12);
        assert!((r[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut l = AgruLayer::<f64>::new("l", 3, 4, ResetMode::default(), &mut rng).unwrap();
        l.b_z.value = Matrix::from_fn(1, 4, |_, j| 0.1 * j as f64 - 0.2);
        l.b_h.value = Matrix::from_fn(1, 4, |_, j| 0.05 * j as f64);
        let x = [0.4, -1.3, 0.7];
        let h = [0.2, -0.5, 0.9, 0.1];
        let r = [0.3, 1.2, -0.4, 0.8];
        let got = l.agru_step(&Matrix::row_vector(&x), &Matrix::row_vector(&h), &Matrix::row_vector(&r));

        let (xz, hz) = (vecmat(&x, &l.w_z.value), vecmat(&h, &l.u_z.value));
        let (xh, hu) = (vecmat(&x, &l.w_h.value), vecmat(&h, &l.u_h.value));
        for j in 0..4 {
            let z = sig(xz[j] + hz[j] + l.b_z.value[(0, j)]);
            let cand = (xh[j] + r[j] * hu[j] + l.b_h.value[(0, j)]).tanh();
            let want = (1.0 - z) * h[j] + z * cand;
            assert!((got[(0, j)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_window_has_a_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let attn = AgruEncoder::<f64>::new("e", 3, &[4], ResetMode::default(), &mut rng).unwrap();
        let mut classic = AgruEncoder::<f64>::new("e", 3, &[4], ResetMode::Classic, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -0.1, 0.8], vec![-1.0, 0.3, 0.2]]).unwrap();
        let a1 = attn.encode(std::slice::from_ref(&x)).unwrap().a1;
        // from h_0 = 0 the reset signal multiplies U_h·0, so h_1 = z ⊙ tanh(x W_h + b_h)
        let l = &attn.layers[0];
        for i in 0..2 {
            let (xz, xh) = (vecmat(x.row(i), &l.w_z.value), vecmat(x.row(i), &l.w_h.value));
            for j in 0..4 {
                let want = sig(xz[j] + l.b_z.value[(0, j)]) * (xh[j] + l.b_h.value[(0, j)]).tanh();
                assert!((a1[(i, j)] - want).abs() < 1e-12);
            }
        }
        // the classic gate reduces to the same closed form
        let c = &mut classic.layers[0];
        for (dst, src) in [(&mut c.w_z, &l.w_z), (&mut c.u_z, &l.u_z), (&mut c.w_h, &l.w_h), (&mut c.u_h, &l.u_h)] {
            dst.value = src.value.clone();
        }
        assert_eq!(classic.encode(std::slice::from_ref(&x)).unwrap().a1, a1);
    }

    #[test]
    fn attention_weights_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = AgruLayer::<f64>::new("l", 3, 5, ResetMode::default(), &mut rng).unwrap();
        let xs: Vec<Matrix<f64>> = (0..6)
            .map(|t| Matrix::from_fn(4, 3, |i, j| ((t * 7 + i * 3 + j) as f64).sin() * 2.0))
            .collect();
        for step in l.forward(&xs).steps {
            let alpha = step.alpha.unwrap();
            for i in 0..alpha.rows() {
                assert!(alpha.row(i).iter().all(|&a| a >= 0.0));
                assert!((alpha.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

