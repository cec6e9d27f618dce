//! Learnable latent market-state banks and the multi-head cross-attention
//! that reads them with a feature stream as the query.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel::{softmax_backward_slice, softmax_slice, Matrix, ParamTensor, Real};

/// `d_r` latent state vectors of width `d`, trained like any other weight.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBank<T> {
    pub states: ParamTensor<T>,
}

impl<T: Real> LatentBank<T> {
    pub fn d_r(&self) -> usize {
        self.states.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.states.value.cols()
    }
}

/// Draws a bank with i.i.d. `normal(0, 1/sqrt(d))` entries.
pub fn init_bank<T: Real>(name: &str, d_r: usize, d: usize, seed: u64) -> Result<LatentBank<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_bank_with(name, d_r, d, &mut rng)
}

pub fn init_bank_with<T: Real, R: Rng>(name: &str, d_r: usize, d: usize, rng: &mut R) -> Result<LatentBank<T>> {
    if d_r == 0 || d == 0 {
        return Err(Error::Config(format!(
            "latent bank {name} needs positive sizes, got {d_r} x {d}"
        )));
    }
    let std = 1.0 / (d as f64).sqrt();
    Ok(LatentBank {
        states: ParamTensor::normal(name, d_r, d, std, rng),
    })
}

/// Query/key/value projections (head `k` owns column block `k`) and the
/// output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossAttention<T> {
    pub heads: usize,
    pub w_q: ParamTensor<T>,
    pub w_k: ParamTensor<T>,
    pub w_v: ParamTensor<T>,
    pub w_o: ParamTensor<T>,
}

#[derive(Clone, Debug)]
pub struct CrossAttnTrace<T> {
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    /// Per-head attention over latent states, each `N × d_r`.
    pub probs: Vec<Matrix<T>>,
    pub concat: Matrix<T>,
    pub output: Matrix<T>,
}

impl<T: Real> CrossAttention<T> {
    pub fn new<R: Rng>(prefix: &str, d: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || d == 0 || d % heads != 0 {
            return Err(Error::Config(format!(
                "{prefix}: {heads} heads do not divide width {d}"
            )));
        }
        let p = |s: &str, rng: &mut R| ParamTensor::xavier(format!("{prefix}.{s}"), d, d, d, d, rng);
        Ok(Self {
            heads,
            w_q: p("w_q", rng),
            w_k: p("w_k", rng),
            w_v: p("w_v", rng),
            w_o: p("w_o", rng),
        })
    }

    pub fn dim(&self) -> usize {
        self.w_q.value.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.w_q, &self.w_k, &self.w_v, &self.w_o]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o]
    }

    fn scale(&self) -> T {
        T::one() / T::lit(self.head_dim() as f64).sqrt()
    }

    pub fn forward(&self, a: &Matrix<T>, bank: &LatentBank<T>) -> Result<CrossAttnTrace<T>> {
        let d = self.dim();
        if a.cols() != d || bank.dim() != d {
            return Err(Error::Shape(format!(
                "cross-attention of width {d} got a stream of width {} and a bank of width {}",
                a.cols(),
                bank.dim()
            )));
        }
        let r = &bank.states.value;
        let q = a.matmul(&self.w_q.value);
        let k = r.matmul(&self.w_k.value);
        let v = r.matmul(&self.w_v.value);
        let hd = self.head_dim();
        let scale = self.scale();
        let mut concat = Matrix::zeros(a.rows(), d);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.columns(h * hd, hd);
            let kh = k.columns(h * hd, hd);
            let mut p = qh.matmul_t(&kh).scale(scale);
            for i in 0..p.rows() {
                softmax_slice(p.row_mut(i));
            }
            concat.add_to_columns(h * hd, &p.matmul(&v.columns(h * hd, hd)));
            probs.push(p);
        }
        let output = concat.matmul(&self.w_o.value);
        Ok(CrossAttnTrace {
            q,
            k,
            v,
            probs,
            concat,
            output,
        })
    }

    /// Accumulates projection and bank gradients; returns `∂L/∂a`.
    pub fn backward(
        &mut self,
        a: &Matrix<T>,
        bank: &mut LatentBank<T>,
        trace: &CrossAttnTrace<T>,
        d_out: &Matrix<T>,
    ) -> Matrix<T> {
        let d = self.dim();
        let hd = self.head_dim();
        let scale = self.scale();
        trace.concat.t_matmul_acc(d_out, &mut self.w_o.grad);
        let d_concat = d_out.matmul_t(&self.w_o.value);
        let mut d_q = Matrix::zeros(a.rows(), d);
        let mut d_k = Matrix::zeros(bank.d_r(), d);
        let mut d_v = Matrix::zeros(bank.d_r(), d);
        for h in 0..self.heads {
            let p = &trace.probs[h];
            let dc = d_concat.columns(h * hd, hd);
            let vh = trace.v.columns(h * hd, hd);
            d_v.add_to_columns(h * hd, &p.t_matmul(&dc));
            let mut ds = dc.matmul_t(&vh);
            for i in 0..ds.rows() {
                softmax_backward_slice(p.row(i), ds.row_mut(i));
            }
            let ds = ds.scale(scale);
            d_q.add_to_columns(h * hd, &ds.matmul(&trace.k.columns(h * hd, hd)));
            d_k.add_to_columns(h * hd, &ds.t_matmul(&trace.q.columns(h * hd, hd)));
        }
        let r = &bank.states.value;
        a.t_matmul_acc(&d_q, &mut self.w_q.grad);
        r.t_matmul_acc(&d_k, &mut self.w_k.grad);
        r.t_matmul_acc(&d_v, &mut self.w_v.grad);
        let mut d_r = d_k.matmul_t(&self.w_k.value);
        d_r.add_assign(&d_v.matmul_t(&self.w_v.value));
        bank.states.grad.add_assign(&d_r);
        d_q.matmul_t(&self.w_q.value)
    }
}

/// Forward-only convenience wrapper returning `B`.
pub fn cross_attention<T: Real>(
    a: &Matrix<T>,
    bank: &LatentBank<T>,
    params: &CrossAttention<T>,
) -> Result<Matrix<T>> {
    Ok(params.forward(a, bank)?.output)
}
