//! Multi-head graph attention over the stock correlation graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    axpy, dot, leaky_relu, leaky_relu_grad, softmax_backward_slice, softmax_slice, Activation,
    Matrix, ParamTensor, Real,
};
use crate::relgraph::Adjacency;

pub const DEFAULT_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadCombine {
    Concat,
    Average,
}

/// One graph attention layer.
///
/// `w` holds every head's projection side by side (`in_dim × heads·head_dim`);
/// row `k` of `a_src` / `a_dst` is head `k`'s attention vector split into
/// the halves that score the centre node and the neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: usize,
    pub combine: HeadCombine,
    pub slope: f64,
    pub activation: Activation,
    pub w: ParamTensor<T>,
    pub a_src: ParamTensor<T>,
    pub a_dst: ParamTensor<T>,
}

/// Forward activations of a layer.
#[derive(Clone, Debug)]
pub struct GatTrace<T> {
    /// Projected features `X · W`.
    pub projected: Matrix<T>,
    /// Per-node offsets into the flattened neighbor arrays.
    offsets: Vec<usize>,
    /// Raw logits before leakyrelu, `heads × nnz`.
    logits: Vec<T>,
    /// Attention coefficients, `heads × nnz`.
    sigma: Vec<T>,
    pub pre_activation: Matrix<T>,
    pub output: Matrix<T>,
}

impl<T: Real> GatTrace<T> {
    /// Attention of node `i` over its sorted neighbors for `head`.
    pub fn attention(&self, head: usize, i: usize) -> &[T] {
        let nnz = *self.offsets.last().unwrap_or(&0);
        &self.sigma[head * nnz + self.offsets[i]..head * nnz + self.offsets[i + 1]]
    }
}

impl<T: Real> GatLayer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        heads: usize,
        combine: HeadCombine,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "{prefix}: heads and dimensions must be positive"
            )));
        }
        if combine == HeadCombine::Concat && out_dim % heads != 0 {
            return Err(Error::Config(format!(
                "{prefix}: output width {out_dim} is not divisible by {heads} heads"
            )));
        }
        let head_dim = match combine {
            HeadCombine::Concat => out_dim / heads,
            HeadCombine::Average => out_dim,
        };
        let width = heads * head_dim;
        Ok(Self {
            in_dim,
            out_dim,
            heads,
            combine,
            slope: DEFAULT_SLOPE,
            activation,
            w: ParamTensor::xavier(format!("{prefix}.w"), in_dim, width, in_dim, width, rng),
            a_src: ParamTensor::xavier(format!("{prefix}.a_src"), heads, head_dim, 2 * head_dim, 1, rng),
            a_dst: ParamTensor::xavier(format!("{prefix}.a_dst"), heads, head_dim, 2 * head_dim, 1, rng),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.a_src.value.cols()
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        vec![&self.w, &self.a_src, &self.a_dst]
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![&mut self.w, &mut self.a_src, &mut self.a_dst]
    }

    pub fn forward(&self, x: &Matrix<T>, adj: &Adjacency) -> Result<GatTrace<T>> {
        let n = x.rows();
        if adj.len() != n {
            return Err(Error::Shape(format!(
                "graph has {} nodes but the feature matrix has {n} rows",
                adj.len()
            )));
        }
        if x.cols() != self.in_dim {
            return Err(Error::Shape(format!(
                "graph layer expects {} input features, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let hd = self.head_dim();
        let slope = T::lit(self.slope);
        let projected = x.matmul(&self.w.value);

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + adj.neighbors(i).len());
        }
        let nnz = offsets[n];
        let mut logits = vec![T::zero(); self.heads * nnz];
        let mut sigma = vec![T::zero(); self.heads * nnz];
        let mut agg = Matrix::zeros(n, self.heads * hd);

        for k in 0..self.heads {
            let (a_s, a_d) = (self.a_src.value.row(k), self.a_dst.value.row(k));
            let block = |i: usize| &projected.row(i)[k * hd..(k + 1) * hd];
            let src: Vec<T> = (0..n).map(|i| dot(block(i), a_s)).collect();
            let dst: Vec<T> = (0..n).map(|i| dot(block(i), a_d)).collect();
            for i in 0..n {
                let span = k * nnz + offsets[i]..k * nnz + offsets[i + 1];
                let nbrs = adj.neighbors(i);
                for (slot, &j) in span.clone().zip(nbrs) {
                    logits[slot] = src[i] + dst[j];
                    sigma[slot] = leaky_relu(logits[slot], slope);
                }
                softmax_slice(&mut sigma[span.clone()]);
                let out = &mut agg.row_mut(i)[k * hd..(k + 1) * hd];
                for (slot, &j) in span.zip(nbrs) {
                    axpy(out, sigma[slot], block(j));
                }
            }
        }

        let pre_activation = match self.combine {
            HeadCombine::Concat => agg,
            HeadCombine::Average => {
                let inv = T::one() / T::lit(self.heads as f64);
                let mut m = Matrix::zeros(n, hd);
                for i in 0..n {
                    for k in 0..self.heads {
                        let src = &agg.row(i)[k * hd..(k + 1) * hd];
                        axpy(m.row_mut(i), inv, src);
                    }
                }
                m
            }
        };
        let output = pre_activation.map(|v| self.activation.eval(v));
        Ok(GatTrace {
            projected,
            offsets,
            logits,
            sigma,
            pre_activation,
            output,
        })
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(
        &mut self,
        x: &Matrix<T>,
        adj: &Adjacency,
        trace: &GatTrace<T>,
        d_out: &Matrix<T>,
    ) -> Matrix<T> {
        let n = x.rows();
        let hd = self.head_dim();
        let slope = T::lit(self.slope);
        let nnz = trace.offsets[n];
        let d_pre = Matrix::from_fn(n, self.out_dim, |i, j| {
            d_out[(i, j)]
                * self
                    .activation
                    .derivative(trace.pre_activation[(i, j)], trace.output[(i, j)])
        });
        let inv = T::one() / T::lit(self.heads as f64);
        let proj = &trace.projected;
        let mut d_proj = Matrix::zeros(n, self.heads * hd);
        let mut d_sigma = Vec::new();

        for k in 0..self.heads {
            let cols = k * hd..(k + 1) * hd;
            let mut d_src = vec![T::zero(); n];
            let mut d_dst = vec![T::zero(); n];
            for i in 0..n {
                let d_agg: Vec<T> = match self.combine {
                    HeadCombine::Concat => d_pre.row(i)[cols.clone()].to_vec(),
                    HeadCombine::Average => d_pre.row(i).iter().map(|&g| g * inv).collect(),
                };
                let base = k * nnz + trace.offsets[i];
                let nbrs = adj.neighbors(i);
                let sig = &trace.sigma[base..base + nbrs.len()];
                d_sigma.clear();
                for (&j, &s) in nbrs.iter().zip(sig) {
                    d_sigma.push(dot(&d_agg, &proj.row(j)[cols.clone()]));
                    axpy(&mut d_proj.row_mut(j)[cols.clone()], s, &d_agg);
                }
                softmax_backward_slice(sig, &mut d_sigma);
                for (m, &j) in nbrs.iter().enumerate() {
                    let g = d_sigma[m] * leaky_relu_grad(trace.logits[base + m], slope);
                    d_src[i] += g;
                    d_dst[j] += g;
                }
            }
            for i in 0..n {
                let block = &proj.row(i)[cols.clone()];
                axpy(self.a_src.grad.row_mut(k), d_src[i], block);
                axpy(self.a_dst.grad.row_mut(k), d_dst[i], block);
                let d_block = &mut d_proj.row_mut(i)[cols.clone()];
                axpy(d_block, d_src[i], self.a_src.value.row(k));
                axpy(d_block, d_dst[i], self.a_dst.value.row(k));
            }
        }
        x.t_matmul_acc(&d_proj, &mut self.w.grad);
        d_proj.matmul_t(&self.w.value)
    }
}

/// Stacked layers sharing one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GatStack<T> {
    pub layers: Vec<GatLayer<T>>,
}

#[derive(Clone, Debug)]
pub struct GatStackTrace<T> {
    pub layers: Vec<GatTrace<T>>,
}

impl<T> GatStackTrace<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.layers.last().expect("non-empty stack").output
    }
}

/// Layer shape for [`GatStack::new`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatSpec {
    pub out_dim: usize,
    pub heads: usize,
    pub combine: HeadCombine,
    pub activation: Activation,
}

impl<T: Real> GatStack<T> {
    pub fn new<R: Rng>(prefix: &str, in_dim: usize, specs: &[GatSpec], rng: &mut R) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config(format!("{prefix}: graph stack needs a layer")));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut dim = in_dim;
        for (l, s) in specs.iter().enumerate() {
            layers.push(GatLayer::new(
                &format!("{prefix}.{l}"),
                dim,
                s.out_dim,
                s.heads,
                s.combine,
                s.activation,
                rng,
            )?);
            dim = s.out_dim;
        }
        Ok(Self { layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, x: &Matrix<T>, adj: &Adjacency) -> Result<GatStackTrace<T>> {
        let mut traces: Vec<GatTrace<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = traces.last().map_or(x, |t| &t.output);
            let t = layer.forward(input, adj)?;
            traces.push(t);
        }
        Ok(GatStackTrace { layers: traces })
    }

    pub fn backward(
        &mut self,
        x: &Matrix<T>,
        adj: &Adjacency,
        trace: &GatStackTrace<T>,
        d_out: &Matrix<T>,
    ) -> Matrix<T> {
        let mut grad = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x } else { &trace.layers[l - 1].output };
            grad = self.layers[l].backward(input, adj, &trace.layers[l], &grad);
        }
        grad
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        self.layers.iter().flat_map(GatLayer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.layers.iter_mut().flat_map(GatLayer::params_mut).collect()
    }
}

/// Default cross-sectional encoder: `hidden` wide with `heads` concatenated
/// heads, then `out_dim` wide with averaged heads, both ReLU.
pub fn encoder_specs(hidden: usize, out_dim: usize, heads: usize) -> [GatSpec; 2] {
    [
        GatSpec {
            out_dim: hidden,
            heads,
            combine: HeadCombine::Concat,
            activation: Activation::Relu,
        },
        GatSpec {
            out_dim,
            heads,
            combine: HeadCombine::Average,
            activation: Activation::Relu,
        },
    ]
}

/// Runs the encoder stack on one day's cross-section and returns `A2`.
pub fn encode_cross_section<T: Real>(
    features: &Matrix<T>,
    adj: &Adjacency,
    stack: &GatStack<T>,
) -> Result<Matrix<T>> {
    Ok(stack.forward(features, adj)?.output().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn self_loop_only_is_pointwise() {
        let layer = GatLayer::<f64>::new("g", 3, 4, 2, HeadCombine::Concat, Activation::Relu, &mut rng()).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.4, 0.9], vec![1.0, 0.2, -0.3]]).unwrap();
        let t = layer.forward(&x, &Adjacency::isolated(2)).unwrap();
        assert_eq!(t.attention(0, 0), &[1.0]);
        assert_eq!(t.output, x.matmul(&layer.w.value).map(|v| v.max(0.0)));
    }

    #[test]
    fn identity_stack_is_relu() {
        let mut layer = GatLayer::<f64>::new("g", 3, 3, 1, HeadCombine::Concat, Activation::Relu, &mut rng()).unwrap();
        layer.w.value = Matrix::identity(3);
        let stack = GatStack { layers: vec![layer] };
        let x = Matrix::from_rows(&[vec![0.1, -0.4, 0.9]]).unwrap();
        let a2 = encode_cross_section(&x, &Adjacency::isolated(1), &stack).unwrap();
        assert_eq!(a2, x.map(|v| v.max(0.0)));
    }

    #[test]
    fn default_encoder_width() {
        let stack = GatStack::<f64>::new("enc", 6, &encoder_specs(32, 4, 4), &mut rng()).unwrap();
        let x = Matrix::filled(5, 6, 0.3);
        let adj = Adjacency::from_edges(5, [(0, 1), (2, 4)]);
        assert_eq!(encode_cross_section(&x, &adj, &stack).unwrap().shape(), (5, 4));
    }

    #[test]
    fn concat_needs_divisible_width() {
        assert!(GatLayer::<f64>::new("g", 3, 5, 2, HeadCombine::Concat, Activation::Relu, &mut rng()).is_err());
        assert!(GatLayer::<f64>::new("g", 3, 5, 2, HeadCombine::Average, Activation::Relu, &mut rng()).is_ok());
    }

    #[test]
    fn symmetric_pair_gives_equal_outputs() {
        let layer = GatLayer::<f64>::new("g", 2, 4, 2, HeadCombine::Concat, Activation::Relu, &mut rng()).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -0.2], vec![0.5, -0.2]]).unwrap();
        let t = layer.forward(&x, &Adjacency::from_edges(2, [(0, 1)])).unwrap();
        assert_eq!(t.output.row(0), t.output.row(1));
        assert_eq!(t.attention(1, 0), &[0.5, 0.5]);
    }

    #[test]
    fn three_nodes_by_hand() {
        let mut layer =
            GatLayer::<f64>::new("g", 2, 2, 2, HeadCombine::Average, Activation::Relu, &mut rng()).unwrap();
        // head 0 projects with [[1, 0], [0.5, -1]], head 1 with [[-0.3, 2], [1, 0.2]]
        let heads_w = [[[1.0, 0.0], [0.5, -1.0]], [[-0.3, 2.0], [1.0, 0.2]]];
        layer.w.value = Matrix::from_fn(2, 4, |i, c| heads_w[c / 2][i][c % 2]);
        let a_s = [[0.7, -0.4], [0.2, 0.9]];
        let a_d = [[-0.5, 1.1], [0.6, -0.8]];
        layer.a_src.value = Matrix::from_fn(2, 2, |k, c| a_s[k][c]);
        layer.a_dst.value = Matrix::from_fn(2, 2, |k, c| a_d[k][c]);
        let x = [[1.0, -2.0], [0.5, 0.3], [-1.2, 0.8]];
        let nbrs: [&[usize]; 3] = [&[0, 1], &[0, 1, 2], &[1, 2]];

        let got = layer
            .forward(&Matrix::from_fn(3, 2, |i, j| x[i][j]), &Adjacency::from_edges(3, [(0, 1), (1, 2)]))
            .unwrap();
        for i in 0..3 {
            let mut avg = [0.0; 2];
            for k in 0..2 {
                let proj = |n: usize| [0, 1].map(|c| x[n][0] * heads_w[k][0][c] + x[n][1] * heads_w[k][1][c]);
                let score = |n: usize, a: [f64; 2]| proj(n)[0] * a[0] + proj(n)[1] * a[1];
                let e: Vec<f64> = nbrs[i]
                    .iter()
                    .map(|&j| {
                        let v = score(i, a_s[k]) + score(j, a_d[k]);
                        if v > 0.0 { v } else { 0.2 * v }
                    })
                    .collect();
                let total: f64 = e.iter().map(|v| v.exp()).sum();
                for (&j, ej) in nbrs[i].iter().zip(&e) {
                    let w = ej.exp() / total;
                    for c in 0..2 {
                        avg[c] += 0.5 * w * proj(j)[c];
                    }
                }
            }
            for c in 0..2 {
                assert!((got.output[(i, c)] - avg[c].max(0.0)).abs() < 1e-12, "node {i} col {c}");
            }
            let sum: f64 = got.attention(0, i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_nodes_ignore_each_other() {
        let stack = GatStack::<f64>::new("enc", 3, &encoder_specs(8, 2, 2), &mut rng()).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.5, 0.4, 1.0]]).unwrap();
        let mut y = x.clone();
        y[(1, 0)] = 3.0;
        let adj = Adjacency::isolated(2);
        let a = encode_cross_section(&x, &adj, &stack).unwrap();
        let b = encode_cross_section(&y, &adj, &stack).unwrap();
        assert_eq!(a.row(0), b.row(0));
        assert_ne!(a.row(1), b.row(1));
    }
}

