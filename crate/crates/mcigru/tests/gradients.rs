mod common;

use common::{batch_loss, fill_grads, random_batch, toy_config, toy_model};
use mcigru::agru::{AgruEncoder, ResetMode};
use mcigru::gat::{GatSpec, GatStack, HeadCombine};
use mcigru::latent::{init_bank, CrossAttention};
use mcigru::model::ModelConfig;
use mcigru::numkernel::{
    finite_diff_check, Activation, GradCheckOptions, Matrix, ParamTensor, Parameterized,
};
use mcigru::relgraph::Adjacency;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn opts() -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-5,
        ..GradCheckOptions::default()
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Weighted sum of outputs, a loss whose gradient w.r.t. the output is `g`.
fn probe(out: &Matrix<f64>, g: &Matrix<f64>) -> f64 {
    out.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
}

fn check_full_model(config: ModelConfig) {
    let adj = Adjacency::from_edges(4, [(0, 1), (1, 2), (0, 2)]);
    let days = vec![
        random_batch(4, config.his_t, adj.clone(), 1),
        random_batch(4, config.his_t, adj, 2),
    ];
    let mut model = toy_model(config);
    fill_grads(&mut model, &days);
    let report = finite_diff_check(&mut model, |m| batch_loss(m, &days), &opts()).unwrap();
    for t in &report.tensors {
        assert!(t.max_rel_error < TOL, "{}: {:e}", t.name, t.max_rel_error);
    }
}

#[test]
fn full_model_gradients() {
    check_full_model(toy_config());
}

#[test]
fn ablated_model_gradients() {
    let base = toy_config();
    for (gru, gat, latent, head) in [
        (false, true, true, true),
        (true, false, true, true),
        (true, true, false, true),
        (true, true, true, false),
    ] {
        check_full_model(ModelConfig {
            use_agru_attention: gru,
            use_gat_encoder: gat,
            use_latent: latent,
            use_head_gat: head,
            ..base.clone()
        });
    }
}

struct Enc(AgruEncoder<f64>);

impl Parameterized<f64> for Enc {
    fn params(&self) -> Vec<&ParamTensor<f64>> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor<f64>> {
        self.0.params_mut()
    }
}

#[test]
fn temporal_encoder_gradients() {
    for mode in [ResetMode::default(), ResetMode::Classic] {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut enc = Enc(AgruEncoder::new("t", 3, &[5], mode, &mut rng).unwrap());
        let xs: Vec<_> = (0..4).map(|_| random_matrix(3, 3, &mut rng)).collect();
        let g = random_matrix(3, 5, &mut rng);
        let out = enc.0.encode(&xs).unwrap();
        let dxs = enc.0.backward(&xs, &out, &g);
        let report = finite_diff_check(
            &mut enc,
            |e| probe(&e.0.encode(&xs).unwrap().a1, &g),
            &opts(),
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{mode:?}: {report:?}");

        // input gradient
        let mut inputs: Vec<ParamTensor<f64>> = xs
            .iter()
            .enumerate()
            .map(|(t, x)| {
                let mut p = ParamTensor::new(format!("x{t}"), x.clone());
                p.grad = dxs[t].clone();
                p
            })
            .collect();
        let report = finite_diff_check(
            &mut inputs,
            |p| {
                let xs: Vec<_> = p.iter().map(|t| t.value.clone()).collect();
                probe(&enc.0.encode(&xs).unwrap().a1, &g)
            },
            &opts(),
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "inputs {mode:?}: {report:?}");
    }
}

struct Stack(GatStack<f64>);

impl Parameterized<f64> for Stack {
    fn params(&self) -> Vec<&ParamTensor<f64>> {
        self.0.params()
    }
    fn params_mut(&mut self) -> Vec<&mut ParamTensor<f64>> {
        self.0.params_mut()
    }
}

#[test]
fn graph_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let specs = [
        GatSpec {
            out_dim: 6,
            heads: 3,
            combine: HeadCombine::Concat,
            activation: Activation::Relu,
        },
        GatSpec {
            out_dim: 2,
            heads: 2,
            combine: HeadCombine::Average,
            activation: Activation::Identity,
        },
    ];
    let mut stack = Stack(GatStack::new("g", 4, &specs, &mut rng).unwrap());
    let adj = Adjacency::from_edges(6, [(0, 1), (1, 2), (3, 4), (0, 5), (2, 5)]);
    let x = random_matrix(6, 4, &mut rng);
    let g = random_matrix(6, 2, &mut rng);
    let trace = stack.0.forward(&x, &adj).unwrap();
    let dx = stack.0.backward(&x, &adj, &trace, &g);
    let report = finite_diff_check(
        &mut stack,
        |s| probe(s.0.forward(&x, &adj).unwrap().output(), &g),
        &opts(),
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");

    let mut input = vec![ParamTensor::new("x", x.clone())];
    input[0].grad = dx;
    let report = finite_diff_check(
        &mut input,
        |p| probe(stack.0.forward(&p[0].value, &adj).unwrap().output(), &g),
        &opts(),
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn cross_attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let attn = CrossAttention::<f64>::new("c", 4, 2, &mut rng).unwrap();
    let bank = init_bank::<f64>("r", 3, 4, 6).unwrap();
    let a = random_matrix(5, 4, &mut rng);
    let g = random_matrix(5, 4, &mut rng);

    let mut params: Vec<ParamTensor<f64>> = attn.params().into_iter().cloned().collect();
    params.push(bank.states.clone());
    params.push(ParamTensor::new("a", a.clone()));
    let split = |p: &Vec<ParamTensor<f64>>| {
        let mut c = attn.clone();
        for (dst, src) in c.params_mut().into_iter().zip(p) {
            dst.value = src.value.clone();
        }
        let mut b = bank.clone();
        b.states.value = p[4].value.clone();
        (c, b, p[5].value.clone())
    };
    {
        let (mut c, mut b, a) = split(&params);
        let t = c.forward(&a, &b).unwrap();
        let da = c.backward(&a, &mut b, &t, &g);
        for (dst, src) in params.iter_mut().zip(c.params()) {
            dst.grad = src.grad.clone();
        }
        params[4].grad = b.states.grad.clone();
        params[5].grad = da;
    }
    let report = finite_diff_check(
        &mut params,
        |p| {
            let (c, b, a) = split(p);
            probe(&c.forward(&a, &b).unwrap().output, &g)
        },
        &opts(),
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}
