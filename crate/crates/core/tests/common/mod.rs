//! Finite-difference gradient checking shared by the integration tests.

#![allow(dead_code)]

use gridcast::model::{
    init_params, loss_and_gradients, HeadKind, LossBranch, Mode, ModelConfig, ModelParams, Seq2SeqModel,
};
use gridcast::numerics::{Matrix, RngState};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
/// Central differences at STEP carry ~1e-11 absolute round-off on an O(1) loss;
/// relative error is measured against at least this magnitude.
pub const GRAD_FLOOR: f64 = 1e-6;

/// 3 features, hidden 4/3, n_in = 3.
pub fn toy_config(head: HeadKind, n_out: usize) -> ModelConfig {
    let mut c = ModelConfig::dual_block(3, 3, n_out);
    c.block1.hidden = 4;
    c.block2.hidden = 3;
    c.dense_size = 3;
    c.head = head;
    c
}

pub fn toy_data(n: usize, n_out: usize, seed: u64) -> (Vec<Matrix>, Vec<Vec<f64>>) {
    let mut rng = RngState::new(seed);
    let windows = (0..n)
        .map(|_| Matrix::new(3, 3, (0..9).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap())
        .collect();
    let targets = (0..n)
        .map(|_| (0..n_out).map(|_| (rng.next_u64() % 4) as f64).collect())
        .collect();
    (windows, targets)
}

/// Linear-head toy model whose outputs stay positive, so the Poisson branch applies.
pub fn positive_linear_model(seed: u64, n_out: usize) -> Seq2SeqModel {
    let mut m = init_params(&toy_config(HeadKind::Linear, n_out), seed).unwrap();
    m.params.head_b[0] = 3.0;
    m
}

pub struct GradCheck {
    pub worst: f64,
    pub at: String,
    pub checked: usize,
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter. Dropout masks are replayed from a cloned RNG.
pub fn check_gradients(model: &Seq2SeqModel, branch: LossBranch, mode: Mode, seed: u64) -> GradCheck {
    let n_out = model.config.n_out;
    let (windows, targets) = toy_data(4, n_out, seed);
    let w: Vec<&Matrix> = windows.iter().collect();
    let t: Vec<&[f64]> = targets.iter().map(|v| v.as_slice()).collect();
    let rng = RngState::new(seed ^ 0xdead);
    let loss_at = |m: &Seq2SeqModel| loss_and_gradients(m, &w, &t, branch, mode, &mut rng.clone(), 1.0).unwrap().0;
    let (_, grads) = loss_and_gradients(model, &w, &t, branch, mode, &mut rng.clone(), 1.0).unwrap();
    let names = ModelParams::tensor_names();
    let analytic = grads.tensors();
    let mut out = GradCheck {
        worst: 0.0,
        at: String::new(),
        checked: 0,
    };
    let mut probe = model.clone();
    for (k, name) in names.iter().enumerate() {
        for j in 0..analytic[k].len() {
            let orig = model.params.tensors()[k][j];
            probe.params.tensors_mut()[k][j] = orig + STEP;
            let up = loss_at(&probe);
            probe.params.tensors_mut()[k][j] = orig - STEP;
            let down = loss_at(&probe);
            probe.params.tensors_mut()[k][j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[k][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            out.checked += 1;
            if err > out.worst {
                out.worst = err;
                out.at = format!("{name}[{j}] analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    out
}
