use crate::error::{Error, Result};
use crate::numerics::{sigmoid, Activation, Matrix, RngState};

/// One LSTM block. Every gate matrix is `hidden × (hidden + input)` and acts
/// on the concatenation `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmBlockParams {
    pub hidden_size: usize,
    pub input_size: usize,
    pub candidate_activation: Activation,
    pub output_activation: Activation,
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_c: Matrix,
    pub w_o: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_o: Vec<f64>,
}

pub(crate) const BLOCK_TENSOR_NAMES: [&str; 8] = ["w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"];

impl LstmBlockParams {
    pub fn zeros(
        hidden_size: usize,
        input_size: usize,
        candidate_activation: Activation,
        output_activation: Activation,
    ) -> Self {
        let cols = hidden_size + input_size;
        let m = || Matrix::zeros(hidden_size, cols);
        Self {
            hidden_size,
            input_size,
            candidate_activation,
            output_activation,
            w_f: m(),
            w_i: m(),
            w_c: m(),
            w_o: m(),
            b_f: vec![0.0; hidden_size],
            b_i: vec![0.0; hidden_size],
            b_c: vec![0.0; hidden_size],
            b_o: vec![0.0; hidden_size],
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate (1).
    pub fn glorot(
        hidden_size: usize,
        input_size: usize,
        candidate_activation: Activation,
        output_activation: Activation,
        rng: &mut RngState,
    ) -> Self {
        let mut p = Self::zeros(hidden_size, input_size, candidate_activation, output_activation);
        let limit = (6.0 / (hidden_size + input_size + hidden_size) as f64).sqrt();
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_c, &mut p.w_o] {
            w.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-limit, limit));
        }
        p.b_f.iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(
            self.hidden_size,
            self.input_size,
            self.candidate_activation,
            self.output_activation,
        )
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.w_f.data(),
            self.w_i.data(),
            self.w_c.data(),
            self.w_o.data(),
            &self.b_f,
            &self.b_i,
            &self.b_c,
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_f.data_mut(),
            self.w_i.data_mut(),
            self.w_c.data_mut(),
            self.w_o.data_mut(),
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }
}

/// Everything the backward pass needs from one cell step.
#[derive(Debug, Clone)]
pub struct CellCache {
    pub z: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub g_pre: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub c_act: Vec<f64>,
}

fn affine(w: &Matrix, b: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = w.matvec(z);
    out.iter_mut().zip(b).for_each(|(o, bi)| *o += bi);
    out
}

/// f = σ(W_f z + b_f), i = σ(W_i z + b_i), o = σ(W_o z + b_o),
/// c̃ = act_c(W_c z + b_c), c = f⊙c_prev + i⊙c̃, h = o⊙act_h(c).
pub fn lstm_cell_forward(
    block: &LstmBlockParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hs = block.hidden_size;
    if x.len() != block.input_size || h_prev.len() != hs || c_prev.len() != hs {
        return Err(Error::Shape(format!(
            "cell expects x:{} h:{hs} c:{hs}, got x:{} h:{} c:{}",
            block.input_size,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut z = Vec::with_capacity(hs + x.len());
    z.extend_from_slice(h_prev);
    z.extend_from_slice(x);

    let mut f = affine(&block.w_f, &block.b_f, &z);
    let mut i = affine(&block.w_i, &block.b_i, &z);
    let mut o = affine(&block.w_o, &block.b_o, &z);
    for v in f.iter_mut().chain(i.iter_mut()).chain(o.iter_mut()) {
        *v = sigmoid(*v);
    }
    let g_pre = affine(&block.w_c, &block.b_c, &z);
    let g: Vec<f64> = g_pre.iter().map(|&v| block.candidate_activation.apply(v)).collect();
    let c: Vec<f64> = (0..hs).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let c_act: Vec<f64> = c.iter().map(|&v| block.output_activation.apply(v)).collect();
    let h: Vec<f64> = o.iter().zip(&c_act).map(|(a, b)| a * b).collect();
    let cache = CellCache {
        z,
        c_prev: c_prev.to_vec(),
        f,
        i,
        o,
        g_pre,
        g,
        c: c.clone(),
        c_act,
    };
    Ok((h, c, cache))
}

/// Backpropagates `dh`, `dc` (gradients w.r.t. this step's h and c) through
/// one cell, accumulating parameter gradients into `grads`.
/// Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    block: &LstmBlockParams,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmBlockParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hs = block.hidden_size;
    let mut d_f = vec![0.0; hs];
    let mut d_i = vec![0.0; hs];
    let mut d_g = vec![0.0; hs];
    let mut d_o = vec![0.0; hs];
    let mut dc_prev = vec![0.0; hs];
    for k in 0..hs {
        let do_ = dh[k] * cache.c_act[k];
        d_o[k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        let dct = dc[k]
            + dh[k] * cache.o[k] * block.output_activation.derivative(cache.c[k], cache.c_act[k]);
        d_f[k] = dct * cache.c_prev[k] * cache.f[k] * (1.0 - cache.f[k]);
        d_i[k] = dct * cache.g[k] * cache.i[k] * (1.0 - cache.i[k]);
        d_g[k] = dct * cache.i[k] * block.candidate_activation.derivative(cache.g_pre[k], cache.g[k]);
        dc_prev[k] = dct * cache.f[k];
    }
    let mut dz = vec![0.0; cache.z.len()];
    for (w, gw, gb, d) in [
        (&block.w_f, &mut grads.w_f, &mut grads.b_f, &d_f),
        (&block.w_i, &mut grads.w_i, &mut grads.b_i, &d_i),
        (&block.w_c, &mut grads.w_c, &mut grads.b_c, &d_g),
        (&block.w_o, &mut grads.w_o, &mut grads.b_o, &d_o),
    ] {
        gw.add_outer(d, &cache.z);
        gb.iter_mut().zip(d.iter()).for_each(|(b, v)| *b += v);
        w.matvec_transpose_acc(d, &mut dz);
    }
    let dx = dz.split_off(hs);
    (dx, dz, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block1(hidden: usize, input: usize) -> LstmBlockParams {
        LstmBlockParams::zeros(hidden, input, Activation::Relu, Activation::Relu)
    }

    fn block2(hidden: usize, input: usize) -> LstmBlockParams {
        LstmBlockParams::zeros(hidden, input, Activation::Tanh, Activation::Tanh)
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        for b in [block1(3, 2), block2(3, 2)] {
            let (h, c, _) = lstm_cell_forward(&b, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]).unwrap();
            assert_eq!(h, vec![0.0; 3]);
            assert_eq!(c, vec![0.0; 3]);
        }
    }

    #[test]
    fn hand_evaluated_gates() {
        // zero params: every gate is σ(0) = 0.5 and the candidate is act(0) = 0
        let (h, c, _) = lstm_cell_forward(&block1(1, 1), &[0.7], &[0.3], &[2.0]).unwrap();
        assert_eq!(c, vec![1.0]);
        assert_eq!(h, vec![0.5]);
        let (h, c, _) = lstm_cell_forward(&block2(1, 1), &[0.7], &[0.3], &[2.0]).unwrap();
        assert_eq!(c, vec![1.0]);
        assert!((h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.38080).abs() < 1e-5);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            lstm_cell_forward(&block1(2, 2), &[0.0], &[0.0; 2], &[0.0; 2]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn gate_ranges_and_relu_output() {
        let mut rng = RngState::new(4);
        let b = LstmBlockParams::glorot(5, 3, Activation::Relu, Activation::Relu, &mut rng);
        let mut h = vec![0.0; 5];
        let mut c = vec![0.0; 5];
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.uniform(-20.0, 20.0)).collect();
            let (hn, cn, cache) = lstm_cell_forward(&b, &x, &h, &c).unwrap();
            for v in cache.f.iter().chain(&cache.i).chain(&cache.o) {
                assert!(*v >= 0.0 && *v <= 1.0);
            }
            assert!(hn.iter().all(|v| *v >= 0.0));
            h = hn;
            c = cn;
        }
    }
}
