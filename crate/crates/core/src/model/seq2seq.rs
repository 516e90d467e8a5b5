//! Two-block encoder/decoder LSTM with a dense ReLU layer and a rate head.
//!
//! Encoder: block 1 reads the input window, its hidden stream passes through
//! dropout into block 2. The final (h, c) of both blocks form the context,
//! which initializes the matching decoder blocks. The decoder's first input is
//! zero; each later step is fed the previous step's predicted rate (or, with
//! teacher forcing, the previous target).

use serde::{Deserialize, Serialize};

use super::lstm::{lstm_cell_backward, lstm_cell_forward, CellCache, LstmBlockParams, BLOCK_TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, RngState};
use crate::preprocess::MAX_HORIZON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// λ = exp(W h + b), strictly positive.
    Exp,
    /// ŷ = W h + b, may be negative.
    Linear,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(HeadKind::Exp),
            "linear" => Ok(HeadKind::Linear),
            other => Err(Error::Parameter(format!("unknown head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub hidden: usize,
    pub candidate_activation: Activation,
    pub output_activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_size: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub block1: BlockConfig,
    pub block2: BlockConfig,
    pub dense_size: usize,
    pub head: HeadKind,
    /// Dropout after block 1 and after block 2.
    pub dropout: [f64; 2],
}

impl ModelConfig {
    /// 100 ReLU cells, then 70 tanh cells, dropout 0.2/0.3, exp head.
    pub fn dual_block(input_size: usize, n_in: usize, n_out: usize) -> Self {
        Self {
            input_size,
            n_in,
            n_out,
            block1: BlockConfig {
                hidden: 100,
                candidate_activation: Activation::Relu,
                output_activation: Activation::Relu,
            },
            block2: BlockConfig {
                hidden: 70,
                candidate_activation: Activation::Tanh,
                output_activation: Activation::Tanh,
            },
            dense_size: 50,
            head: HeadKind::Exp,
            dropout: [0.2, 0.3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.block1.hidden == 0 || self.block2.hidden == 0 || self.dense_size == 0 {
            return Err(Error::Parameter(format!(
                "model sizes must be positive: input {}, hidden {}/{}, dense {}",
                self.input_size, self.block1.hidden, self.block2.hidden, self.dense_size
            )));
        }
        if self.n_in == 0 {
            return Err(Error::Parameter("n_in must be positive".into()));
        }
        check_horizon(self.n_out)?;
        for p in self.dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Parameter(format!("dropout rate {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

pub fn check_horizon(n_out: usize) -> Result<()> {
    if !(1..=MAX_HORIZON).contains(&n_out) {
        return Err(Error::Parameter(format!(
            "horizon {n_out} outside 1..={MAX_HORIZON}"
        )));
    }
    Ok(())
}

/// Every learnable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: [LstmBlockParams; 2],
    pub decoder: [LstmBlockParams; 2],
    /// `dense × block2.hidden`
    pub dense_w: Matrix,
    pub dense_b: Vec<f64>,
    /// `1 × dense`
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let b1 = config.block1;
        let b2 = config.block2;
        let block = |b: BlockConfig, input| {
            LstmBlockParams::zeros(b.hidden, input, b.candidate_activation, b.output_activation)
        };
        Self {
            encoder: [block(b1, config.input_size), block(b2, b1.hidden)],
            decoder: [block(b1, 1), block(b2, b1.hidden)],
            dense_w: Matrix::zeros(config.dense_size, b2.hidden),
            dense_b: vec![0.0; config.dense_size],
            head_w: Matrix::zeros(1, config.dense_size),
            head_b: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: [self.encoder[0].zeros_like(), self.encoder[1].zeros_like()],
            decoder: [self.decoder[0].zeros_like(), self.decoder[1].zeros_like()],
            dense_w: Matrix::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: vec![0.0; self.dense_b.len()],
            head_w: Matrix::zeros(self.head_w.rows(), self.head_w.cols()),
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Stable tensor names, in [`Self::tensors`] order.
    pub fn tensor_names() -> Vec<String> {
        let mut names = Vec::new();
        for (part, blocks) in [("encoder", ["block1", "block2"]), ("decoder", ["block1", "block2"])] {
            for b in blocks {
                for t in BLOCK_TENSOR_NAMES {
                    names.push(format!("{part}.{b}.{t}"));
                }
            }
        }
        names.extend(["dense.w", "dense.b", "head.w", "head.b"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(36);
        for b in self.encoder.iter().chain(&self.decoder) {
            out.extend(b.tensors());
        }
        out.push(self.dense_w.data());
        out.push(&self.dense_b);
        out.push(self.head_w.data());
        out.push(&self.head_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(36);
        let [e1, e2] = &mut self.encoder;
        let [d1, d2] = &mut self.decoder;
        for b in [e1, e2, d1, d2] {
            out.extend(b.tensors_mut());
        }
        out.push(self.dense_w.data_mut());
        out.push(&mut self.dense_b);
        out.push(self.head_w.data_mut());
        out.push(&mut self.head_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    /// Bumped on every parameter update; caches record the value they saw.
    pub generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Glorot-initialized model; forget-gate biases start at 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Seq2SeqModel> {
    config.validate()?;
    let mut rng = RngState::new(seed);
    let b1 = config.block1;
    let b2 = config.block2;
    let mut block = |b: BlockConfig, input| {
        LstmBlockParams::glorot(b.hidden, input, b.candidate_activation, b.output_activation, &mut rng)
    };
    let encoder = [block(b1, config.input_size), block(b2, b1.hidden)];
    let decoder = [block(b1, 1), block(b2, b1.hidden)];
    let mut dense_w = Matrix::zeros(config.dense_size, b2.hidden);
    let lim = (6.0 / (b2.hidden + config.dense_size) as f64).sqrt();
    dense_w.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-lim, lim));
    let mut head_w = Matrix::zeros(1, config.dense_size);
    let lim = (6.0 / (config.dense_size + 1) as f64).sqrt();
    head_w.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-lim, lim));
    Ok(Seq2SeqModel {
        config: config.clone(),
        params: ModelParams {
            encoder,
            decoder,
            dense_w,
            dense_b: vec![0.0; config.dense_size],
            head_w,
            head_b: vec![0.0],
        },
        generation: 0,
    })
}

impl Seq2SeqModel {
    /// All-zero parameters.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            params: ModelParams::zeros(config),
            generation: 0,
        })
    }
}

/// Final (h, c) of both encoder blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub h1: Vec<f64>,
    pub c1: Vec<f64>,
    pub h2: Vec<f64>,
    pub c2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderStep {
    pub cell1: CellCache,
    pub mask1: Option<Vec<f64>>,
    pub cell2: CellCache,
}

#[derive(Debug, Clone)]
pub struct DecoderStep {
    pub cell1: CellCache,
    pub mask1: Option<Vec<f64>>,
    pub cell2: CellCache,
    pub mask2: Option<Vec<f64>>,
    pub dense_in: Vec<f64>,
    pub dense_pre: Vec<f64>,
    pub dense_out: Vec<f64>,
    pub rate: f64,
    /// Whether this step's input was the previous step's prediction.
    pub input_is_feedback: bool,
}

#[derive(Debug, Clone)]
pub struct SampleCache {
    pub encoder: Vec<EncoderStep>,
    pub decoder: Vec<DecoderStep>,
}

/// Inverted-dropout mask (`0` or `1/(1-p)`), or `None` when inactive.
fn dropout_mask(n: usize, p: f64, mode: Mode, rng: &mut RngState) -> Option<Vec<f64>> {
    if mode == Mode::Eval || p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.next_f64() < p { 0.0 } else { keep }).collect())
}

fn apply_mask(v: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => v.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => v.to_vec(),
    }
}

pub fn encoder_forward(
    model: &Seq2SeqModel,
    sequence: &Matrix,
    mode: Mode,
    rng: &mut RngState,
) -> Result<(Context, Vec<EncoderStep>)> {
    let cfg = &model.config;
    if sequence.rows() == 0 {
        return Err(Error::Shape("encoder needs a non-empty sequence".into()));
    }
    if sequence.cols() != cfg.input_size {
        return Err(Error::Shape(format!(
            "encoder expects {} features, got {}",
            cfg.input_size,
            sequence.cols()
        )));
    }
    let [e1, e2] = &model.params.encoder;
    let mut h1 = vec![0.0; cfg.block1.hidden];
    let mut c1 = h1.clone();
    let mut h2 = vec![0.0; cfg.block2.hidden];
    let mut c2 = h2.clone();
    let mut steps = Vec::with_capacity(sequence.rows());
    for t in 0..sequence.rows() {
        let (nh1, nc1, cell1) = lstm_cell_forward(e1, sequence.row(t), &h1, &c1)?;
        let mask1 = dropout_mask(nh1.len(), cfg.dropout[0], mode, rng);
        let x2 = apply_mask(&nh1, &mask1);
        let (nh2, nc2, cell2) = lstm_cell_forward(e2, &x2, &h2, &c2)?;
        steps.push(EncoderStep { cell1, mask1, cell2 });
        h1 = nh1;
        c1 = nc1;
        h2 = nh2;
        c2 = nc2;
    }
    Ok((Context { h1, c1, h2, c2 }, steps))
}

/// Teacher forcing for the decoder: previous targets and the probability of
/// feeding them instead of the model's own prediction.
#[derive(Debug, Clone, Copy)]
pub struct TeacherForcing<'a> {
    pub targets: &'a [f64],
    pub ratio: f64,
}

pub fn decoder_forward(
    model: &Seq2SeqModel,
    context: &Context,
    n_out: usize,
    mode: Mode,
    rng: &mut RngState,
    teacher: Option<TeacherForcing<'_>>,
) -> Result<(Vec<f64>, Vec<DecoderStep>)> {
    check_horizon(n_out)?;
    let cfg = &model.config;
    let p = &model.params;
    let [d1, d2] = &p.decoder;
    if context.h1.len() != d1.hidden_size || context.h2.len() != d2.hidden_size {
        return Err(Error::Shape("context does not match decoder block sizes".into()));
    }
    let (mut h1, mut c1) = (context.h1.clone(), context.c1.clone());
    let (mut h2, mut c2) = (context.h2.clone(), context.c2.clone());
    let mut input = 0.0;
    let mut input_is_feedback = false;
    let mut rates = Vec::with_capacity(n_out);
    let mut steps = Vec::with_capacity(n_out);
    for s in 0..n_out {
        let (nh1, nc1, cell1) = lstm_cell_forward(d1, &[input], &h1, &c1)?;
        let mask1 = dropout_mask(nh1.len(), cfg.dropout[0], mode, rng);
        let (nh2, nc2, cell2) = lstm_cell_forward(d2, &apply_mask(&nh1, &mask1), &h2, &c2)?;
        let mask2 = dropout_mask(nh2.len(), cfg.dropout[1], mode, rng);
        let dense_in = apply_mask(&nh2, &mask2);
        let mut dense_pre = p.dense_w.matvec(&dense_in);
        dense_pre.iter_mut().zip(&p.dense_b).for_each(|(v, b)| *v += b);
        let dense_out: Vec<f64> = dense_pre.iter().map(|&v| Activation::Relu.apply(v)).collect();
        let z = crate::numerics::dot(p.head_w.row(0), &dense_out) + p.head_b[0];
        let rate = match cfg.head {
            HeadKind::Exp => z.exp(),
            HeadKind::Linear => z,
        };
        rates.push(rate);
        steps.push(DecoderStep {
            cell1,
            mask1,
            cell2,
            mask2,
            dense_in,
            dense_pre,
            dense_out,
            rate,
            input_is_feedback,
        });
        // next step's input
        let forced = match (mode, teacher) {
            (Mode::Train, Some(tf)) if tf.ratio > 0.0 && s < tf.targets.len() => rng.next_f64() < tf.ratio,
            _ => false,
        };
        if forced {
            input = teacher.expect("checked").targets[s];
            input_is_feedback = false;
        } else {
            input = rate;
            input_is_feedback = true;
        }
        h1 = nh1;
        c1 = nc1;
        h2 = nh2;
        c2 = nc2;
    }
    Ok((rates, steps))
}

/// Full forward pass for one input window.
pub fn forward_sample(
    model: &Seq2SeqModel,
    window: &Matrix,
    n_out: usize,
    mode: Mode,
    rng: &mut RngState,
    teacher: Option<TeacherForcing<'_>>,
) -> Result<(Vec<f64>, SampleCache)> {
    let (ctx, encoder) = encoder_forward(model, window, mode, rng)?;
    let (rates, decoder) = decoder_forward(model, &ctx, n_out, mode, rng, teacher)?;
    Ok((rates, SampleCache { encoder, decoder }))
}

/// Rates only, eval mode.
pub fn predict(model: &Seq2SeqModel, window: &Matrix, n_out: usize) -> Result<Vec<f64>> {
    let mut rng = RngState::new(0);
    Ok(forward_sample(model, window, n_out, Mode::Eval, &mut rng, None)?.0)
}

/// Forward results for a batch, tied to the parameter generation that made them.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub rates: Vec<Vec<f64>>,
    pub caches: Vec<SampleCache>,
    pub generation: u64,
}

impl BatchForward {
    pub fn flat_rates(&self) -> Vec<f64> {
        self.rates.concat()
    }
}

pub fn forward_batch(
    model: &Seq2SeqModel,
    windows: &[&Matrix],
    targets: Option<&[&[f64]]>,
    teacher_ratio: f64,
    mode: Mode,
    rng: &mut RngState,
) -> Result<BatchForward> {
    let n_out = model.config.n_out;
    let mut rates = Vec::with_capacity(windows.len());
    let mut caches = Vec::with_capacity(windows.len());
    for (k, w) in windows.iter().enumerate() {
        let teacher = targets.map(|t| TeacherForcing {
            targets: t[k],
            ratio: teacher_ratio,
        });
        let (r, c) = forward_sample(model, w, n_out, mode, rng, teacher)?;
        rates.push(r);
        caches.push(c);
    }
    Ok(BatchForward {
        rates,
        caches,
        generation: model.generation,
    })
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// Backpropagation through time for one sample. `d_rates[s]` is ∂L/∂rate_s.
pub fn backward_sample(model: &Seq2SeqModel, cache: &SampleCache, d_rates: &[f64], grads: &mut ModelParams) {
    let p = &model.params;
    let cfg = &model.config;
    let [d1, d2] = &p.decoder;
    let (g_dec1, g_dec2) = {
        let [a, b] = &mut grads.decoder;
        (a, b)
    };
    let mut dh1 = vec![0.0; cfg.block1.hidden];
    let mut dc1 = dh1.clone();
    let mut dh2 = vec![0.0; cfg.block2.hidden];
    let mut dc2 = dh2.clone();
    // gradient reaching rate_s through the next step's input
    let mut d_feedback = 0.0;
    for (s, step) in cache.decoder.iter().enumerate().rev() {
        let d_rate = d_rates[s] + d_feedback;
        let dz = match cfg.head {
            HeadKind::Exp => d_rate * step.rate,
            HeadKind::Linear => d_rate,
        };
        grads.head_w.add_outer(&[dz], &step.dense_out);
        grads.head_b[0] += dz;
        let d_dense_pre: Vec<f64> = step
            .dense_pre
            .iter()
            .zip(&step.dense_out)
            .zip(p.head_w.row(0))
            .map(|((&pre, &out), &w)| dz * w * Activation::Relu.derivative(pre, out))
            .collect();
        grads.dense_w.add_outer(&d_dense_pre, &step.dense_in);
        add_into(&mut grads.dense_b, &d_dense_pre);
        let mut d_dense_in = vec![0.0; step.dense_in.len()];
        p.dense_w.matvec_transpose_acc(&d_dense_pre, &mut d_dense_in);

        let mut dh2_total = apply_mask(&d_dense_in, &step.mask2);
        add_into(&mut dh2_total, &dh2);
        let (dx2, dh2_prev, dc2_prev) = lstm_cell_backward(d2, &step.cell2, &dh2_total, &dc2, g_dec2);
        let mut dh1_total = apply_mask(&dx2, &step.mask1);
        add_into(&mut dh1_total, &dh1);
        let (du, dh1_prev, dc1_prev) = lstm_cell_backward(d1, &step.cell1, &dh1_total, &dc1, g_dec1);
        d_feedback = if step.input_is_feedback { du[0] } else { 0.0 };
        dh1 = dh1_prev;
        dc1 = dc1_prev;
        dh2 = dh2_prev;
        dc2 = dc2_prev;
    }

    let [e1, e2] = &p.encoder;
    let (g_enc1, g_enc2) = {
        let [a, b] = &mut grads.encoder;
        (a, b)
    };
    for step in cache.encoder.iter().rev() {
        let (dx2, dh2_prev, dc2_prev) = lstm_cell_backward(e2, &step.cell2, &dh2, &dc2, g_enc2);
        let mut dh1_total = apply_mask(&dx2, &step.mask1);
        add_into(&mut dh1_total, &dh1);
        let (_, dh1_prev, dc1_prev) = lstm_cell_backward(e1, &step.cell1, &dh1_total, &dc1, g_enc1);
        dh1 = dh1_prev;
        dc1 = dc1_prev;
        dh2 = dh2_prev;
        dc2 = dc2_prev;
    }
}

/// Gradients of the batch loss given ∂L/∂rate for every sample and step.
pub fn backward_from_rate_grads(
    model: &Seq2SeqModel,
    batch: &BatchForward,
    d_rates: &[Vec<f64>],
) -> Result<ModelParams> {
    if batch.generation != model.generation {
        return Err(Error::StaleCache(format!(
            "forward pass used parameter generation {}, model is at {}",
            batch.generation, model.generation
        )));
    }
    if d_rates.len() != batch.caches.len() {
        return Err(Error::Shape(format!(
            "{} rate gradients for {} samples",
            d_rates.len(),
            batch.caches.len()
        )));
    }
    let mut grads = model.params.zeros_like();
    for (cache, d) in batch.caches.iter().zip(d_rates) {
        if d.len() != cache.decoder.len() {
            return Err(Error::Shape("rate gradient length differs from horizon".into()));
        }
        backward_sample(model, cache, d, &mut grads);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(head: HeadKind) -> ModelConfig {
        let mut c = ModelConfig::dual_block(3, 3, 2);
        c.block1.hidden = 4;
        c.block2.hidden = 3;
        c.dense_size = 3;
        c.head = head;
        c
    }

    #[test]
    fn zero_model_emits_unit_rates() {
        let m = Seq2SeqModel::zeros(&toy(HeadKind::Exp)).unwrap();
        let x = Matrix::new(3, 3, vec![0.3; 9]).unwrap();
        for n_out in 1..=7 {
            assert_eq!(predict(&m, &x, n_out).unwrap(), vec![1.0; n_out]);
        }
        assert!(matches!(predict(&m, &x, 8), Err(Error::Parameter(_))));
        assert!(matches!(predict(&m, &x, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn init_rules() {
        let cfg = toy(HeadKind::Exp);
        let a = init_params(&cfg, 17).unwrap();
        let b = init_params(&cfg, 17).unwrap();
        assert_eq!(a, b);
        for blk in a.params.encoder.iter().chain(&a.params.decoder) {
            assert!(blk.b_f.iter().all(|v| *v == 1.0));
            assert!(blk.b_i.iter().chain(&blk.b_c).chain(&blk.b_o).all(|v| *v == 0.0));
        }
        let mut zero = cfg.clone();
        zero.block2.hidden = 0;
        assert!(init_params(&zero, 1).is_err());
    }

    #[test]
    fn glorot_weights_are_centered() {
        let mut cfg = ModelConfig::dual_block(8, 2, 1);
        cfg.block1.hidden = 30;
        cfg.block2.hidden = 20;
        let m = init_params(&cfg, 99).unwrap();
        let w: Vec<f64> = m.params.encoder[0].w_f.data().iter()
            .chain(m.params.encoder[0].w_i.data())
            .chain(m.params.encoder[0].w_c.data())
            .chain(m.params.encoder[0].w_o.data())
            .chain(m.params.encoder[1].w_f.data())
            .copied()
            .collect();
        assert!(w.len() >= 4000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn eval_ignores_rng_and_single_step_context_matches_cells() {
        let m = init_params(&toy(HeadKind::Exp), 3).unwrap();
        let x = Matrix::new(1, 3, vec![0.2, -0.4, 0.9]).unwrap();
        let (ctx_a, _) = encoder_forward(&m, &x, Mode::Eval, &mut RngState::new(1)).unwrap();
        let (ctx_b, _) = encoder_forward(&m, &x, Mode::Eval, &mut RngState::new(2)).unwrap();
        assert_eq!(ctx_a, ctx_b);
        let z1 = vec![0.0; 4];
        let (h1, c1, _) = lstm_cell_forward(&m.params.encoder[0], x.row(0), &z1, &z1).unwrap();
        let z2 = vec![0.0; 3];
        let (h2, c2, _) = lstm_cell_forward(&m.params.encoder[1], &h1, &z2, &z2).unwrap();
        assert_eq!(ctx_a, Context { h1, c1, h2, c2 });
    }

    #[test]
    fn train_mode_masks_are_seeded() {
        let m = init_params(&toy(HeadKind::Exp), 3).unwrap();
        let x = Matrix::new(3, 3, (0..9).map(|v| v as f64 * 0.1).collect()).unwrap();
        let run = |seed| forward_sample(&m, &x, 2, Mode::Train, &mut RngState::new(seed), None).unwrap().0;
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn exp_head_is_positive_for_wild_weights() {
        let mut m = init_params(&toy(HeadKind::Exp), 8).unwrap();
        m.params.scale(25.0);
        let x = Matrix::new(3, 3, vec![5.0, -7.0, 3.0, 1.0, 0.0, -2.0, 9.0, 9.0, -9.0]).unwrap();
        for r in predict(&m, &x, 7).unwrap() {
            assert!(r > 0.0);
        }
    }

    #[test]
    fn dropout_keeps_expectation() {
        let mut rng = RngState::new(12);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let m = dropout_mask(1, 0.3, Mode::Train, &mut rng).unwrap();
            sum += 2.5 * m[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.02, "mean {mean}");
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut m = init_params(&toy(HeadKind::Exp), 1).unwrap();
        let x = Matrix::new(3, 3, vec![0.1; 9]).unwrap();
        let fwd = forward_batch(&m, &[&x], None, 0.0, Mode::Eval, &mut RngState::new(0)).unwrap();
        m.generation += 1;
        assert!(matches!(
            backward_from_rate_grads(&m, &fwd, &[vec![1.0, 1.0]]),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn tensor_listing_is_consistent() {
        let m = init_params(&toy(HeadKind::Linear), 1).unwrap();
        assert_eq!(ModelParams::tensor_names().len(), m.params.tensors().len());
        let mut p = m.params.clone();
        assert_eq!(p.tensors_mut().len(), 36);
    }
}
