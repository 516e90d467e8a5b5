//! Dual-block seq2seq LSTM: cells, losses, backpropagation, Adam, training,
//! forecasting and checkpoints.

mod adam;
mod checkpoint;
mod forecast;
mod loss;
mod lstm;
mod seq2seq;
mod train;

pub use adam::{adam_step, adam_step_slices, AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_load, checkpoint_save, checkpoint_to_bytes, sha256_hex, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forecast::{forecast, round_half_up, ForecastStep, RateScale};
pub use loss::{
    loss_mse, loss_poisson_nll, loss_select, loss_with_gradient, select_branch, LossBranch, LossMode, RATE_FLOOR,
};
pub use lstm::{lstm_cell_backward, lstm_cell_forward, CellCache, LstmBlockParams};
pub use seq2seq::{
    backward_from_rate_grads, backward_sample, check_horizon, decoder_forward, encoder_forward, forward_batch,
    forward_sample, init_params, predict, BatchForward, BlockConfig, Context, DecoderStep, EncoderStep, HeadKind,
    Mode, ModelConfig, ModelParams, SampleCache, Seq2SeqModel, TeacherForcing,
};
pub use train::{evaluate_loss, train, train_with_validation, EpochRecord, TrainConfig, TrainHistory, TrainOutcome};

use crate::error::Result;

/// Loss of `model` on a batch and the gradients of `scale · loss`.
///
/// Dropout masks come from `rng`; pass a clone to replay the same masks.
pub fn loss_and_gradients(
    model: &Seq2SeqModel,
    windows: &[&crate::numerics::Matrix],
    targets: &[&[f64]],
    branch: LossBranch,
    mode: Mode,
    rng: &mut crate::numerics::RngState,
    scale: f64,
) -> Result<(f64, ModelParams)> {
    let fwd = forward_batch(model, windows, None, 0.0, mode, rng)?;
    let preds = fwd.flat_rates();
    let (value, grad) = loss_with_gradient(&preds, &targets.concat(), branch)?;
    let d_rates: Vec<Vec<f64>> = grad
        .chunks(model.config.n_out)
        .map(|c| c.iter().map(|g| g * scale).collect())
        .collect();
    Ok((value * scale, backward_from_rate_grads(model, &fwd, &d_rates)?))
}
