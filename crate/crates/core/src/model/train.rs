use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{loss_select, loss_with_gradient, select_branch, LossMode};
use super::seq2seq::{backward_from_rate_grads, forward_batch, Mode, Seq2SeqModel};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState};
use crate::preprocess::{train_test_split, SupervisedSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub adam: AdamConfig,
    /// Probability of feeding the true previous target to the decoder.
    pub teacher_forcing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            validation_fraction: 0.2,
            patience: 5,
            seed: 42,
            loss_mode: LossMode::Auto,
            adam: AdamConfig::default(),
            teacher_forcing: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("epochs and batch_size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Parameter("patience must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing) {
            return Err(Error::Parameter("teacher forcing ratio outside [0, 1]".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.iter().map(|e| e.val_loss).fold(None, |acc, v| match acc {
            Some(a) if a <= v => Some(a),
            _ => Some(v),
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Seq2SeqModel,
    pub adam: AdamState,
    pub history: TrainHistory,
}

fn check_set(model: &Seq2SeqModel, set: &SupervisedSet, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Parameter(format!("{what} set is empty")));
    }
    if set.n_features() != model.config.input_size || set.n_out != model.config.n_out {
        return Err(Error::Shape(format!(
            "{what} set has {} features / horizon {}, model expects {} / {}",
            set.n_features(),
            set.n_out,
            model.config.input_size,
            model.config.n_out
        )));
    }
    Ok(())
}

/// Eval-mode loss over a whole set; the branch is chosen from all its predictions.
pub fn evaluate_loss(model: &Seq2SeqModel, set: &SupervisedSet, mode: LossMode) -> Result<f64> {
    let windows: Vec<&Matrix> = set.inputs.iter().collect();
    let fwd = forward_batch(model, &windows, None, 0.0, Mode::Eval, &mut RngState::new(0))?;
    let preds = fwd.flat_rates();
    let targets = set.targets.concat();
    Ok(loss_select(&preds, &targets, mode)?.0)
}

/// Splits off the chronologically last `validation_fraction` of each region's
/// samples and trains on the rest.
pub fn train(model: Seq2SeqModel, set: &SupervisedSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_set, val_set) = train_test_split(set, config.validation_fraction)?;
    train_with_validation(model, &train_set, &val_set, config)
}

/// Mini-batch Adam with seeded shuffling and early stopping on `val`.
/// The returned model holds the weights of the best validation epoch.
pub fn train_with_validation(
    mut model: Seq2SeqModel,
    train_set: &SupervisedSet,
    val_set: &SupervisedSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_set(&model, train_set, "training")?;
    check_set(&model, val_set, "validation")?;
    let mut shuffle_rng = RngState::new(config.seed);
    let mut dropout_rng = shuffle_rng.derive(1);
    let mut adam = AdamState::for_params(config.adam, &model.params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Seq2SeqModel, AdamState)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut weight = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let windows: Vec<&Matrix> = chunk.iter().map(|&i| &train_set.inputs[i]).collect();
            let targets: Vec<&[f64]> = chunk.iter().map(|&i| train_set.targets[i].as_slice()).collect();
            let fwd = forward_batch(
                &model,
                &windows,
                Some(&targets),
                config.teacher_forcing,
                Mode::Train,
                &mut dropout_rng,
            )?;
            let preds = fwd.flat_rates();
            let flat_targets = targets.concat();
            let branch = select_branch(&preds, config.loss_mode);
            let (value, grad) = loss_with_gradient(&preds, &flat_targets, branch)?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    message: format!("loss is {value}"),
                });
            }
            let d_rates: Vec<Vec<f64>> = grad.chunks(model.config.n_out).map(<[f64]>::to_vec).collect();
            let grads = backward_from_rate_grads(&model, &fwd, &d_rates)?;
            adam_step(&mut model, &grads, &mut adam)?;
            if !model.params.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    message: "parameters became non-finite".into(),
                });
            }
            loss_sum += value * preds.len() as f64;
            weight += preds.len() as f64;
        }
        let train_loss = loss_sum / weight;
        let val_loss = evaluate_loss(&model, val_set, config.loss_mode)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                message: format!("validation loss is {val_loss}"),
            });
        }
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match &best {
            Some((b, _, _)) if val_loss >= *b => since_best += 1,
            _ => {
                best = Some((val_loss, model.clone(), adam.clone()));
                history.best_epoch = epoch;
                since_best = 0;
            }
        }
        if since_best >= config.patience {
            history.stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (_, best_model, best_adam) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        adam: best_adam,
        history,
    })
}
