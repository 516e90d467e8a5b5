use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_gamma;

/// Floor applied to rates when Poisson loss is forced on non-positive predictions.
pub const RATE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Poisson,
    Mse,
    /// Poisson NLL unless some prediction is ≤ 0, then MSE.
    Auto,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(LossMode::Poisson),
            "mse" => Ok(LossMode::Mse),
            "auto" => Ok(LossMode::Auto),
            other => Err(Error::Parameter(format!("unknown loss mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossBranch {
    Poisson,
    Mse,
}

fn check_lengths(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Parameter("loss of an empty batch".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(())
}

fn check_counts(targets: &[f64]) -> Result<()> {
    if let Some(y) = targets.iter().find(|y| !(**y >= 0.0) || y.fract() != 0.0) {
        return Err(Error::Domain(format!("Poisson target {y} is not a non-negative integer")));
    }
    Ok(())
}

/// Mean over elements of λ − y·ln λ + ln(y!).
pub fn loss_poisson_nll(rates: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(rates, targets)?;
    check_counts(targets)?;
    if let Some(l) = rates.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Domain(format!("Poisson rate {l} is not positive")));
    }
    let mut total = 0.0;
    for (&l, &y) in rates.iter().zip(targets) {
        total += l - y * l.ln() + log_gamma(y + 1.0)?;
    }
    Ok(total / rates.len() as f64)
}

pub fn loss_mse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(preds, targets)?;
    Ok(preds.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / preds.len() as f64)
}

/// Which branch `mode` takes for these predictions.
pub fn select_branch(preds: &[f64], mode: LossMode) -> LossBranch {
    match mode {
        LossMode::Poisson => LossBranch::Poisson,
        LossMode::Mse => LossBranch::Mse,
        LossMode::Auto => {
            if preds.iter().all(|p| *p > 0.0) {
                LossBranch::Poisson
            } else {
                LossBranch::Mse
            }
        }
    }
}

fn clamp_rates(preds: &[f64]) -> Vec<f64> {
    if preds.iter().any(|p| !(*p > RATE_FLOOR)) {
        log::warn!("poisson loss forced on non-positive predictions; clamping to {RATE_FLOOR}");
    }
    preds.iter().map(|p| p.max(RATE_FLOOR)).collect()
}

/// Evaluates the loss chosen by `mode`.
pub fn loss_select(preds: &[f64], targets: &[f64], mode: LossMode) -> Result<(f64, LossBranch)> {
    let branch = select_branch(preds, mode);
    let value = match branch {
        LossBranch::Mse => loss_mse(preds, targets)?,
        LossBranch::Poisson => loss_poisson_nll(&clamp_rates(preds), targets)?,
    };
    Ok((value, branch))
}

/// Loss value and its gradient with respect to each prediction.
pub fn loss_with_gradient(preds: &[f64], targets: &[f64], branch: LossBranch) -> Result<(f64, Vec<f64>)> {
    let n = preds.len() as f64;
    match branch {
        LossBranch::Mse => {
            let value = loss_mse(preds, targets)?;
            let grad = preds.iter().zip(targets).map(|(p, y)| 2.0 * (p - y) / n).collect();
            Ok((value, grad))
        }
        LossBranch::Poisson => {
            let clamped = clamp_rates(preds);
            let value = loss_poisson_nll(&clamped, targets)?;
            let grad = preds
                .iter()
                .zip(&clamped)
                .zip(targets)
                .map(|((p, l), y)| if *p > RATE_FLOOR { (1.0 - y / l) / n } else { 0.0 })
                .collect();
            Ok((value, grad))
        }
    }
}
