use serde::{Deserialize, Serialize};

use super::seq2seq::{check_horizon, predict, Seq2SeqModel};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::preprocess::{scale_invert, ScalerParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastStep {
    /// 1-based step ahead of the window.
    pub horizon: usize,
    pub rate: f64,
    pub count: u64,
}

/// Rounds halves up: 3.5 → 4, 2.49 → 2. Negative input maps to 0.
pub fn round_half_up(x: f64) -> u64 {
    if !(x > 0.0) {
        return 0;
    }
    (x + 0.5).floor() as u64
}

/// Where the model's rate lives on the original scale.
#[derive(Debug, Clone, Copy)]
pub struct RateScale<'a> {
    pub scaler: &'a ScalerParams,
    pub column: &'a str,
}

/// Eval-mode forecast for one preprocessed window.
///
/// Rates are mapped back through `rate_scale` when the target was scaled,
/// clamped at 0, and paired with a half-up rounded count.
pub fn forecast(
    model: &Seq2SeqModel,
    window: &Matrix,
    horizon: usize,
    rate_scale: Option<RateScale<'_>>,
) -> Result<Vec<ForecastStep>> {
    check_horizon(horizon)?;
    if window.rows() != model.config.n_in {
        return Err(Error::Shape(format!(
            "forecast window has {} rows, model was trained on {}",
            window.rows(),
            model.config.n_in
        )));
    }
    if window.cols() != model.config.input_size {
        return Err(Error::Schema(format!(
            "forecast window has {} features, model expects {}",
            window.cols(),
            model.config.input_size
        )));
    }
    let mut rates = predict(model, window, horizon)?;
    if let Some(rs) = rate_scale {
        rates = scale_invert(&rates, rs.scaler, rs.column)?;
    }
    Ok(rates
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let rate = r.max(0.0);
            ForecastStep {
                horizon: k + 1,
                rate,
                count: round_half_up(rate),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(3.5), 4);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(round_half_up(0.5), 1);
        assert_eq!(round_half_up(-1.0), 0);
    }

    #[test]
    fn zero_model_forecasts_unit_rate() {
        let cfg = ModelConfig::dual_block(2, 3, 1);
        let m = Seq2SeqModel::zeros(&cfg).unwrap();
        let w = Matrix::zeros(3, 2);
        let out = forecast(&m, &w, 7, None).unwrap();
        assert_eq!(out.len(), 7);
        for (k, s) in out.iter().enumerate() {
            assert_eq!(s.horizon, k + 1);
            assert_eq!(s.rate, 1.0);
            assert_eq!(s.count, 1);
        }
        assert!(matches!(forecast(&m, &Matrix::zeros(3, 4), 1, None), Err(Error::Schema(_))));
        assert!(matches!(forecast(&m, &w, 8, None), Err(Error::Parameter(_))));
    }
}
