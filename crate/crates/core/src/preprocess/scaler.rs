use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::EventFrame;

pub const SCALER_SCHEMA_VERSION: u32 = 1;

/// Per-column min/max fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    fn index(&self, column: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| Error::Schema(format!("scaler has no column `{column}`")))
    }

    pub fn scale_value(&self, column: &str, x: f64) -> Result<f64> {
        let j = self.index(column)?;
        Ok(scale_one(x, self.min[j], self.max[j]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ScalerParams = serde_json::from_str(text)?;
        if p.schema_version != SCALER_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "scaler schema version {} unsupported",
                p.schema_version
            )));
        }
        if p.min.len() != p.columns.len() || p.max.len() != p.columns.len() {
            return Err(Error::Format("scaler arrays disagree with column list".into()));
        }
        Ok(p)
    }
}

#[inline]
fn scale_one(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (x - min) / (max - min)
    } else {
        0.0
    }
}

/// Fits min/max of every frame column over `train_rows` only.
pub fn scale_fit(frame: &EventFrame, train_rows: &[usize]) -> Result<ScalerParams> {
    scale_fit_columns(frame, &frame.column_names().collect::<Vec<_>>(), train_rows)
}

pub fn scale_fit_columns(frame: &EventFrame, columns: &[&str], train_rows: &[usize]) -> Result<ScalerParams> {
    if train_rows.is_empty() {
        return Err(Error::Parameter("scaler needs at least one training row".into()));
    }
    let mut params = ScalerParams {
        schema_version: SCALER_SCHEMA_VERSION,
        columns: Vec::new(),
        min: Vec::new(),
        max: Vec::new(),
    };
    for name in columns {
        let col = frame.column(name)?;
        let (lo, hi) = train_rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(col[i]), hi.max(col[i]))
        });
        params.columns.push(name.to_string());
        params.min.push(lo);
        params.max.push(hi);
    }
    Ok(params)
}

/// Maps every fitted column to `(x - min) / (max - min)`. Out-of-range
/// values are not clamped; constant columns map to 0.
pub fn scale_apply(frame: &EventFrame, params: &ScalerParams) -> Result<EventFrame> {
    let mut out = frame.clone();
    for (j, name) in params.columns.iter().enumerate() {
        let (lo, hi) = (params.min[j], params.max[j]);
        let scaled = frame.column(name)?.iter().map(|&x| scale_one(x, lo, hi)).collect();
        out.set_column(name.clone(), scaled)?;
    }
    Ok(out)
}

/// Inverse of [`scale_apply`] for one column. Constant columns invert to their single value.
pub fn scale_invert(values: &[f64], params: &ScalerParams, column: &str) -> Result<Vec<f64>> {
    let j = params.index(column)?;
    let (lo, hi) = (params.min[j], params.max[j]);
    Ok(values.iter().map(|&v| lo + v * (hi - lo)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameKey;
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn frame(cols: &[(&str, Vec<f64>)]) -> EventFrame {
        let n = cols[0].1.len();
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let keys = (0..n).map(|i| FrameKey::new(start + chrono::Days::new(i as u64), 1)).collect();
        let c: BTreeMap<String, Vec<f64>> = cols.iter().map(|(n, v)| (n.to_string(), v.clone())).collect();
        EventFrame::from_parts(keys, c).unwrap()
    }

    #[test]
    fn fit_apply_invert() {
        let f = frame(&[("a", vec![0.0, 5.0, 10.0]), ("c", vec![2.0, 2.0, 2.0])]);
        let p = scale_fit(&f, &[0, 1, 2]).unwrap();
        assert_eq!((p.min[0], p.max[0]), (0.0, 10.0));
        assert_eq!((p.min[1], p.max[1]), (2.0, 2.0));
        assert_eq!(p, scale_fit(&f, &[0, 1, 2]).unwrap());
        let s = scale_apply(&f, &p).unwrap();
        assert_eq!(s.column("a").unwrap(), &[0.0, 0.5, 1.0]);
        assert_eq!(s.column("c").unwrap(), &[0.0, 0.0, 0.0]);
        assert_eq!(scale_invert(&[0.0, 0.5, 1.0], &p, "a").unwrap(), vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn fit_uses_training_rows_only_and_does_not_clamp() {
        let f = frame(&[("a", vec![0.0, 10.0, 12.0])]);
        let p = scale_fit(&f, &[0, 1]).unwrap();
        let s = scale_apply(&f, &p).unwrap();
        assert!((s.column("a").unwrap()[2] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let f = frame(&[("a", vec![0.0, 1.0])]);
        assert!(scale_fit(&f, &[]).is_err());
        let p = scale_fit(&f, &[0, 1]).unwrap();
        assert!(matches!(scale_invert(&[0.0], &p, "zzz"), Err(Error::Schema(_))));
    }

    #[test]
    fn json_round_trip() {
        let f = frame(&[("a", vec![0.1, 0.7, 1.0 / 3.0])]);
        let p = scale_fit(&f, &[0, 1, 2]).unwrap();
        assert_eq!(ScalerParams::from_json(&p.to_json().unwrap()).unwrap(), p);
    }
}
