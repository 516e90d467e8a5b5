use crate::error::{Error, Result};
use crate::frame::EventFrame;

pub const DEFAULT_Q_LOW: f64 = 0.25;
pub const DEFAULT_Q_HIGH: f64 = 0.99;

/// Linear-interpolation quantile (Hyndman–Fan type 7) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Keeps rows whose `column` value lies in `[Q(q_low), Q(q_high)]` inclusive.
///
/// A column with fewer than two distinct values is left unfiltered (with a
/// warning), since its quantile bounds carry no information.
pub fn quantile_filter(frame: &EventFrame, column: &str, q_low: f64, q_high: f64) -> Result<EventFrame> {
    if q_low > q_high {
        return Err(Error::Parameter(format!(
            "lower quantile {q_low} exceeds upper quantile {q_high}"
        )));
    }
    let values = frame.column(column)?;
    let first = values.first().copied();
    if first.is_none_or(|f| values.iter().all(|v| *v == f)) {
        log::warn!("quantile filter on `{column}` skipped: column has fewer than two distinct values");
        return Ok(frame.clone());
    }
    let lo = quantile(values, q_low)?;
    let hi = quantile(values, q_high)?;
    Ok(frame.filter_rows(|i| values[i] >= lo && values[i] <= hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameKey, TARGET};
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn frame(values: Vec<f64>) -> EventFrame {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let keys = (0..values.len())
            .map(|i| FrameKey::new(start + chrono::Days::new(i as u64), 1))
            .collect();
        let mut c = BTreeMap::new();
        c.insert(TARGET.to_string(), values);
        EventFrame::from_parts(keys, c).unwrap()
    }

    /// Type-7 quantile computed from its textbook definition with explicit
    /// order statistics, independent of the sort/index path above.
    fn oracle_q(n: usize, q: f64) -> f64 {
        // values are 0..n-1 so the j-th order statistic is j - 1
        let h = (n as f64 - 1.0) * q + 1.0;
        let j = h.floor();
        (j - 1.0) + (h - j) * 1.0
    }

    #[test]
    fn type7_bounds() {
        let v: Vec<f64> = (0..100).map(f64::from).collect();
        assert!((quantile(&v, 0.25).unwrap() - 24.75).abs() < 1e-12);
        assert!((quantile(&v, 0.99).unwrap() - 98.01).abs() < 1e-12);
        assert!((oracle_q(100, 0.25) - 24.75).abs() < 1e-12);
        assert!((oracle_q(100, 0.99) - 98.01).abs() < 1e-12);
    }

    #[test]
    fn default_filter_keeps_25_through_98() {
        let f = frame((0..100).map(f64::from).collect());
        let kept = quantile_filter(&f, TARGET, DEFAULT_Q_LOW, DEFAULT_Q_HIGH).unwrap();
        let expected: Vec<f64> = (25..=98).map(f64::from).collect();
        assert_eq!(kept.target().unwrap(), expected.as_slice());
    }

    #[test]
    fn full_range_is_identity() {
        let f = frame(vec![3.0, 1.0, 4.0, 1.0, 5.0]);
        assert_eq!(quantile_filter(&f, TARGET, 0.0, 1.0).unwrap(), f);
    }

    #[test]
    fn missing_column_and_constant_column() {
        let f = frame(vec![2.0, 2.0, 2.0]);
        assert!(matches!(quantile_filter(&f, "nope", 0.25, 0.99), Err(Error::Schema(_))));
        assert_eq!(quantile_filter(&f, TARGET, 0.25, 0.99).unwrap(), f);
    }
}
