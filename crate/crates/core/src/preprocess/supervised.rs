use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::frame::EventFrame;
use crate::numerics::Matrix;

/// Longest forecast horizon the decoder emits.
pub const MAX_HORIZON: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleMeta {
    pub region: i64,
    /// Date of the first target step.
    pub anchor: NaiveDate,
}

/// Lagged input windows (`n_in × features`) paired with `n_out` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    pub inputs: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
    pub meta: Vec<SampleMeta>,
    pub n_in: usize,
    pub n_out: usize,
    pub feature_names: Vec<String>,
}

impl SupervisedSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, idx: &[usize]) -> SupervisedSet {
        SupervisedSet {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
            meta: idx.iter().map(|&i| self.meta[i]).collect(),
            n_in: self.n_in,
            n_out: self.n_out,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Sample indices grouped by region, each in anchor order.
    pub fn region_indices(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, m) in self.meta.iter().enumerate() {
            out.entry(m.region).or_default().push(i);
        }
        for idx in out.values_mut() {
            idx.sort_by_key(|&i| self.meta[i].anchor);
        }
        out
    }
}

pub fn check_window(n_in: usize, n_out: usize) -> Result<()> {
    if n_in == 0 {
        return Err(Error::Parameter("n_in must be at least 1".into()));
    }
    if !(1..=MAX_HORIZON).contains(&n_out) {
        return Err(Error::Parameter(format!(
            "horizon n_out = {n_out} outside 1..={MAX_HORIZON}"
        )));
    }
    Ok(())
}

/// Splits each region's date-ordered rows into runs of consecutive days.
pub fn contiguous_segments(frame: &EventFrame) -> Vec<(i64, Vec<usize>)> {
    let keys = frame.keys();
    let mut out = Vec::new();
    for (region, rows) in frame.region_rows() {
        let mut current: Vec<usize> = Vec::new();
        for i in rows {
            if let Some(&prev) = current.last() {
                if (keys[i].date - keys[prev].date).num_days() != 1 {
                    out.push((region, std::mem::take(&mut current)));
                }
            }
            current.push(i);
        }
        if !current.is_empty() {
            out.push((region, current));
        }
    }
    out
}

/// Window positions over a run of `len` rows: `(input rows, target rows)` offsets.
pub fn window_offsets(len: usize, n_in: usize, n_out: usize) -> impl Iterator<Item = usize> {
    let count = (len + 1).saturating_sub(n_in + n_out);
    0..count
}

/// Turns each region's daily series into sliding windows: inputs are the
/// `n_in` feature rows before the anchor, targets the `n_out` values of
/// `target` from the anchor on. Windows never cross regions or calendar gaps.
pub fn series_to_supervised(
    frame: &EventFrame,
    features: &[&str],
    target: &str,
    n_in: usize,
    n_out: usize,
) -> Result<SupervisedSet> {
    check_window(n_in, n_out)?;
    let feature_cols: Vec<&[f64]> = features.iter().map(|f| frame.column(f)).collect::<Result<_>>()?;
    let target_col = frame.column(target)?;
    let keys = frame.keys();
    let mut set = SupervisedSet {
        inputs: Vec::new(),
        targets: Vec::new(),
        meta: Vec::new(),
        n_in,
        n_out,
        feature_names: features.iter().map(|s| s.to_string()).collect(),
    };
    let mut produced: BTreeMap<i64, usize> = BTreeMap::new();
    for (region, rows) in contiguous_segments(frame) {
        let count = produced.entry(region).or_insert(0);
        for start in window_offsets(rows.len(), n_in, n_out) {
            let mut m = Matrix::zeros(n_in, features.len());
            for (t, &row) in rows[start..start + n_in].iter().enumerate() {
                for (j, col) in feature_cols.iter().enumerate() {
                    m.set(t, j, col[row]);
                }
            }
            let target_rows = &rows[start + n_in..start + n_in + n_out];
            set.inputs.push(m);
            set.targets.push(target_rows.iter().map(|&r| target_col[r]).collect());
            set.meta.push(SampleMeta {
                region,
                anchor: keys[target_rows[0]].date,
            });
            *count += 1;
        }
    }
    for (region, n) in &produced {
        if *n == 0 {
            log::warn!("region {region} skipped: no run of {} consecutive days", n_in + n_out);
        }
    }
    if set.is_empty() {
        return Err(Error::Window(format!(
            "no region has {} consecutive days of history",
            n_in + n_out
        )));
    }
    Ok(set)
}

/// Per-region train/test sizes: the train side gets `ceil(n · (1 − fraction))`.
pub fn split_sizes(n: usize, fraction: f64) -> (usize, usize) {
    let test = ((n as f64) * fraction + 1e-9).floor() as usize;
    (n - test, test)
}

/// Chronological split: the last `fraction` of every region's samples go to test.
pub fn train_test_split(set: &SupervisedSet, fraction: f64) -> Result<(SupervisedSet, SupervisedSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!("split fraction {fraction} outside (0, 1)")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in set.region_indices().values() {
        let (n_train, _) = split_sizes(idx.len(), fraction);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Parameter(format!(
            "fraction {fraction} of {} samples leaves an empty side",
            set.len()
        )));
    }
    Ok((set.subset(&train), set.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{FrameKey, TARGET};
    use proptest::prelude::*;

    fn series_frame(regions: &[(i64, Vec<f64>)]) -> EventFrame {
        let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let mut keys = Vec::new();
        let mut y = Vec::new();
        for (r, vals) in regions {
            for (i, v) in vals.iter().enumerate() {
                keys.push(FrameKey::new(start + chrono::Days::new(i as u64), *r));
                y.push(*v);
            }
        }
        let mut c = BTreeMap::new();
        c.insert(TARGET.to_string(), y);
        EventFrame::from_parts(keys, c).unwrap()
    }

    #[test]
    fn five_point_series() {
        let f = series_frame(&[(1, vec![1.0, 2.0, 3.0, 4.0, 5.0])]);
        let s = series_to_supervised(&f, &[TARGET], TARGET, 2, 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.inputs[0].data(), &[1.0, 2.0]);
        assert_eq!(s.targets[0], vec![3.0, 4.0]);
        assert_eq!(s.inputs[1].data(), &[2.0, 3.0]);
        assert_eq!(s.targets[1], vec![4.0, 5.0]);
    }

    #[test]
    fn minimal_and_invalid_windows() {
        let f = series_frame(&[(1, vec![1.0, 2.0])]);
        assert_eq!(series_to_supervised(&f, &[TARGET], TARGET, 1, 1).unwrap().len(), 1);
        assert!(matches!(
            series_to_supervised(&f, &[TARGET], TARGET, 1, 8),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            series_to_supervised(&f, &[TARGET], TARGET, 2, 1),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn regions_are_not_mixed_and_short_regions_skip() {
        let f = series_frame(&[(1, vec![1.0, 2.0, 3.0]), (2, vec![10.0]), (3, vec![7.0, 8.0, 9.0])]);
        let s = series_to_supervised(&f, &[TARGET], TARGET, 1, 1).unwrap();
        assert_eq!(s.len(), 4);
        for (m, (x, y)) in s.meta.iter().zip(s.inputs.iter().zip(&s.targets)) {
            assert_ne!(m.region, 2);
            assert_eq!(y[0] - x.get(0, 0), 1.0);
        }
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        let f = series_frame(&[(1, (0..11).map(f64::from).collect())]);
        let s = series_to_supervised(&f, &[TARGET], TARGET, 1, 1).unwrap();
        assert_eq!(s.len(), 10);
        let (tr, te) = train_test_split(&s, 0.2).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert!(tr.meta.iter().map(|m| m.anchor).max() < te.meta.iter().map(|m| m.anchor).min());
        assert_eq!(split_sizes(3, 0.5), (2, 1));
        assert!(train_test_split(&s, 1.0).is_err());
        assert!(train_test_split(&s, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn targets_match_brute_force_index(
            values in proptest::collection::vec(-100.0f64..100.0, 3..40),
            n_in in 1usize..5,
            n_out in 1usize..=7,
        ) {
            prop_assume!(values.len() >= n_in + n_out);
            let f = series_frame(&[(5, values.clone())]);
            let s = series_to_supervised(&f, &[TARGET], TARGET, n_in, n_out).unwrap();
            prop_assert_eq!(s.len(), values.len() - n_in - n_out + 1);
            for (k, (x, y)) in s.inputs.iter().zip(&s.targets).enumerate() {
                for i in 0..n_in {
                    prop_assert_eq!(x.get(i, 0), values[k + i]);
                }
                for j in 0..n_out {
                    prop_assert_eq!(y[j], values[k + n_in + j]);
                }
            }
        }

        #[test]
        fn chronological_split_per_region(
            lens in proptest::collection::vec(6usize..30, 1..4),
            frac in 0.1f64..0.6,
        ) {
            let regions: Vec<(i64, Vec<f64>)> = lens.iter().enumerate()
                .map(|(r, &n)| (r as i64, (0..n).map(|v| v as f64).collect())).collect();
            let s = series_to_supervised(&series_frame(&regions), &[TARGET], TARGET, 2, 2).unwrap();
            if let Ok((tr, te)) = train_test_split(&s, frac) {
                for r in 0..lens.len() as i64 {
                    let last_train = tr.meta.iter().filter(|m| m.region == r).map(|m| m.anchor).max();
                    let first_test = te.meta.iter().filter(|m| m.region == r).map(|m| m.anchor).min();
                    if let (Some(a), Some(b)) = (last_train, first_test) {
                        prop_assert!(a < b);
                    }
                }
            }
        }
    }
}
