//! Filtering, calendar features, smoothing, scaling, windowing and PCA.

mod denoise;
mod pca;
mod quantile;
mod scaler;
mod supervised;
mod temporal;

use std::collections::BTreeMap;

pub use denoise::{denoise, gaussian_kernel, smooth_series, DEFAULT_SIGMA, DEFAULT_WINDOW};
pub use pca::{
    covariance, pca_fit, pca_reconstruct, pca_transform, PcaModel, DEFAULT_VARIANCE_THRESHOLD,
    PCA_SCHEMA_VERSION,
};
pub use quantile::{quantile, quantile_filter, DEFAULT_Q_HIGH, DEFAULT_Q_LOW};
pub use scaler::{
    scale_apply, scale_fit, scale_fit_columns, scale_invert, ScalerParams, SCALER_SCHEMA_VERSION,
};
pub use supervised::{
    check_window, contiguous_segments, series_to_supervised, split_sizes, train_test_split,
    window_offsets, SampleMeta, SupervisedSet, MAX_HORIZON,
};
pub use temporal::{add_temporal_features, season_of, temporal_codes, TEMPORAL_COLUMNS};

use crate::error::Result;
use crate::frame::{EventFrame, FrameKey, TARGET};
use crate::ingest::IMPUTED_FLAG;

/// Fills every missing day between a region's first and last date.
///
/// Filled rows get `y = 0`, the region mean of every other column over its
/// observed rows, and [`IMPUTED_FLAG`] = 1.
pub fn complete_calendar(frame: &EventFrame) -> Result<EventFrame> {
    let names: Vec<String> = frame.column_names().map(str::to_string).collect();
    let mut keys: Vec<FrameKey> = frame.keys().to_vec();
    let mut columns: BTreeMap<String, Vec<f64>> = names
        .iter()
        .map(|n| Ok((n.clone(), frame.column(n)?.to_vec())))
        .collect::<Result<_>>()?;
    let mut flag = match frame.column(IMPUTED_FLAG) {
        Ok(c) => c.to_vec(),
        Err(_) => vec![0.0; frame.len()],
    };
    for (region, rows) in frame.region_rows() {
        let first = frame.keys()[rows[0]].date;
        let last = frame.keys()[*rows.last().unwrap()].date;
        let present: std::collections::BTreeSet<_> = rows.iter().map(|&i| frame.keys()[i].date).collect();
        let means: BTreeMap<&str, f64> = names
            .iter()
            .map(|n| {
                let col = frame.column(n).expect("column listed");
                (n.as_str(), rows.iter().map(|&i| col[i]).sum::<f64>() / rows.len() as f64)
            })
            .collect();
        let mut day = first;
        while day <= last {
            if !present.contains(&day) {
                keys.push(FrameKey::new(day, region));
                for n in &names {
                    let v = if n == TARGET {
                        0.0
                    } else if n == IMPUTED_FLAG {
                        1.0
                    } else {
                        means[n.as_str()]
                    };
                    columns.get_mut(n).expect("column").push(v);
                }
                flag.push(1.0);
            }
            day = day.succ_opt().expect("date in range");
        }
    }
    columns.insert(IMPUTED_FLAG.to_string(), flag);
    EventFrame::from_parts(keys, columns)
}
