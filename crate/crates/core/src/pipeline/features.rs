use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};
use crate::frame::{EventFrame, TARGET};
use crate::ingest::{IMPUTED_FLAG, WEATHER_FEATURES};
use crate::numerics::Matrix;
use crate::preprocess::{pca_fit, pca_transform, scale_apply, scale_fit_columns, PcaModel, ScalerParams, SupervisedSet};

/// Scaled copy of the outage count, used as an input feature. The raw `y`
/// stays the target.
pub const SCALED_TARGET: &str = "y_scaled";

/// Inputs that skip PCA and are only min-max scaled.
pub const PASSTHROUGH: [&str; 5] = ["day_of_week", "month", "season", IMPUTED_FLAG, SCALED_TARGET];

/// Weather columns smoothed in time (the binary thunderstorm flag is left alone).
pub const DENOISED: [&str; 6] = [
    "wind_speed",
    "wind_gust",
    "wind_bearing",
    "cloud_cover",
    "snow_cover",
    "rainfall",
];

fn scaled_columns() -> Vec<&'static str> {
    WEATHER_FEATURES.iter().chain(PASSTHROUGH.iter()).copied().collect()
}

fn with_scaled_target(frame: &EventFrame) -> Result<EventFrame> {
    let mut out = frame.clone();
    out.set_column(SCALED_TARGET, frame.target()?.to_vec())?;
    Ok(out)
}

/// Min-max scaling of every input column, then PCA of the scaled weather
/// columns. Both are fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    pub scaler: ScalerParams,
    pub pca: PcaModel,
}

impl FeatureTransform {
    pub fn fit(frame: &EventFrame, train_rows: &[usize], pca_threshold: f64) -> Result<Self> {
        let frame = with_scaled_target(frame)?;
        let scaler = scale_fit_columns(&frame, &scaled_columns(), train_rows)?;
        let scaled = scale_apply(&frame, &scaler)?;
        let weather = weather_matrix(&scaled, Some(train_rows))?;
        let mut pca = pca_fit(&weather, pca_threshold)?;
        pca.columns = WEATHER_FEATURES.iter().map(|s| s.to_string()).collect();
        Ok(Self { scaler, pca })
    }

    pub fn feature_names(&self) -> Vec<String> {
        (1..=self.pca.k)
            .map(|i| format!("pc{i}"))
            .chain(PASSTHROUGH.iter().map(|s| s.to_string()))
            .collect()
    }

    fn check_schema(&self, frame: &EventFrame) -> Result<()> {
        let expected: Vec<String> = scaled_columns().iter().map(|s| s.to_string()).collect();
        if self.scaler.columns != expected {
            return Err(Error::Schema(format!(
                "scaler columns {:?} differ from the expected {:?}",
                self.scaler.columns, expected
            )));
        }
        if self.pca.columns != WEATHER_FEATURES {
            return Err(Error::Schema(format!("PCA columns {:?} are not the weather set", self.pca.columns)));
        }
        let missing: Vec<&str> = expected
            .iter()
            .map(String::as_str)
            .filter(|c| *c != SCALED_TARGET && !frame.has_column(c))
            .chain(std::iter::once(TARGET).filter(|t| !frame.has_column(t)))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!("frame lacks columns {missing:?}")));
        }
        Ok(())
    }

    /// Frame holding the model inputs ([`Self::feature_names`]) and the raw target.
    pub fn apply(&self, frame: &EventFrame) -> Result<EventFrame> {
        self.check_schema(frame)?;
        let scaled = scale_apply(&with_scaled_target(frame)?, &self.scaler)?;
        let scores = pca_transform(&weather_matrix(&scaled, None)?, &self.pca)?;
        let mut out = EventFrame::from_parts(scaled.keys().to_vec(), Default::default())?;
        for c in 0..self.pca.k {
            out.set_column(format!("pc{}", c + 1), scores.column(c))?;
        }
        for name in PASSTHROUGH {
            out.set_column(name, scaled.column(name)?.to_vec())?;
        }
        out.set_column(TARGET, frame.target()?.to_vec())?;
        Ok(out)
    }
}

fn weather_matrix(frame: &EventFrame, rows: Option<&[usize]>) -> Result<Matrix> {
    let cols: Vec<&[f64]> = WEATHER_FEATURES.iter().map(|c| frame.column(c)).collect::<Result<_>>()?;
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..frame.len()).collect();
            &all
        }
    };
    let mut m = Matrix::zeros(rows.len(), cols.len());
    for (r, &i) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            m.set(r, j, c[i]);
        }
    }
    Ok(m)
}

/// Frame rows touched by any sample of `set` (inputs and targets).
pub fn rows_of_samples(frame: &EventFrame, set: &SupervisedSet) -> Vec<usize> {
    let mut rows = BTreeSet::new();
    for m in &set.meta {
        let first = m.anchor - Days::new(set.n_in as u64);
        for d in 0..(set.n_in + set.n_out) as u64 {
            if let Some(i) = frame.find(crate::frame::FrameKey::new(first + Days::new(d), m.region)) {
                rows.insert(i);
            }
        }
    }
    rows.into_iter().collect()
}

/// The `n_in` feature rows of `region` ending at `as_of` (inclusive).
pub fn window_ending(
    features: &EventFrame,
    names: &[String],
    region: i64,
    as_of: NaiveDate,
    n_in: usize,
) -> Result<Matrix> {
    let cols: Vec<&[f64]> = names.iter().map(|n| features.column(n)).collect::<Result<_>>()?;
    let mut m = Matrix::zeros(n_in, names.len());
    for t in 0..n_in {
        let date = as_of - Days::new((n_in - 1 - t) as u64);
        let row = features
            .find(crate::frame::FrameKey::new(date, region))
            .ok_or_else(|| {
                Error::Window(format!(
                    "region {region} has no data for {date}; forecasting as of {as_of} needs {n_in} consecutive days"
                ))
            })?;
        for (j, c) in cols.iter().enumerate() {
            m.set(t, j, c[row]);
        }
    }
    Ok(m)
}
