use chrono::{Datelike, NaiveDate};

use crate::error::Result;
use crate::frame::EventFrame;

pub const DAY_OF_WEEK: &str = "day_of_week";
pub const MONTH: &str = "month";
pub const SEASON: &str = "season";
pub const TEMPORAL_COLUMNS: [&str; 3] = [DAY_OF_WEEK, MONTH, SEASON];

/// Meteorological season: 0 = winter (DJF), 1 = spring, 2 = summer, 3 = fall.
pub fn season_of(month: u32) -> u32 {
    match month {
        12 | 1 | 2 => 0,
        3..=5 => 1,
        6..=8 => 2,
        _ => 3,
    }
}

pub fn temporal_codes(date: NaiveDate) -> [f64; 3] {
    [
        f64::from(date.weekday().num_days_from_monday()),
        f64::from(date.month()),
        f64::from(season_of(date.month())),
    ]
}

/// Adds (or overwrites) `day_of_week` (Monday = 0), `month` and `season`.
pub fn add_temporal_features(frame: &EventFrame) -> Result<EventFrame> {
    let mut out = frame.clone();
    let codes: Vec<[f64; 3]> = frame.keys().iter().map(|k| temporal_codes(k.date)).collect();
    for (j, name) in TEMPORAL_COLUMNS.iter().enumerate() {
        out.set_column(*name, codes.iter().map(|c| c[j]).collect())?;
    }
    Ok(out)
}
