//! Outage and weather CSV parsing, and the per-(date, region) aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{parse_field, EventFrame, FrameKey, TARGET};

pub const OUTAGE_HEADER: [&str; 4] = ["date", "region_code", "outage_count", "cause"];
pub const WEATHER_HEADER: [&str; 9] = [
    "date",
    "region_code",
    "wind_speed",
    "wind_gust",
    "wind_bearing",
    "cloud_cover",
    "snow_cover",
    "thunderstorm",
    "rainfall",
];

/// Weather columns carried into the frame, in schema order.
pub const WEATHER_FEATURES: [&str; 7] = [
    "wind_speed",
    "wind_gust",
    "wind_bearing",
    "cloud_cover",
    "snow_cover",
    "thunderstorm",
    "rainfall",
];

/// 1 where a row's weather was imputed from the region mean.
pub const IMPUTED_FLAG: &str = "weather_imputed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Weather,
    Animal,
    CarPole,
    Unique,
    NonOutage,
    Unknown,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Weather => "weather",
            Cause::Animal => "animal",
            Cause::CarPole => "car_pole",
            Cause::Unique => "unique",
            Cause::NonOutage => "non_outage",
            Cause::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Cause {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "weather" => Cause::Weather,
            "animal" => Cause::Animal,
            "car_pole" => Cause::CarPole,
            "unique" => Cause::Unique,
            "non_outage" => Cause::NonOutage,
            "unknown" => Cause::Unknown,
            other => return Err(format!("unknown cause `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageRecord {
    pub date: NaiveDate,
    pub region_code: i64,
    pub outage_count: u64,
    pub cause: Option<Cause>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub region_code: i64,
    pub wind_speed: f64,
    pub wind_gust: f64,
    pub wind_bearing: f64,
    pub cloud_cover: f64,
    pub snow_cover: f64,
    pub thunderstorm: bool,
    pub rainfall: f64,
}

impl WeatherRecord {
    /// Values in [`WEATHER_FEATURES`] order.
    pub fn features(&self) -> [f64; 7] {
        [
            self.wind_speed,
            self.wind_gust,
            self.wind_bearing,
            self.cloud_cover,
            self.snow_cover,
            if self.thunderstorm { 1.0 } else { 0.0 },
            self.rainfall,
        ]
    }
}

/// Accepts ISO `YYYY-MM-DD` and US `MM/DD/YYYY`.
pub fn parse_date(raw: &str, line: usize, column: &str) -> Result<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(raw, "%m/%d/%Y"))
        .map_err(|_| Error::Parse {
            line,
            column: column.to_string(),
            message: format!("`{raw}` is not a date"),
        })
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Format(format!(
            "missing header row, expected `{}`",
            expected.join(",")
        )));
    }
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Format(format!(
            "header `{}` does not match `{}`",
            found.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn validation(line: usize, column: &str, message: String) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        message,
    }
}

pub fn read_outages<R: Read>(reader: R) -> Result<Vec<OutageRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(&mut rdr, &OUTAGE_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != OUTAGE_HEADER.len() {
            return Err(validation(
                line,
                "*",
                format!("expected {} fields, found {}", OUTAGE_HEADER.len(), rec.len()),
            ));
        }
        let count: i64 = parse_field(&rec[2], line, "outage_count")?;
        if count < 0 {
            return Err(validation(line, "outage_count", format!("negative count {count}")));
        }
        let cause = match rec[3].trim() {
            "" => None,
            c => Some(c.parse::<Cause>().map_err(|m| validation(line, "cause", m))?),
        };
        out.push(OutageRecord {
            date: parse_date(&rec[0], line, "date")?,
            region_code: parse_field(&rec[1], line, "region_code")?,
            outage_count: count as u64,
            cause,
        });
    }
    Ok(out)
}

pub fn parse_outage_csv(path: &Path) -> Result<Vec<OutageRecord>> {
    read_outages(std::fs::File::open(path)?)
}

pub fn write_outages<W: Write>(records: &[OutageRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OUTAGE_HEADER)?;
    for r in records {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.region_code.to_string(),
            r.outage_count.to_string(),
            r.cause.map(Cause::as_str).unwrap_or("").to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_flag(raw: &str, line: usize) -> Result<bool> {
    match raw.trim() {
        "1" | "true" | "True" | "TRUE" => Ok(true),
        "0" | "false" | "False" | "FALSE" => Ok(false),
        other => Err(validation(
            line,
            "thunderstorm",
            format!("`{other}` is not a 0/1 flag"),
        )),
    }
}

pub fn read_weather<R: Read>(reader: R) -> Result<Vec<WeatherRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    check_header(&mut rdr, &WEATHER_HEADER)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != WEATHER_HEADER.len() {
            return Err(validation(
                line,
                "*",
                format!("expected {} fields, found {}", WEATHER_HEADER.len(), rec.len()),
            ));
        }
        let real = |idx: usize| -> Result<f64> {
            let v: f64 = parse_field(&rec[idx], line, WEATHER_HEADER[idx])?;
            if !v.is_finite() {
                return Err(validation(line, WEATHER_HEADER[idx], "value is not finite".into()));
            }
            Ok(v)
        };
        let record = WeatherRecord {
            date: parse_date(&rec[0], line, "date")?,
            region_code: parse_field(&rec[1], line, "region_code")?,
            wind_speed: real(2)?,
            wind_gust: real(3)?,
            wind_bearing: real(4)?,
            cloud_cover: real(5)?,
            snow_cover: real(6)?,
            thunderstorm: parse_flag(&rec[7], line)?,
            rainfall: real(8)?,
        };
        validate_weather(&record, line)?;
        out.push(record);
    }
    Ok(out)
}

fn validate_weather(r: &WeatherRecord, line: usize) -> Result<()> {
    let checks: [(&str, f64, bool); 6] = [
        ("wind_speed", r.wind_speed, r.wind_speed >= 0.0),
        ("wind_gust", r.wind_gust, r.wind_gust >= 0.0),
        ("wind_bearing", r.wind_bearing, (0.0..360.0).contains(&r.wind_bearing)),
        ("cloud_cover", r.cloud_cover, (0.0..=1.0).contains(&r.cloud_cover)),
        ("snow_cover", r.snow_cover, r.snow_cover >= 0.0),
        ("rainfall", r.rainfall, r.rainfall >= 0.0),
    ];
    for (name, value, ok) in checks {
        if !ok {
            return Err(validation(line, name, format!("value {value} out of range")));
        }
    }
    Ok(())
}

pub fn parse_weather_csv(path: &Path) -> Result<Vec<WeatherRecord>> {
    read_weather(std::fs::File::open(path)?)
}

pub fn write_weather<W: Write>(records: &[WeatherRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(WEATHER_HEADER)?;
    for r in records {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.region_code.to_string(),
            format!("{}", r.wind_speed),
            format!("{}", r.wind_gust),
            format!("{}", r.wind_bearing),
            format!("{}", r.cloud_cover),
            format!("{}", r.snow_cover),
            if r.thunderstorm { "1" } else { "0" }.to_string(),
            format!("{}", r.rainfall),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Groups both record sets by (date, region).
///
/// Outage counts are summed; weather features are averaged except
/// `thunderstorm`, which takes the maximum. Weather-only keys become
/// explicit zero-outage rows. Outage-only keys get the region's mean weather
/// (global mean if the region has no weather at all) with [`IMPUTED_FLAG`] = 1.
pub fn aggregate_by_date_region(
    outages: &[OutageRecord],
    weather: &[WeatherRecord],
) -> Result<EventFrame> {
    let mut counts: BTreeMap<FrameKey, f64> = BTreeMap::new();
    for o in outages {
        *counts.entry(FrameKey::new(o.date, o.region_code)).or_insert(0.0) += o.outage_count as f64;
    }
    // per key: feature sums (thunderstorm slot holds the max) and row count
    let mut sums: BTreeMap<FrameKey, ([f64; 7], usize)> = BTreeMap::new();
    for w in weather {
        let entry = sums
            .entry(FrameKey::new(w.date, w.region_code))
            .or_insert(([0.0; 7], 0));
        for (j, v) in w.features().iter().enumerate() {
            if j == 5 {
                entry.0[j] = entry.0[j].max(*v);
            } else {
                entry.0[j] += v;
            }
        }
        entry.1 += 1;
    }
    let weather_by_key: BTreeMap<FrameKey, [f64; 7]> = sums
        .into_iter()
        .map(|(k, (mut s, n))| {
            for (j, v) in s.iter_mut().enumerate() {
                if j != 5 {
                    *v /= n as f64;
                }
            }
            (k, s)
        })
        .collect();

    if !counts.keys().any(|k| weather_by_key.contains_key(k)) {
        return Err(Error::EmptyJoin(format!(
            "{} outage keys and {} weather keys share no (date, region)",
            counts.len(),
            weather_by_key.len()
        )));
    }

    let region_means = region_means(weather_by_key.iter().map(|(k, v)| (k.region, v)));
    let global_mean = mean_rows(weather_by_key.values());

    let all_keys: BTreeSet<FrameKey> = counts.keys().chain(weather_by_key.keys()).copied().collect();
    let keys: Vec<FrameKey> = all_keys.into_iter().collect();
    let mut feature_cols: Vec<Vec<f64>> = (0..7).map(|_| Vec::with_capacity(keys.len())).collect();
    let mut flag = Vec::with_capacity(keys.len());
    let mut y = Vec::with_capacity(keys.len());
    for k in &keys {
        y.push(counts.get(k).copied().unwrap_or(0.0));
        let (row, imputed) = match weather_by_key.get(k) {
            Some(v) => (*v, 0.0),
            None => (*region_means.get(&k.region).unwrap_or(&global_mean), 1.0),
        };
        for (col, v) in feature_cols.iter_mut().zip(row) {
            col.push(v);
        }
        flag.push(imputed);
    }
    let mut columns: BTreeMap<String, Vec<f64>> = WEATHER_FEATURES
        .iter()
        .map(|s| s.to_string())
        .zip(feature_cols)
        .collect();
    columns.insert(IMPUTED_FLAG.to_string(), flag);
    columns.insert(TARGET.to_string(), y);
    EventFrame::from_parts(keys, columns)
}

fn region_means<'a>(rows: impl Iterator<Item = (i64, &'a [f64; 7])>) -> BTreeMap<i64, [f64; 7]> {
    let mut acc: BTreeMap<i64, ([f64; 7], usize)> = BTreeMap::new();
    for (region, v) in rows {
        let e = acc.entry(region).or_insert(([0.0; 7], 0));
        for (s, x) in e.0.iter_mut().zip(v) {
            *s += x;
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(r, (mut s, n))| {
            s.iter_mut().for_each(|v| *v /= n as f64);
            (r, s)
        })
        .collect()
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64; 7]>) -> [f64; 7] {
    let mut s = [0.0; 7];
    let mut n = 0usize;
    for v in rows {
        for (a, x) in s.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    if n > 0 {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    s
}

/// Flag column appended by [`merge_frames`] for base rows without a match.
pub const MERGE_FLAG: &str = "merge_imputed";

/// Left join of `agg` onto `base` by key.
///
/// Every `agg` column is appended as `<name><suffix>`. Unmatched base rows get
/// the region mean of that column over matched agg rows (global mean, or 0
/// when `agg` is empty) and [`MERGE_FLAG`] = 1. Row count of `base` is kept.
pub fn merge_frames(base: &EventFrame, agg: &EventFrame, suffix: &str) -> Result<EventFrame> {
    let mut out = base.clone();
    let agg_names: Vec<String> = agg.column_names().map(str::to_string).collect();
    for name in &agg_names {
        let new_name = format!("{name}{suffix}");
        if base.has_column(&new_name) || new_name == MERGE_FLAG {
            return Err(Error::Schema(format!(
                "merged column `{new_name}` collides with an existing column"
            )));
        }
    }
    let matches: Vec<Option<usize>> = base.keys().iter().map(|k| agg.find(*k)).collect();
    for name in &agg_names {
        let src = agg.column(name)?;
        let mut per_region: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        let (mut total, mut count) = (0.0, 0usize);
        for (k, v) in agg.keys().iter().zip(src) {
            let e = per_region.entry(k.region).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
            total += v;
            count += 1;
        }
        let global = if count > 0 { total / count as f64 } else { 0.0 };
        let values = base
            .keys()
            .iter()
            .zip(&matches)
            .map(|(k, m)| match m {
                Some(j) => src[*j],
                None => per_region
                    .get(&k.region)
                    .map(|(s, n)| s / *n as f64)
                    .unwrap_or(global),
            })
            .collect();
        out.set_column(format!("{name}{suffix}"), values)?;
    }
    out.set_column(
        MERGE_FLAG,
        matches.iter().map(|m| if m.is_some() { 0.0 } else { 1.0 }).collect(),
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OUT_HDR: &str = "date,region_code,outage_count,cause\n";
    const W_HDR: &str =
        "date,region_code,wind_speed,wind_gust,wind_bearing,cloud_cover,snow_cover,thunderstorm,rainfall\n";

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn weather(date: &str, region: i64, wind: f64) -> WeatherRecord {
        WeatherRecord {
            date: d(date),
            region_code: region,
            wind_speed: wind,
            wind_gust: wind + 2.0,
            wind_bearing: 90.0,
            cloud_cover: 0.5,
            snow_cover: 0.0,
            thunderstorm: false,
            rainfall: 1.0,
        }
    }

    fn outage(date: &str, region: i64, n: u64) -> OutageRecord {
        OutageRecord {
            date: d(date),
            region_code: region,
            outage_count: n,
            cause: Some(Cause::Weather),
        }
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_outages(OUT_HDR.as_bytes()).unwrap().is_empty());
        assert!(read_weather(W_HDR.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parses_peak_row() {
        let text = format!("{OUT_HDR}2021-02-23,112,36,unknown\n");
        let recs = read_outages(text.as_bytes()).unwrap();
        assert_eq!(
            recs,
            vec![OutageRecord {
                date: d("2021-02-23"),
                region_code: 112,
                outage_count: 36,
                cause: Some(Cause::Unknown)
            }]
        );
        let us = format!("{OUT_HDR}02/23/2021,112,36,\n");
        assert_eq!(read_outages(us.as_bytes()).unwrap()[0].date, d("2021-02-23"));
    }

    #[test]
    fn negative_count_names_line_and_column() {
        let text = format!("{OUT_HDR}2021-02-23,112,5,weather\n2021-02-24,112,-1,weather\n");
        match read_outages(text.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "outage_count");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_format_error() {
        assert!(matches!(
            read_outages("date,region,count,cause\n".as_bytes()),
            Err(Error::Format(_))
        ));
        assert!(matches!(read_outages("".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn weather_validation() {
        let bad = format!("{W_HDR}2021-01-01,80,5,7,10,1.2,0,0,0\n");
        match read_weather(bad.as_bytes()) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, "cloud_cover"),
            other => panic!("unexpected {other:?}"),
        }
        let ok = format!("{W_HDR}2021-01-01,80,5,7,10,0.2,0,1,0\n");
        assert!(read_weather(ok.as_bytes()).unwrap()[0].thunderstorm);
        let flag = format!("{W_HDR}2021-01-01,80,5,7,10,0.2,0,2,0\n");
        assert!(read_weather(flag.as_bytes()).is_err());
    }

    #[test]
    fn weather_write_then_parse_is_identity() {
        let mut r = weather("2021-03-09", 84, 1.0 / 3.0);
        r.thunderstorm = true;
        r.wind_bearing = 359.999_999_9;
        let mut buf = Vec::new();
        write_weather(&[r.clone()], &mut buf).unwrap();
        assert_eq!(read_weather(buf.as_slice()).unwrap(), vec![r]);
    }

    #[test]
    fn aggregation_rules() {
        let outages = vec![
            outage("2021-01-01", 80, 5),
            outage("2021-01-01", 80, 3),
            outage("2021-01-03", 80, 2),
        ];
        let weather = vec![
            weather("2021-01-01", 80, 10.0),
            weather("2021-01-01", 80, 14.0),
            weather("2021-01-02", 80, 6.0),
        ];
        let f = aggregate_by_date_region(&outages, &weather).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.target().unwrap(), &[8.0, 0.0, 2.0]);
        let wind = f.column("wind_speed").unwrap();
        assert_eq!(wind[0], 12.0);
        assert_eq!(wind[1], 6.0);
        // imputed: region mean over aggregated keys (12 + 6) / 2
        assert_eq!(wind[2], 9.0);
        assert_eq!(f.column(IMPUTED_FLAG).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn thunderstorm_takes_max() {
        let mut a = weather("2021-01-01", 80, 1.0);
        a.thunderstorm = true;
        let b = weather("2021-01-01", 80, 1.0);
        let f = aggregate_by_date_region(&[outage("2021-01-01", 80, 1)], &[b, a]).unwrap();
        assert_eq!(f.column("thunderstorm").unwrap(), &[1.0]);
    }

    #[test]
    fn disjoint_keys_error() {
        let r = aggregate_by_date_region(
            &[outage("2021-01-01", 80, 1)],
            &[weather("2021-01-02", 80, 1.0)],
        );
        assert!(matches!(r, Err(Error::EmptyJoin(_))));
    }

    fn small_frame(keys: &[(&str, i64)], col: &str, vals: &[f64]) -> EventFrame {
        let mut c = BTreeMap::new();
        c.insert(col.to_string(), vals.to_vec());
        EventFrame::from_parts(keys.iter().map(|(s, r)| FrameKey::new(d(s), *r)).collect(), c)
            .unwrap()
    }

    #[test]
    fn merge_full_and_partial() {
        let keys = [("2021-01-01", 1), ("2021-01-02", 1), ("2021-01-01", 2)];
        let base = small_frame(&keys, "y", &[1.0, 2.0, 3.0]);
        let agg = small_frame(&keys, "wind", &[4.0, 5.0, 6.0]);
        let m = merge_frames(&base, &agg, "_agg").unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.column("wind_agg").unwrap().len(), 3);
        assert_eq!(m.column(MERGE_FLAG).unwrap(), &[0.0; 3]);

        let partial = small_frame(&[("2021-01-01", 1), ("2021-01-02", 1)], "wind", &[4.0, 6.0]);
        let m = merge_frames(&base, &partial, "_agg").unwrap();
        // rows sorted by (date, region): (01-01,1), (01-01,2), (01-02,1)
        assert_eq!(m.column("wind_agg").unwrap(), &[4.0, 5.0, 6.0]);
        assert_eq!(m.column(MERGE_FLAG).unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn merge_with_empty_agg_keeps_base() {
        let base = small_frame(&[("2021-01-01", 1)], "y", &[1.0]);
        let empty = small_frame(&[], "wind", &[]);
        let m = merge_frames(&base, &empty, "_agg").unwrap();
        assert_eq!(m.target().unwrap(), base.target().unwrap());
        assert_eq!(m.column(MERGE_FLAG).unwrap(), &[1.0]);
    }

    #[test]
    fn merge_name_collision() {
        let base = small_frame(&[("2021-01-01", 1)], "y", &[1.0]);
        assert!(matches!(merge_frames(&base, &base, ""), Err(Error::Schema(_))));
    }
}
