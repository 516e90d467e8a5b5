//! The per-(date, region) table every pipeline stage reads and writes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Name of the outage-count column.
pub const TARGET: &str = "y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub date: NaiveDate,
    pub region: i64,
}

impl FrameKey {
    pub fn new(date: NaiveDate, region: i64) -> Self {
        Self { date, region }
    }
}

/// Rows sorted by (date, region) with named real-valued columns.
///
/// Column storage is a `BTreeMap`, so iteration order is the lexicographic
/// order used by the canonical CSV encoding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventFrame {
    keys: Vec<FrameKey>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl EventFrame {
    /// Builds a frame, sorting rows by key. Keys must be unique.
    pub fn from_parts(keys: Vec<FrameKey>, columns: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        for (name, col) in &columns {
            if col.len() != keys.len() {
                return Err(Error::Shape(format!(
                    "column `{name}` has {} values for {} keys",
                    col.len(),
                    keys.len()
                )));
            }
        }
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by_key(|&i| keys[i]);
        if let Some(w) = order.windows(2).find(|w| keys[w[0]] == keys[w[1]]) {
            let k = keys[w[0]];
            return Err(Error::Schema(format!(
                "duplicate key ({}, {})",
                k.date, k.region
            )));
        }
        let frame = Self { keys, columns };
        Ok(frame.select_rows(&order))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[FrameKey] {
        &self.keys
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))
    }

    pub fn column_mut(&mut self, name: &str) -> Result<&mut Vec<f64>> {
        self.columns
            .get_mut(name)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))
    }

    /// Inserts or replaces a column.
    pub fn set_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.keys.len() {
            return Err(Error::Shape(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.keys.len()
            )));
        }
        self.columns.insert(name, values);
        Ok(())
    }

    pub fn remove_column(&mut self, name: &str) -> Option<Vec<f64>> {
        self.columns.remove(name)
    }

    pub fn target(&self) -> Result<&[f64]> {
        self.column(TARGET)
    }

    pub fn value(&self, column: &str, row: usize) -> Result<f64> {
        Ok(self.column(column)?[row])
    }

    /// New frame with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EventFrame {
        EventFrame {
            keys: rows.iter().map(|&i| self.keys[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), rows.iter().map(|&i| c[i]).collect()))
                .collect(),
        }
    }

    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> EventFrame {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select_rows(&rows)
    }

    pub fn regions(&self) -> Vec<i64> {
        let mut r: Vec<i64> = self.keys.iter().map(|k| k.region).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Row indices per region, each in date order.
    pub fn region_rows(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut out: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, k) in self.keys.iter().enumerate() {
            out.entry(k.region).or_default().push(i);
        }
        out
    }

    pub fn find(&self, key: FrameKey) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    pub fn date_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((self.keys.first()?.date, self.keys.last()?.date))
    }

    /// Canonical CSV: `date,region_code` then columns in lexicographic order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "region_code".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for (i, k) in self.keys.iter().enumerate() {
            let mut rec = vec![k.date.format("%Y-%m-%d").to_string(), k.region.to_string()];
            rec.extend(self.columns.values().map(|c| format!("{}", c[i])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<EventFrame> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "date" || &headers[1] != "region_code" {
            return Err(Error::Format(
                "frame CSV must start with `date,region_code`".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut keys = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            keys.push(FrameKey::new(
                crate::ingest::parse_date(&rec[0], line, "date")?,
                parse_field(&rec[1], line, "region_code")?,
            ));
            for (j, name) in names.iter().enumerate() {
                cols[j].push(parse_field(&rec[j + 2], line, name)?);
            }
        }
        EventFrame::from_parts(keys, names.into_iter().zip(cols).collect())
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| Error::Parse {
        line,
        column: column.to_string(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn rows_are_sorted_and_unique() {
        let keys = vec![
            FrameKey::new(d("2021-01-02"), 1),
            FrameKey::new(d("2021-01-01"), 2),
            FrameKey::new(d("2021-01-01"), 1),
        ];
        let mut cols = BTreeMap::new();
        cols.insert(TARGET.to_string(), vec![3.0, 2.0, 1.0]);
        let f = EventFrame::from_parts(keys.clone(), cols.clone()).unwrap();
        assert_eq!(f.target().unwrap(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.region_rows()[&1], vec![0, 2]);

        let mut dup = keys;
        dup.push(FrameKey::new(d("2021-01-01"), 1));
        cols.insert(TARGET.to_string(), vec![0.0; 4]);
        assert!(matches!(EventFrame::from_parts(dup, cols), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let keys = vec![FrameKey::new(d("2021-02-23"), 112), FrameKey::new(d("2021-02-24"), 112)];
        let mut cols = BTreeMap::new();
        cols.insert("wind_speed".to_string(), vec![0.1 + 0.2, 1.0 / 3.0]);
        cols.insert(TARGET.to_string(), vec![36.0, 0.0]);
        let f = EventFrame::from_parts(keys, cols).unwrap();
        let text = f.to_csv_string().unwrap();
        assert!(text.starts_with("date,region_code,wind_speed,y\n"));
        let back = EventFrame::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_csv_string().unwrap(), text);
    }
}
