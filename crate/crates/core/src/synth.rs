//! Synthetic outage data with known Poisson rates.
//!
//! Each region carries seven latent weather processes `x_j(t)`: an AR(1)
//! series plus an annual sinusoid. The daily rate is
//! `λ = exp(w·x + b + offset_region)` and the count is `y ~ Poisson(λ)`.
//! The latent values are mapped monotonically into the observed weather
//! columns (`thunderstorm` is `x_5 > 1`), optionally with measurement noise.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::EventFrame;
use crate::ingest::{
    aggregate_by_date_region, write_outages, write_weather, Cause, OutageRecord, WeatherRecord, WEATHER_FEATURES,
};
use crate::model::loss_poisson_nll;
use crate::numerics::{sample_poisson, RngState};
use crate::spatial::RegionPoint;

pub const FIRST_REGION_CODE: i64 = 79;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialPattern {
    /// No region effect.
    Random,
    /// Regions in the left half of the grid get `+strength` on the log rate.
    Clustered { strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_regions: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    /// One weight per latent weather process, in [`WEATHER_FEATURES`] order.
    pub weights: [f64; 7],
    pub bias: f64,
    /// AR(1) coefficient per process; the innovation is scaled so the AR part has unit variance.
    pub ar_coefficients: [f64; 7],
    /// Annual sinusoid amplitude per process.
    pub seasonal_amplitudes: [f64; 7],
    /// Std of Gaussian noise added to the observed (not latent) weather values.
    pub noise_std: f64,
    pub lambda_max: f64,
    pub spatial_pattern: SpatialPattern,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_regions: 10,
            n_days: 1500,
            start_date: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            weights: [0.35, 0.25, 0.0, 0.1, 0.15, 0.0, 0.15],
            bias: 0.2,
            ar_coefficients: [0.97; 7],
            seasonal_amplitudes: [0.5, 0.4, 0.0, 0.3, 0.8, 0.5, 0.3],
            noise_std: 0.0,
            lambda_max: 100.0,
            spatial_pattern: SpatialPattern::Random,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_regions == 0 || self.n_days == 0 {
            return Err(Error::Spec("n_regions and n_days must be positive".into()));
        }
        if let Some(phi) = self.ar_coefficients.iter().find(|p| !(p.abs() < 1.0)) {
            return Err(Error::Spec(format!("AR coefficient {phi} is not stationary")));
        }
        if !(self.noise_std >= 0.0) || !(self.lambda_max > 0.0) {
            return Err(Error::Spec("noise_std must be ≥ 0 and lambda_max > 0".into()));
        }
        if self.weights.iter().chain(&self.seasonal_amplitudes).any(|v| !v.is_finite()) || !self.bias.is_finite() {
            return Err(Error::Spec("weights, bias and amplitudes must be finite".into()));
        }
        Ok(())
    }

    /// Columns of the square-ish grid the regions sit on.
    pub fn grid_columns(&self) -> usize {
        (self.n_regions as f64).sqrt().ceil() as usize
    }

    pub fn region_code(&self, index: usize) -> i64 {
        FIRST_REGION_CODE + index as i64
    }

    pub fn coordinates(&self) -> Vec<RegionPoint> {
        let cols = self.grid_columns();
        (0..self.n_regions)
            .map(|r| RegionPoint {
                region: self.region_code(r),
                x: (r % cols) as f64,
                y: (r / cols) as f64,
            })
            .collect()
    }

    fn region_offset(&self, index: usize) -> f64 {
        match self.spatial_pattern {
            SpatialPattern::Random => 0.0,
            SpatialPattern::Clustered { strength } => {
                let cols = self.grid_columns();
                if 2 * (index % cols) < cols {
                    strength
                } else {
                    0.0
                }
            }
        }
    }
}

/// `exp(w·x + b)`.
pub fn rate(weights: &[f64], bias: f64, x: &[f64]) -> f64 {
    (crate::numerics::dot(weights, x) + bias).exp()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthRecord {
    pub rates: BTreeMap<(NaiveDate, i64), f64>,
}

impl TruthRecord {
    pub fn get(&self, date: NaiveDate, region: i64) -> Option<f64> {
        self.rates.get(&(date, region)).copied()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn mean_rate(&self) -> f64 {
        self.rates.values().sum::<f64>() / self.rates.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "region_code", "lambda"])?;
        for ((d, r), l) in &self.rates {
            w.write_record([d.to_string(), r.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["date", "region_code", "lambda"] {
            return Err(Error::Format(format!("truth header {header:?} is not date,region_code,lambda")));
        }
        let mut rates = BTreeMap::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let line = i + 2;
            let date = crate::ingest::parse_date(&row[0], line, "date")?;
            let region = crate::frame::parse_field::<i64>(&row[1], line, "region_code")?;
            let lambda = crate::frame::parse_field::<f64>(&row[2], line, "lambda")?;
            rates.insert((date, region), lambda);
        }
        Ok(Self { rates })
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub outages: Vec<OutageRecord>,
    pub weather: Vec<WeatherRecord>,
    pub truth: TruthRecord,
    pub coords: Vec<RegionPoint>,
}

impl SynthData {
    /// The aggregated frame ingest would build from the written files.
    pub fn frame(&self) -> Result<EventFrame> {
        aggregate_by_date_region(&self.outages, &self.weather)
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::numerics::sigmoid(x)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Observed weather columns for one latent vector.
fn observe(date: NaiveDate, region: i64, x: &[f64; 7], noise: &[f64; 7]) -> WeatherRecord {
    WeatherRecord {
        date,
        region_code: region,
        wind_speed: (10.0 + 3.0 * x[0] + noise[0]).max(0.0),
        wind_gust: (16.0 + 5.0 * x[1] + noise[1]).max(0.0),
        wind_bearing: (180.0 + 90.0 * x[2].tanh() + noise[2]).rem_euclid(360.0),
        cloud_cover: (sigmoid(x[3]) + 0.1 * noise[3]).clamp(0.0, 1.0),
        snow_cover: (softplus(x[4]) + noise[4]).max(0.0),
        thunderstorm: x[5] > 1.0,
        rainfall: (softplus(x[6]) + noise[6]).max(0.0),
    }
}

fn dominant_weight(weights: &[f64; 7], x: &[f64; 7]) -> String {
    let j = (0..7)
        .max_by(|&a, &b| (weights[a] * x[a]).abs().total_cmp(&(weights[b] * x[b]).abs()))
        .expect("seven weights");
    format!("weights[{j}] ({}) = {}", WEATHER_FEATURES[j], weights[j])
}

/// Draws the full dataset. Regions use independent derived streams.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let root = RngState::new(spec.seed);
    let mut outages = Vec::new();
    let mut weather = Vec::with_capacity(spec.n_regions * spec.n_days);
    let mut truth = TruthRecord::default();
    for r in 0..spec.n_regions {
        let region = spec.region_code(r);
        let mut rng = root.derive(r as u64);
        let phases: Vec<f64> = (0..7).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
        let mut ar = [0.0; 7];
        ar.iter_mut().for_each(|a| *a = rng.standard_normal());
        let offset = spec.region_offset(r);
        for day in 0..spec.n_days {
            let date = spec.start_date + Days::new(day as u64);
            if day > 0 {
                for (j, a) in ar.iter_mut().enumerate() {
                    let phi = spec.ar_coefficients[j];
                    *a = phi * *a + (1.0 - phi * phi).sqrt() * rng.standard_normal();
                }
            }
            let season = std::f64::consts::TAU * date.ordinal0() as f64 / 365.25;
            let mut x = [0.0; 7];
            for j in 0..7 {
                x[j] = ar[j] + spec.seasonal_amplitudes[j] * (season + phases[j]).sin();
            }
            let lambda = rate(&spec.weights, spec.bias + offset, &x);
            if !lambda.is_finite() || lambda > spec.lambda_max {
                return Err(Error::Spec(format!(
                    "rate {lambda} exceeds lambda_max {} on {date} region {region}; largest term from {}",
                    spec.lambda_max,
                    dominant_weight(&spec.weights, &x)
                )));
            }
            let mut noise = [0.0; 7];
            if spec.noise_std > 0.0 {
                noise.iter_mut().for_each(|v| *v = spec.noise_std * rng.standard_normal());
            }
            weather.push(observe(date, region, &x, &noise));
            truth.rates.insert((date, region), lambda);
            let y = sample_poisson(&mut rng, lambda)?;
            if y > 0 {
                outages.push(OutageRecord {
                    date,
                    region_code: region,
                    outage_count: y,
                    cause: Some(Cause::Weather),
                });
            }
        }
    }
    Ok(SynthData {
        outages,
        weather,
        truth,
        coords: spec.coordinates(),
    })
}

pub fn write_coords<W: Write>(coords: &[RegionPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["region_code", "x", "y"])?;
    for p in coords {
        w.write_record([p.region.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coords<R: std::io::Read>(reader: R) -> Result<Vec<RegionPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["region_code", "x", "y"] {
        return Err(Error::Format(format!("coordinate header {header:?} is not region_code,x,y")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        out.push(RegionPoint {
            region: crate::frame::parse_field(&row[0], line, "region_code")?,
            x: crate::frame::parse_field(&row[1], line, "x")?,
            y: crate::frame::parse_field(&row[2], line, "y")?,
        });
    }
    Ok(out)
}

pub const OUTAGES_FILE: &str = "outages.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const COORDS_FILE: &str = "coords.csv";

/// Writes outages, weather, truth and coordinates CSVs into `dir`.
pub fn write_csvs(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_outages(&data.outages, std::fs::File::create(dir.join(OUTAGES_FILE))?)?;
    write_weather(&data.weather, std::fs::File::create(dir.join(WEATHER_FILE))?)?;
    data.truth.write_csv(std::fs::File::create(dir.join(TRUTH_FILE))?)?;
    write_coords(&data.coords, std::fs::File::create(dir.join(COORDS_FILE))?)?;
    Ok(())
}

/// Mean Poisson NLL of `counts` under the true rates.
pub fn oracle_nll(rates: &[f64], counts: &[f64]) -> Result<f64> {
    if rates.len() != counts.len() {
        return Err(Error::Shape(format!("{} rates vs {} counts", rates.len(), counts.len())));
    }
    loss_poisson_nll(rates, counts)
}
