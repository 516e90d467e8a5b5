//! Browser bindings for three interactive views: Moran's I on an editable
//! grid, Gaussian smoothing of a noisy series, and one synthetic region's
//! outage rate with sampled counts.
//!
//! Each view has a plain Rust function (tested natively) and a thin
//! `wasm_bindgen` wrapper that turns errors into JS exceptions.

use chrono::Days;
use gridcast::numerics::RngState;
use gridcast::preprocess::smooth_series;
use gridcast::spatial::{morans_significance, weights_from_coordinates, MoranResult, RegionPoint, WeightScheme};
use gridcast::synth::{generate, SynthSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn grid(side: usize) -> Vec<RegionPoint> {
    (0..side * side)
        .map(|i| RegionPoint {
            region: i as i64,
            x: (i % side) as f64,
            y: (i / side) as f64,
        })
        .collect()
}

fn scheme_named(name: &str) -> Result<WeightScheme, String> {
    match name {
        "rook" => Ok(WeightScheme::GridRook),
        "knn4" => Ok(WeightScheme::Knn { k: 4 }),
        "inverse" => Ok(WeightScheme::InverseDistance { cutoff: 2.5 }),
        other => Err(format!("unknown weight scheme `{other}` (rook, knn4, inverse)")),
    }
}

/// Moran's I of row-major cell values on a `side × side` grid.
pub fn grid_moran(values: &[f64], side: usize, scheme: &str, permutations: usize, seed: u64) -> Result<MoranResult, String> {
    if values.len() != side * side {
        return Err(format!("{} values for a {side}×{side} grid", values.len()));
    }
    let w = weights_from_coordinates(&grid(side), scheme_named(scheme)?, true).map_err(|e| e.to_string())?;
    morans_significance(values, &w, permutations, seed).map_err(|e| e.to_string())
}

/// A slow sinusoid plus uniform noise in [-noise, noise].
pub fn noisy_sine(n: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngState::new(seed);
    (0..n)
        .map(|t| (t as f64 * std::f64::consts::TAU / 60.0).sin() + rng.uniform(-noise, noise))
        .collect()
}

pub fn smooth(values: &[f64], window: usize, sigma: f64) -> Result<Vec<f64>, String> {
    smooth_series(values, window, sigma).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSeries {
    pub dates: Vec<String>,
    pub rate: Vec<f64>,
    pub count: Vec<u64>,
    pub mean_rate: f64,
}

/// True rate and sampled counts for one synthetic region.
pub fn synth_region(days: usize, bias: f64, seed: u64) -> Result<RegionSeries, String> {
    let spec = SynthSpec {
        n_regions: 1,
        n_days: days,
        bias,
        seed,
        ..SynthSpec::default()
    };
    let data = generate(&spec).map_err(|e| e.to_string())?;
    let region = spec.region_code(0);
    let mut out = RegionSeries {
        dates: Vec::with_capacity(days),
        rate: Vec::with_capacity(days),
        count: vec![0; days],
        mean_rate: data.truth.mean_rate(),
    };
    for d in 0..days {
        let date = spec.start_date + Days::new(d as u64);
        out.dates.push(date.format("%Y-%m-%d").to_string());
        out.rate.push(data.truth.get(date, region).ok_or_else(|| format!("no rate for {date}"))?);
    }
    for o in &data.outages {
        out.count[(o.date - spec.start_date).num_days() as usize] += o.outage_count;
    }
    Ok(out)
}

fn js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON-encoded Moran result.
#[wasm_bindgen(js_name = gridMoran)]
pub fn grid_moran_js(values: &[f64], side: usize, scheme: &str, permutations: usize, seed: u32) -> Result<String, JsError> {
    js(grid_moran(values, side, scheme, permutations, seed as u64))
}

#[wasm_bindgen(js_name = noisySine)]
pub fn noisy_sine_js(n: usize, noise: f64, seed: u32) -> Vec<f64> {
    noisy_sine(n, noise, seed as u64)
}

#[wasm_bindgen(js_name = smooth)]
pub fn smooth_js(values: &[f64], window: usize, sigma: f64) -> Result<Vec<f64>, JsError> {
    smooth(values, window, sigma).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`RegionSeries`].
#[wasm_bindgen(js_name = synthRegion)]
pub fn synth_region_js(days: usize, bias: f64, seed: u32) -> Result<String, JsError> {
    js(synth_region(days, bias, seed as u64))
}
