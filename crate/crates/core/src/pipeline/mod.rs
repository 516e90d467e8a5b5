//! End-to-end commands: synthesize, screen, train, forecast, evaluate.
//!
//! Every command writes under the configured workdir and holds a lock file
//! there while it runs. Errors are tagged with the stage that raised them.

mod config;
mod features;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

pub use config::{
    ModelKnobs, MoranConfig, PathsConfig, PipelineConfig, PreprocessConfig, CONFIG_SCHEMA_VERSION,
};
pub use features::{rows_of_samples, window_ending, FeatureTransform, DENOISED, PASSTHROUGH, SCALED_TARGET};

use crate::error::{Error, Result, StageContext};
use crate::frame::{EventFrame, TARGET};
use crate::ingest::{aggregate_by_date_region, parse_outage_csv, parse_weather_csv, OutageRecord, WeatherRecord};
use crate::metrics::{report_per_region, RegionSeries, RegionalReport};
use crate::model::{
    checkpoint_load, checkpoint_save, evaluate_loss, forecast, init_params, sha256_hex, train, Checkpoint,
    Mode, Seq2SeqModel, TrainHistory, TrainOutcome,
};
use crate::numerics::{Matrix, RngState};
use crate::preprocess::{
    add_temporal_features, complete_calendar, denoise, quantile_filter, series_to_supervised, train_test_split,
    PcaModel, ScalerParams, SupervisedSet,
};
use crate::spatial::{morans_significance, weights_from_coordinates, MoranResult};
use crate::synth::{generate, read_coords, write_coords, TRUTH_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const FORECAST_FILE: &str = "forecast.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const METRICS_PLOT_FILE: &str = "metrics_plot.csv";
pub const MORAN_FILE: &str = "moran.json";
pub const SCALER_FILE: &str = "scaler.json";
pub const PCA_FILE: &str = "pca.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOCK_FILE: &str = ".lock";

/// Exclusive hold on a workdir, released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(format!(
                "{} exists; another command is using this workdir",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

// ---------------------------------------------------------------- synth

/// Writes the synthetic outage, weather, coordinate and truth CSVs.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let _lock = WorkdirLock::acquire(&cfg.paths.workdir).stage("synth")?;
    let data = generate(&cfg.synth_spec()).stage("synth")?;
    let p = &cfg.paths;
    let files = vec![
        p.resolve(&p.outage_csv),
        p.resolve(&p.weather_csv),
        p.output(TRUTH_FILE),
        p.resolve(&p.coords_csv),
    ];
    let write = || -> Result<()> {
        let mut buf = Vec::new();
        crate::ingest::write_outages(&data.outages, &mut buf)?;
        write_file(&files[0], &buf)?;
        buf.clear();
        crate::ingest::write_weather(&data.weather, &mut buf)?;
        write_file(&files[1], &buf)?;
        buf.clear();
        data.truth.write_csv(&mut buf)?;
        write_file(&files[2], &buf)?;
        buf.clear();
        write_coords(&data.coords, &mut buf)?;
        write_file(&files[3], &buf)?;
        Ok(())
    };
    write().stage("synth")?;
    Ok(files)
}

// ---------------------------------------------------------------- moran

/// Moran's I of each region's total outage count.
pub fn cmd_moran(cfg: &PipelineConfig) -> Result<MoranResult> {
    let _lock = WorkdirLock::acquire(&cfg.paths.workdir).stage("moran")?;
    let p = &cfg.paths;
    let coords_path = p.resolve(&p.coords_csv);
    let coords = with_path(&coords_path, std::fs::File::open(&coords_path).map_err(Error::from))
        .and_then(read_coords)
        .stage("ingest")?;
    let outage_path = p.resolve(&p.outage_csv);
    let outages = with_path(&outage_path, parse_outage_csv(&outage_path)).stage("ingest")?;
    let mut totals: BTreeMap<i64, f64> = coords.iter().map(|c| (c.region, 0.0)).collect();
    for o in &outages {
        if let Some(t) = totals.get_mut(&o.region_code) {
            *t += o.outage_count as f64;
        }
    }
    let values: Vec<f64> = coords.iter().map(|c| totals[&c.region]).collect();
    let m = &cfg.moran;
    let result = weights_from_coordinates(&coords, m.scheme, m.row_standardize)
        .and_then(|w| morans_significance(&values, &w, m.permutations, cfg.seed))
        .stage("moran")?;
    write_file(&p.output(MORAN_FILE), serde_json::to_string_pretty(&result)?.as_bytes()).stage("moran")?;
    Ok(result)
}

// ---------------------------------------------------------------- preprocess

pub fn load_inputs(paths: &PathsConfig) -> Result<(Vec<OutageRecord>, Vec<WeatherRecord>)> {
    let outage_path = paths.resolve(&paths.outage_csv);
    let weather_path = paths.resolve(&paths.weather_csv);
    let outages = with_path(&outage_path, parse_outage_csv(&outage_path))?;
    let weather = with_path(&weather_path, parse_weather_csv(&weather_path))?;
    Ok((outages, weather))
}

/// Joined daily frame with calendar gaps filled, temporal codes and smoothed weather.
pub fn base_frame(outages: &[OutageRecord], weather: &[WeatherRecord], pre: &PreprocessConfig) -> Result<EventFrame> {
    let frame = aggregate_by_date_region(outages, weather)?;
    let frame = complete_calendar(&frame)?;
    let frame = add_temporal_features(&frame)?;
    denoise(&frame, &DENOISED, pre.denoise_window, pre.denoise_sigma)
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Unfiltered base frame; forecasting windows come from here.
    pub base: EventFrame,
    pub transform: FeatureTransform,
    pub train: SupervisedSet,
    pub test: SupervisedSet,
}

/// Filters on the count, fits scaler and PCA on training rows, and windows
/// the transformed features into chronological train/test sets.
pub fn prepare_dataset(base: EventFrame, pre: &PreprocessConfig) -> Result<PreparedData> {
    let filtered = quantile_filter(&base, TARGET, pre.q_low, pre.q_high)?;
    let probe = series_to_supervised(&filtered, &[TARGET], TARGET, pre.n_in, pre.n_out)?;
    let (probe_train, _) = train_test_split(&probe, pre.test_fraction)?;
    let train_rows = rows_of_samples(&filtered, &probe_train);
    let transform = FeatureTransform::fit(&filtered, &train_rows, pre.pca_threshold)?;
    let features = transform.apply(&filtered)?;
    let names = transform.feature_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let set = series_to_supervised(&features, &name_refs, TARGET, pre.n_in, pre.n_out)?;
    let (train, test) = train_test_split(&set, pre.test_fraction)?;
    Ok(PreparedData {
        base,
        transform,
        train,
        test,
    })
}

// ---------------------------------------------------------------- train

/// Initializes and trains a model on prepared data.
pub fn train_prepared(prepared: &PreparedData, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let pre = &cfg.preprocess;
    let model_cfg = cfg
        .model
        .model_config(prepared.train.n_features(), pre.n_in, pre.n_out);
    let model = init_params(&model_cfg, cfg.seed)?;
    train(model, &prepared.train, &cfg.train_config())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_test: usize,
    pub features: Vec<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_loss: f64,
    pub test_mae: f64,
}

/// Mean |rate − count| over every test target.
pub fn rate_mae(model: &Seq2SeqModel, set: &SupervisedSet) -> Result<f64> {
    let windows: Vec<&Matrix> = set.inputs.iter().collect();
    let fwd = crate::model::forward_batch(model, &windows, None, 0.0, Mode::Eval, &mut RngState::new(0))?;
    let preds = fwd.flat_rates();
    let targets = set.targets.concat();
    Ok(preds.iter().zip(&targets).map(|(p, y)| (p - y).abs()).sum::<f64>() / preds.len() as f64)
}

fn embedded_config(cfg: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        paths: PathsConfig::default(),
        ..cfg.clone()
    }
}

/// ingest → preprocess → train; persists checkpoint, scaler, PCA, history and config.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let p = &cfg.paths;
    let _lock = WorkdirLock::acquire(&p.workdir).stage("train")?;
    let (outages, weather) = load_inputs(p).stage("ingest")?;
    let prepared = base_frame(&outages, &weather, &cfg.preprocess)
        .and_then(|b| prepare_dataset(b, &cfg.preprocess))
        .stage("preprocess")?;
    let outcome = train_prepared(&prepared, cfg).stage("train")?;

    let scaler_json = prepared.transform.scaler.to_json()?;
    let pca_json = prepared.transform.pca.to_json()?;
    let extra = serde_json::json!({
        "pipeline": embedded_config(cfg),
        "features": prepared.transform.feature_names(),
        "scaler_sha256": sha256_hex(scaler_json.as_bytes()),
        "pca_sha256": sha256_hex(pca_json.as_bytes()),
    });
    let persist = || -> Result<()> {
        write_file(&p.output(SCALER_FILE), scaler_json.as_bytes())?;
        write_file(&p.output(PCA_FILE), pca_json.as_bytes())?;
        write_file(&p.output(CONFIG_FILE), cfg.to_json()?.as_bytes())?;
        let mut hist = Vec::new();
        outcome.history.write_csv(&mut hist)?;
        write_file(&p.output(HISTORY_FILE), &hist)?;
        checkpoint_save(&outcome.model, &outcome.adam, &extra, &p.output(CHECKPOINT_FILE))
    };
    persist().stage("checkpoint")?;

    let test_loss = evaluate_loss(&outcome.model, &prepared.test, cfg.train.loss_mode).stage("evaluate")?;
    let test_mae = rate_mae(&outcome.model, &prepared.test).stage("evaluate")?;
    Ok(TrainSummary {
        n_train: prepared.train.len(),
        n_test: prepared.test.len(),
        features: prepared.transform.feature_names(),
        epochs_run: outcome.history.epochs.len(),
        best_epoch: outcome.history.best_epoch,
        best_val_loss: outcome.history.best_val_loss().unwrap_or(f64::NAN),
        test_loss,
        test_mae,
    })
}

pub fn read_history(path: &Path) -> Result<TrainHistory> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut h = TrainHistory::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        h.epochs.push(crate::model::EpochRecord {
            epoch: crate::frame::parse_field(&row[0], line, "epoch")?,
            train_loss: crate::frame::parse_field(&row[1], line, "train_loss")?,
            val_loss: crate::frame::parse_field(&row[2], line, "val_loss")?,
        });
    }
    Ok(h)
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub region_code: i64,
    pub horizon_date: NaiveDate,
    pub horizon: usize,
    pub rate: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub region_code: i64,
    pub horizon_date: NaiveDate,
    pub horizon: usize,
    pub rate: f64,
    pub count: u64,
    pub actual: f64,
}

fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const FORECAST_HEADER: [&str; 5] = ["region_code", "horizon_date", "horizon", "rate", "count"];

pub fn write_forecast_csv<W: Write>(rows: &[ForecastRow], writer: W) -> Result<()> {
    write_rows(rows, writer, &FORECAST_HEADER)
}

pub fn read_forecast_csv(path: &Path) -> Result<Vec<ForecastRow>> {
    let mut rdr = with_path(path, csv::Reader::from_path(path).map_err(Error::from))?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != FORECAST_HEADER {
        return Err(Error::Format(format!("{}: forecast header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::Parse {
            line: i + 2,
            column: "?".into(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    pub as_of: NaiveDate,
    pub rows: Vec<ForecastRow>,
    pub comparison: Vec<ComparisonRow>,
}

fn load_transform(ck: &Checkpoint, workdir: &Path) -> Result<FeatureTransform> {
    let check = |file: &str, key: &str| -> Result<String> {
        let text = read_text(&workdir.join(file))?;
        let expected = ck.extra.get(key).and_then(|v| v.as_str()).unwrap_or_default();
        if sha256_hex(text.as_bytes()) != expected {
            return Err(Error::Integrity(format!("{file} does not match the checkpoint's {key}")));
        }
        Ok(text)
    };
    let scaler = ScalerParams::from_json(&check(SCALER_FILE, "scaler_sha256")?)?;
    let pca = PcaModel::from_json(&check(PCA_FILE, "pca_sha256")?)?;
    Ok(FeatureTransform { scaler, pca })
}

/// Forecasts `horizon` days after `as_of` (default: last date in the data)
/// for every region with `n_in` days of history ending at `as_of`.
pub fn cmd_forecast(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    as_of: Option<NaiveDate>,
    horizon: Option<usize>,
) -> Result<ForecastOutput> {
    let p = &cfg.paths;
    let _lock = WorkdirLock::acquire(&p.workdir).stage("forecast")?;
    let ck_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| p.output(CHECKPOINT_FILE));
    let ck = with_path(&ck_path, checkpoint_load(&ck_path)).stage("checkpoint")?;
    let trained: PipelineConfig = ck
        .extra
        .get("pipeline")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(Error::from)
        .and_then(|c| c.ok_or_else(|| Error::Format("checkpoint has no pipeline config".into())))
        .stage("checkpoint")?;
    let transform = load_transform(&ck, &p.workdir).stage("checkpoint")?;
    let horizon = horizon.unwrap_or(ck.model.config.n_out);

    let (outages, weather) = load_inputs(p).stage("ingest")?;
    let base = base_frame(&outages, &weather, &trained.preprocess).stage("preprocess")?;
    let features = transform.apply(&base).stage("preprocess")?;
    let names = transform.feature_names();
    let as_of = match as_of {
        Some(d) => d,
        None => base
            .date_range()
            .map(|r| r.1)
            .ok_or_else(|| Error::Window("no data to forecast from".into()))
            .stage("forecast")?,
    };

    let n_in = ck.model.config.n_in;
    let mut rows = Vec::new();
    let mut comparison = Vec::new();
    let mut skipped = Vec::new();
    for region in features.regions() {
        let window = match window_ending(&features, &names, region, as_of, n_in) {
            Ok(w) => w,
            Err(Error::Window(msg)) => {
                log::warn!("{msg}");
                skipped.push(region);
                continue;
            }
            Err(e) => return Err(e).stage("forecast"),
        };
        for step in forecast(&ck.model, &window, horizon, None).stage("forecast")? {
            let date = as_of + Days::new(step.horizon as u64);
            let row = ForecastRow {
                region_code: region,
                horizon_date: date,
                horizon: step.horizon,
                rate: step.rate,
                count: step.count,
            };
            if let Some(i) = base.find(crate::frame::FrameKey::new(date, region)) {
                comparison.push(ComparisonRow {
                    region_code: region,
                    horizon_date: date,
                    horizon: step.horizon,
                    rate: step.rate,
                    count: step.count,
                    actual: base.target()?[i],
                });
            }
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(Error::Window(format!(
            "no region has {n_in} consecutive days of history ending {as_of}"
        )))
        .stage("forecast");
    }

    let persist = || -> Result<()> {
        let mut buf = Vec::new();
        write_forecast_csv(&rows, &mut buf)?;
        write_file(&p.output(FORECAST_FILE), &buf)?;
        let cmp_path = p.output(COMPARISON_FILE);
        if comparison.is_empty() {
            if cmp_path.exists() {
                std::fs::remove_file(&cmp_path)?;
            }
        } else {
            let mut buf = Vec::new();
            write_rows(
                &comparison,
                &mut buf,
                &["region_code", "horizon_date", "horizon", "rate", "count", "actual"],
            )?;
            write_file(&cmp_path, &buf)?;
        }
        Ok(())
    };
    persist().stage("forecast")?;
    Ok(ForecastOutput {
        as_of,
        rows,
        comparison,
    })
}

// ---------------------------------------------------------------- evaluate

/// Reads `region_code`, a date column (`horizon_date` or `date`) and an
/// actual-count column (`actual`, `y` or `outage_count`), summing duplicates.
pub fn read_actuals(path: &Path) -> Result<BTreeMap<(i64, NaiveDate), f64>> {
    let mut rdr = with_path(path, csv::Reader::from_path(path).map_err(Error::from))?;
    let header = rdr.headers()?.clone();
    let find = |names: &[&str]| header.iter().position(|h| names.contains(&h));
    let (Some(ri), Some(di), Some(ai)) = (
        find(&["region_code"]),
        find(&["horizon_date", "date"]),
        find(&["actual", "y", "outage_count"]),
    ) else {
        return Err(Error::Format(format!(
            "{}: actuals need region_code, date and actual columns, header is {header:?}",
            path.display()
        )));
    };
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let region: i64 = crate::frame::parse_field(&row[ri], line, "region_code")?;
        let date = crate::ingest::parse_date(&row[di], line, &header[di])?;
        let actual: f64 = crate::frame::parse_field(&row[ai], line, &header[ai])?;
        *out.entry((region, date)).or_insert(0.0) += actual;
    }
    Ok(out)
}

/// Per-region and aggregate metrics of forecast rates against actual counts.
pub fn evaluate_rows(rows: &[ForecastRow], actuals: &BTreeMap<(i64, NaiveDate), f64>) -> Result<RegionalReport> {
    let missing: Vec<String> = rows
        .iter()
        .filter(|r| !actuals.contains_key(&(r.region_code, r.horizon_date)))
        .map(|r| format!("{}@{}", r.region_code, r.horizon_date))
        .collect();
    if !missing.is_empty() {
        let shown = missing.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
        return Err(Error::Alignment(format!(
            "{} forecast keys have no actual: {shown}{}",
            missing.len(),
            if missing.len() > 10 { ", …" } else { "" }
        )));
    }
    let mut by_region: BTreeMap<i64, RegionSeries> = BTreeMap::new();
    for r in rows {
        let s = by_region.entry(r.region_code).or_insert_with(|| RegionSeries {
            region_code: r.region_code,
            actual: Vec::new(),
            predicted: Vec::new(),
        });
        s.actual.push(actuals[&(r.region_code, r.horizon_date)]);
        s.predicted.push(r.rate);
    }
    report_per_region(&by_region.into_values().collect::<Vec<_>>())
}

pub fn cmd_evaluate(cfg: &PipelineConfig, forecast_csv: Option<&Path>, actuals_csv: &Path) -> Result<RegionalReport> {
    let p = &cfg.paths;
    let _lock = WorkdirLock::acquire(&p.workdir).stage("evaluate")?;
    let fpath = forecast_csv.map(Path::to_path_buf).unwrap_or_else(|| p.output(FORECAST_FILE));
    let rows = read_forecast_csv(&fpath).stage("ingest")?;
    let actuals = read_actuals(actuals_csv).stage("ingest")?;
    let report = evaluate_rows(&rows, &actuals).stage("evaluate")?;
    let persist = || -> Result<()> {
        write_file(&p.output(METRICS_FILE), report.to_json()?.as_bytes())?;
        let mut buf = Vec::new();
        report.write_plot_csv(&mut buf)?;
        write_file(&p.output(METRICS_PLOT_FILE), &buf)
    };
    persist().stage("evaluate")?;
    Ok(report)
}
