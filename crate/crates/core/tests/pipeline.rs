use std::path::Path;

use chrono::NaiveDate;
use gridcast::error::Error;
use gridcast::ingest::{OutageRecord, WeatherRecord};
use gridcast::pipeline::*;
use gridcast::synth::TRUTH_FILE;

fn tiny(dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths.workdir = dir.to_path_buf();
    cfg.synth.n_regions = 3;
    cfg.synth.n_days = 120;
    cfg.model = ModelKnobs::compact(6, 4, 4);
    cfg.preprocess.n_in = 4;
    cfg.preprocess.n_out = 2;
    cfg.train.epochs = 2;
    cfg
}

fn trained(dir: &Path) -> PipelineConfig {
    let cfg = tiny(dir);
    cmd_synth(&cfg).unwrap();
    cmd_train(&cfg).unwrap();
    cfg
}

#[test]
fn synth_writes_all_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_synth(&tiny(dir.path())).unwrap();
    assert_eq!(files.len(), 4);
    assert!(files.iter().all(|f| f.exists()));
    assert!(dir.path().join(TRUTH_FILE).exists());
    assert!(!dir.path().join(LOCK_FILE).exists());
}

#[test]
fn missing_weather_csv_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cmd_synth(&cfg).unwrap();
    std::fs::remove_file(dir.path().join(&cfg.paths.weather_csv)).unwrap();
    let err = cmd_train(&cfg).unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("ingest stage failed"), "{msg}");
    assert!(msg.contains("weather.csv"), "{msg}");
    assert!(matches!(err.root(), Error::Io(_)));
}

#[test]
fn locked_workdir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let held = WorkdirLock::acquire(dir.path()).unwrap();
    assert!(matches!(cmd_synth(&cfg).unwrap_err().root(), Error::Locked(_)));
    drop(held);
    cmd_synth(&cfg).unwrap();
}

#[test]
fn train_writes_artifacts_and_history_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    cmd_synth(&cfg).unwrap();
    let summary = cmd_train(&cfg).unwrap();
    for f in [CHECKPOINT_FILE, HISTORY_FILE, SCALER_FILE, PCA_FILE, CONFIG_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let history = read_history(&dir.path().join(HISTORY_FILE)).unwrap();
    assert_eq!(history.epochs.len(), summary.epochs_run);
    assert!(summary.test_loss.is_finite() && summary.test_mae >= 0.0);
    assert_eq!(summary.features.len(), summary.features.iter().collect::<std::collections::BTreeSet<_>>().len());
}

#[test]
fn forecast_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let as_of = NaiveDate::from_ymd_opt(2017, 3, 1).unwrap();
    let out = cmd_forecast(&cfg, None, Some(as_of), None).unwrap();
    assert_eq!(out.rows.len(), 3 * 2);
    assert_eq!(out.comparison.len(), out.rows.len());
    assert!(dir.path().join(COMPARISON_FILE).exists());
    let written = read_forecast_csv(&dir.path().join(FORECAST_FILE)).unwrap();
    assert_eq!(written.len(), out.rows.len());
    for (a, b) in written.iter().zip(&out.rows) {
        assert_eq!((a.region_code, a.horizon_date, a.count), (b.region_code, b.horizon_date, b.count));
        assert_eq!(a.rate, b.rate);
    }

    let report = cmd_evaluate(&cfg, None, &dir.path().join(COMPARISON_FILE)).unwrap();
    assert_eq!(report.regions.len(), 3);
    assert!(dir.path().join(METRICS_FILE).exists());
    assert!(dir.path().join(METRICS_PLOT_FILE).exists());
}

#[test]
fn forecast_past_the_data_has_no_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let out = cmd_forecast(&cfg, None, None, Some(3)).unwrap();
    assert!(out.comparison.is_empty());
    assert!(!dir.path().join(COMPARISON_FILE).exists());
    assert!(out.rows.iter().all(|r| r.horizon_date > out.as_of));
}

#[test]
fn forecast_without_history_is_a_window_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let early = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let err = cmd_forecast(&cfg, None, Some(early), None).unwrap_err();
    assert!(matches!(err.root(), Error::Window(_)), "{err}");
}

#[test]
fn tampered_artifacts_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = trained(dir.path());
    let scaler = dir.path().join(SCALER_FILE);
    let text = std::fs::read_to_string(&scaler).unwrap();
    std::fs::write(&scaler, text.replacen("0", "1", 1)).unwrap();
    assert!(matches!(cmd_forecast(&cfg, None, None, None).unwrap_err().root(), Error::Integrity(_)));
    std::fs::write(&scaler, text).unwrap();

    let ck = dir.path().join(CHECKPOINT_FILE);
    let mut bytes = std::fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x10;
    std::fs::write(&ck, bytes).unwrap();
    let err = cmd_forecast(&cfg, None, None, None).unwrap_err();
    assert!(err.to_string().starts_with("checkpoint stage failed"), "{err}");
    assert!(matches!(err.root(), Error::Integrity(_)));
}

#[test]
fn evaluate_reports_null_percentages_for_all_zero_region() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let d = |day| NaiveDate::from_ymd_opt(2020, 5, day).unwrap();
    let rows = vec![
        ForecastRow { region_code: 1, horizon_date: d(1), horizon: 1, rate: 0.4, count: 0 },
        ForecastRow { region_code: 1, horizon_date: d(2), horizon: 2, rate: 0.2, count: 0 },
        ForecastRow { region_code: 2, horizon_date: d(1), horizon: 1, rate: 2.5, count: 3 },
        ForecastRow { region_code: 2, horizon_date: d(2), horizon: 2, rate: 1.5, count: 2 },
    ];
    let fpath = dir.path().join("fc.csv");
    write_forecast_csv(&rows, std::fs::File::create(&fpath).unwrap()).unwrap();
    let apath = dir.path().join("actuals.csv");
    std::fs::write(&apath, "region_code,date,y\n1,2020-05-01,0\n1,2020-05-02,0\n2,2020-05-01,2\n2,2020-05-02,2\n").unwrap();
    let report = cmd_evaluate(&cfg, Some(&fpath), &apath).unwrap();
    let zero = &report.regions[0];
    assert_eq!(zero.region_code, 1);
    assert_eq!(zero.mape_pct, None);
    assert_eq!(zero.mdape_pct, None);
    assert!(zero.null_reasons.contains_key("mape_pct"));
    assert!((zero.mae.unwrap() - 0.3).abs() < 1e-12);
    assert!((report.regions[1].mape_pct.unwrap() - 25.0).abs() < 1e-12);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
    assert!(json["regions"][0]["mape_pct"].is_null());

    std::fs::write(&apath, "region_code,date,y\n1,2020-05-01,0\n").unwrap();
    let err = cmd_evaluate(&cfg, Some(&fpath), &apath).unwrap_err();
    assert!(matches!(err.root(), Error::Alignment(_)), "{err}");
}

#[test]
fn two_regions_aggregate_independently() {
    let d = |day| NaiveDate::from_ymd_opt(2020, 1, day).unwrap();
    let outages: Vec<OutageRecord> = (1..=12)
        .flat_map(|day| {
            [(80, 2u64), (81, 5)].into_iter().map(move |(region, n)| OutageRecord {
                date: d(day),
                region_code: region,
                outage_count: n + (day % 3) as u64,
                cause: None,
            })
        })
        .collect();
    let weather: Vec<WeatherRecord> = (1..=12)
        .flat_map(|day| {
            [80, 81].into_iter().map(move |region| WeatherRecord {
                date: d(day),
                region_code: region,
                wind_speed: 3.0 + day as f64,
                wind_gust: 6.0,
                wind_bearing: 180.0,
                cloud_cover: 0.5,
                snow_cover: 0.0,
                rainfall: 0.1 * day as f64,
                thunderstorm: day % 2 == 1,
            })
        })
        .collect();
    let mut pre = PreprocessConfig::default();
    pre.q_low = 0.0;
    pre.q_high = 1.0;
    let base = base_frame(&outages, &weather, &pre).unwrap();
    assert_eq!(base.regions(), vec![80, 81]);
    assert_eq!(base.len(), 24);
    let y = base.target().unwrap();
    let r80 = base.find(gridcast::frame::FrameKey::new(d(4), 80)).unwrap();
    let r81 = base.find(gridcast::frame::FrameKey::new(d(4), 81)).unwrap();
    assert_eq!((y[r80], y[r81]), (3.0, 6.0));
}
