//! Point-forecast error metrics and per-region reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(x: &[f64], xhat: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Parameter("metrics need at least one point".into()));
    }
    if x.len() != xhat.len() {
        return Err(Error::Shape(format!(
            "{} actuals vs {} predictions",
            x.len(),
            xhat.len()
        )));
    }
    Ok(())
}

pub fn mae(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    Ok(x.iter().zip(xhat).map(|(a, p)| (p - a).abs()).sum::<f64>() / x.len() as f64)
}

pub fn rmse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    Ok((x.iter().zip(xhat).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / x.len() as f64).sqrt())
}

/// Absolute percentage errors over non-zero actuals, plus the number excluded.
fn apes(x: &[f64], xhat: &[f64]) -> Result<(Vec<f64>, usize)> {
    check(x, xhat)?;
    let ape: Vec<f64> = x
        .iter()
        .zip(xhat)
        .filter(|(a, _)| **a != 0.0)
        .map(|(a, p)| ((a - p) / a).abs())
        .collect();
    if ape.is_empty() {
        return Err(Error::UndefinedMetric("every actual value is zero".into()));
    }
    let excluded = x.len() - ape.len();
    Ok((ape, excluded))
}

/// Mean absolute percentage error in percent; zero actuals are skipped and counted.
pub fn mape(x: &[f64], xhat: &[f64]) -> Result<(f64, usize)> {
    let (ape, excluded) = apes(x, xhat)?;
    Ok((100.0 * ape.iter().sum::<f64>() / ape.len() as f64, excluded))
}

/// Median absolute percentage error in percent.
pub fn mdape(x: &[f64], xhat: &[f64]) -> Result<(f64, usize)> {
    let (mut ape, excluded) = apes(x, xhat)?;
    ape.sort_by(f64::total_cmp);
    let n = ape.len();
    let median = if n % 2 == 1 {
        ape[n / 2]
    } else {
        0.5 * (ape[n / 2 - 1] + ape[n / 2])
    };
    Ok((100.0 * median, excluded))
}

/// (2/n) Σ |(x − x̂)/(x + x̂)| in percent, range [0, 200]. Terms with
/// x + x̂ = 0 contribute 0.
pub fn smape(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    let s: f64 = x
        .iter()
        .zip(xhat)
        .map(|(a, p)| {
            let denom = a + p;
            if denom == 0.0 {
                0.0
            } else {
                ((a - p) / denom).abs()
            }
        })
        .sum();
    Ok(200.0 * s / x.len() as f64)
}

pub fn r2(x: &[f64], xhat: &[f64]) -> Result<f64> {
    check(x, xhat)?;
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ss_tot: f64 = x.iter().map(|a| (a - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedMetric("actuals have zero variance".into()));
    }
    let ss_res: f64 = x.iter().zip(xhat).map(|(a, p)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub region_code: i64,
    pub mae: Option<f64>,
    pub mape_pct: Option<f64>,
    pub smape_pct: Option<f64>,
    pub mdape_pct: Option<f64>,
    pub rmse: Option<f64>,
    pub r2: Option<f64>,
    pub n_points: usize,
    pub n_excluded_zero_actual: usize,
    /// Why a metric is null, keyed by metric name.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub null_reasons: std::collections::BTreeMap<String, String>,
}

pub const METRIC_NAMES: [&str; 6] = ["mae", "mape_pct", "smape_pct", "mdape_pct", "rmse", "r2"];

impl MetricsReport {
    pub fn compute(region_code: i64, x: &[f64], xhat: &[f64]) -> Result<Self> {
        check(x, xhat)?;
        let mut reasons = std::collections::BTreeMap::new();
        let mut keep = |name: &str, r: Result<f64>| match r {
            Ok(v) => Some(v),
            Err(e) => {
                reasons.insert(name.to_string(), e.to_string());
                None
            }
        };
        let mape_r = mape(x, xhat);
        let excluded = mape_r.as_ref().map(|m| m.1).unwrap_or(x.len());
        let report = Self {
            region_code,
            mae: keep("mae", mae(x, xhat)),
            mape_pct: keep("mape_pct", mape_r.map(|m| m.0)),
            smape_pct: keep("smape_pct", smape(x, xhat)),
            mdape_pct: keep("mdape_pct", mdape(x, xhat).map(|m| m.0)),
            rmse: keep("rmse", rmse(x, xhat)),
            r2: keep("r2", r2(x, xhat)),
            n_points: x.len(),
            n_excluded_zero_actual: excluded,
            null_reasons: reasons,
        };
        Ok(report)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mae" => self.mae,
            "mape_pct" => self.mape_pct,
            "smape_pct" => self.smape_pct,
            "mdape_pct" => self.mdape_pct,
            "rmse" => self.rmse,
            "r2" => self.r2,
            _ => None,
        }
    }
}

/// Mean and population standard deviation of each metric across regions,
/// over the regions where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_regions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalReport {
    pub regions: Vec<MetricsReport>,
    pub aggregate: Vec<MetricAggregate>,
}

/// One region's aligned actuals and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub region_code: i64,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn report_per_region(series: &[RegionSeries]) -> Result<RegionalReport> {
    if series.is_empty() {
        return Err(Error::Parameter("report needs at least one region".into()));
    }
    let regions = series
        .iter()
        .map(|s| MetricsReport::compute(s.region_code, &s.actual, &s.predicted))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = METRIC_NAMES
        .iter()
        .map(|name| {
            let vals: Vec<f64> = regions.iter().filter_map(|r| r.get(name)).collect();
            let (mean, std) = if vals.is_empty() {
                (None, None)
            } else {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
                (Some(m), Some(v.sqrt()))
            };
            MetricAggregate {
                metric: name.to_string(),
                mean,
                std,
                n_regions: vals.len(),
            }
        })
        .collect();
    Ok(RegionalReport { regions, aggregate })
}

impl RegionalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format `region,metric,value` rows; aggregate rows use region
    /// `mean` and `std`. Null metrics are written as empty values.
    pub fn write_plot_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["region", "metric", "value"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.regions {
            for name in METRIC_NAMES {
                w.write_record([r.region_code.to_string(), name.to_string(), fmt(r.get(name))])?;
            }
        }
        for a in &self.aggregate {
            w.write_record(["mean".to_string(), a.metric.clone(), fmt(a.mean)])?;
            w.write_record(["std".to_string(), a.metric.clone(), fmt(a.std)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mae_rmse_r2_examples() {
        let x = [1.0, 2.0, 3.0];
        let p = [1.0, 3.0, 5.0];
        assert_eq!(mae(&x, &x).unwrap(), 0.0);
        assert_eq!(mae(&x, &p).unwrap(), 1.0);
        assert_eq!(mae(&[4.0], &[1.0]).unwrap(), 3.0);
        assert!((rmse(&x, &p).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[4.0], &[1.0]).unwrap(), 3.0);
        assert_eq!(r2(&x, &x).unwrap(), 1.0);
        assert_eq!(r2(&x, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!((r2(&x, &p).unwrap() + 1.5).abs() < 1e-15);
        assert!(mae(&[], &[]).is_err());
        assert!(matches!(r2(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn percentage_examples() {
        assert_eq!(mape(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        let (m, _) = mape(&[1.0, 2.0, 4.0], &[2.0, 1.0, 3.0]).unwrap();
        assert!((m - 175.0 / 3.0).abs() < 1e-12);
        assert_eq!(mape(&[0.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 1));
        assert!(matches!(mape(&[0.0, 0.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));

        assert_eq!(smape(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert_eq!(smape(&[2.0], &[0.0]).unwrap(), 200.0);
        assert_eq!(smape(&[3.0], &[1.0]).unwrap(), 100.0);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);

        // APEs 10%, 50%, 20%
        let (md, _) = mdape(&[10.0, 10.0, 10.0], &[11.0, 5.0, 12.0]).unwrap();
        assert!((md - 20.0).abs() < 1e-12);
        let (md2, _) = mdape(&[10.0, 10.0], &[11.0, 13.0]).unwrap();
        assert!((md2 - 20.0).abs() < 1e-12);
        assert_eq!(mdape(&[3.0], &[3.0]).unwrap().0, 0.0);
    }

    #[test]
    fn regional_aggregate() {
        let one = report_per_region(&[RegionSeries {
            region_code: 1,
            actual: vec![1.0, 2.0],
            predicted: vec![2.0, 2.0],
        }])
        .unwrap();
        assert!(one.aggregate.iter().all(|a| a.std.is_none_or(|s| s == 0.0)));

        // region errors constant 2 and 4 give RMSE 2 and 4
        let two = report_per_region(&[
            RegionSeries { region_code: 1, actual: vec![1.0, 3.0], predicted: vec![3.0, 5.0] },
            RegionSeries { region_code: 2, actual: vec![1.0, 3.0], predicted: vec![5.0, 7.0] },
        ])
        .unwrap();
        let rmse_agg = two.aggregate.iter().find(|a| a.metric == "rmse").unwrap();
        assert_eq!(rmse_agg.mean, Some(3.0));
        assert_eq!(rmse_agg.std, Some(1.0));

        let zero = report_per_region(&[RegionSeries {
            region_code: 9,
            actual: vec![0.0, 0.0],
            predicted: vec![1.0, 0.5],
        }])
        .unwrap();
        let r = &zero.regions[0];
        assert!(r.mape_pct.is_none() && r.mdape_pct.is_none());
        assert!(r.rmse.is_some());
        assert!(r.null_reasons.contains_key("mape_pct"));
        assert_eq!(r.n_excluded_zero_actual, 2);
    }

    #[test]
    fn plot_csv_shape() {
        let rep = report_per_region(&[RegionSeries {
            region_code: 112,
            actual: vec![36.0, 10.0],
            predicted: vec![30.0, 12.0],
        }])
        .unwrap();
        let mut buf = Vec::new();
        rep.write_plot_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("region,metric,value\n112,mae,4\n"));
        assert_eq!(text.lines().count(), 1 + 6 + 12);
    }

    proptest! {
        #[test]
        fn metric_invariants(
            pairs in proptest::collection::vec((0.1f64..50.0, 0.0f64..50.0), 1..40),
            a in 0.1f64..10.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assert!(rmse(&x, &p).unwrap() >= mae(&x, &p).unwrap() - 1e-12);
            prop_assert_eq!(smape(&x, &p).unwrap(), smape(&p, &x).unwrap());
            let s = smape(&x, &p).unwrap();
            prop_assert!((0.0..=200.0).contains(&s));
            let ax: Vec<f64> = x.iter().map(|v| v * a).collect();
            let ap: Vec<f64> = p.iter().map(|v| v * a).collect();
            prop_assert!((mape(&ax, &ap).unwrap().0 - mape(&x, &p).unwrap().0).abs() < 1e-9);
            prop_assert!((mdape(&ax, &ap).unwrap().0 - mdape(&x, &p).unwrap().0).abs() < 1e-9);
            let mut rx = x.clone();
            let mut rp = p.clone();
            rx.reverse();
            rp.reverse();
            prop_assert!((mae(&rx, &rp).unwrap() - mae(&x, &p).unwrap()).abs() < 1e-12);
            prop_assert_eq!(mdape(&rx, &rp).unwrap(), mdape(&x, &p).unwrap());
        }
    }
}
