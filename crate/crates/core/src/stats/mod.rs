//! Experiment readouts and behavioral analyses over per-unit metric tables.

mod alignment;
mod behavior;
mod lift;
pub mod plot;
mod trend;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

pub use alignment::{
    alignment_analysis, AlignmentReport, AlignmentRow, ExperimentSummary, SIGNIFICANCE,
};
pub use behavior::{
    percentile, uptick_day, utility_by_view_index, utility_share_trend, CohortCurve, CohortCurves,
    ShareTrend,
};
pub use lift::{
    percent_lift, split_by_arm, variance_ratio_table, variance_ratios_from_lifts, LiftEstimate,
    VarianceRatioRow,
};
pub use trend::{isotonic_decreasing, weighted_slope, SlopeEstimate};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{arm} group has {n} values; at least 2 are required")]
    TooFew { arm: &'static str, n: usize },
    #[error("undefined percent lift: control mean is 0")]
    ZeroControlMean,
    #[error("metric {metric:?} does not cover the baseline roster; missing units: {missing:?}, extra units: {extra:?}")]
    RosterMismatch {
        metric: String,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("units without an arm assignment: {0:?}")]
    Unassigned(Vec<String>),
    #[error("baseline metric {0:?} not present")]
    MissingBaseline(String),
    #[error("percentile must be in (0, 100), got {0}")]
    Percentile(f64),
    #[error("horizon must be >= 1 day")]
    Horizon,
    #[error("no experiments supplied")]
    NoExperiments,
    #[error("no cohorts requested")]
    NoCohorts,
    #[error("metric csv: {0}")]
    Csv(String),
}

/// One named per-unit metric column.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub name: String,
    pub values: BTreeMap<String, f64>,
}

impl MetricTable {
    pub fn new(name: impl Into<String>, values: BTreeMap<String, f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Reads a `unit_id,<metric>...` CSV; each value column becomes a table.
pub fn read_metric_tables<R: Read>(r: R) -> Result<Vec<MetricTable>, StatsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| StatsError::Csv(e.to_string()))?
        .clone();
    let unit_col = headers
        .iter()
        .position(|h| h == "unit_id")
        .ok_or_else(|| StatsError::Csv("missing unit_id column".into()))?;
    let skip = |h: &str| h == "unit_id" || h == "unit_kind";
    let mut tables: Vec<MetricTable> = headers
        .iter()
        .filter(|h| !skip(h))
        .map(|h| MetricTable::new(h, BTreeMap::new()))
        .collect();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| StatsError::Csv(e.to_string()))?;
        let unit = rec[unit_col].to_string();
        let mut k = 0;
        for (h, field) in headers.iter().zip(rec.iter()) {
            if skip(h) {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                StatsError::Csv(format!("line {}: bad value {field:?} in column {h}", n + 2))
            })?;
            tables[k].values.insert(unit.clone(), v);
            k += 1;
        }
    }
    Ok(tables)
}

/// Writes tables sharing one roster as `unit_id,<name>...`.
pub fn write_metric_tables<W: Write>(w: W, tables: &[MetricTable]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["unit_id".to_string()];
    header.extend(tables.iter().map(|t| t.name.clone()));
    wtr.write_record(&header)?;
    if let Some(first) = tables.first() {
        for unit in first.values.keys() {
            let mut rec = vec![unit.clone()];
            rec.extend(tables.iter().map(|t| {
                t.values
                    .get(unit)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            }));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Two-sided standard normal p-value.
pub(crate) fn normal_p_value(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::standard();
    (2.0 * n.cdf(-z.abs())).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_csv_round_trip() {
        let a = MetricTable::new(
            "booking",
            BTreeMap::from([("u1".into(), 1.0), ("u2".into(), 0.0)]),
        );
        let b = MetricTable::new(
            "utility",
            BTreeMap::from([("u1".into(), 0.25), ("u2".into(), -0.5)]),
        );
        let mut buf = Vec::new();
        write_metric_tables(&mut buf, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_metric_tables(buf.as_slice()).unwrap(), vec![a, b]);
    }

    #[test]
    fn p_value_of_zero_is_one() {
        assert_eq!(normal_p_value(0.0), 1.0);
        assert!((normal_p_value(1.959963984540054) - 0.05).abs() < 1e-9);
    }
}
