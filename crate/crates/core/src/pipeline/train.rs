use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{
    create_dir, fmt_opt, read_events_file, read_listings_file, read_outcomes_file, verify_input,
    write_csv, write_text, PipelineError, Result, RunManifest,
};
use crate::journey::{JourneyStore, StoreConfig, DEFAULT_LOOKBACK_DAYS};
use crate::learner::loss::mean_log_loss_prob;
use crate::learner::{
    evaluate, train_gbdt, train_logistic, Dataset, GbdtConfig, LogisticConfig, ModelReport,
    SurrogateModel,
};
use crate::stats::plot::{Chart, Mark, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Gbdt,
    Logistic,
}

impl FromStr for LearnerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gbdt" => Ok(LearnerKind::Gbdt),
            "logistic" => Ok(LearnerKind::Logistic),
            other => Err(format!(
                "unknown learner {other:?}; expected gbdt or logistic"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub events: PathBuf,
    pub outcomes: PathBuf,
    pub listings: PathBuf,
    pub learner: LearnerKind,
    pub gbdt: GbdtConfig,
    pub logistic: LogisticConfig,
    /// Fraction of users held out for the report.
    pub holdout: f64,
    pub label_horizon_days: i64,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
}

impl TrainArgs {
    pub fn new(events: PathBuf, outcomes: PathBuf, listings: PathBuf, out: PathBuf) -> Self {
        Self {
            events,
            outcomes,
            listings,
            learner: LearnerKind::Gbdt,
            gbdt: GbdtConfig::default(),
            logistic: LogisticConfig::default(),
            holdout: 0.2,
            label_horizon_days: DEFAULT_LOOKBACK_DAYS,
            seed: 0,
            out,
            force: false,
        }
    }
}

/// One row of the model report.
#[derive(Debug, Clone)]
pub struct SplitReport {
    pub split: &'static str,
    pub report: ModelReport,
    /// Log loss of predicting the training base rate everywhere.
    pub constant_log_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub manifest: RunManifest,
    pub model: SurrogateModel,
    pub reports: Vec<SplitReport>,
}

/// Deterministic per-user holdout draw.
fn held_out(seed: u64, user_id: &str, fraction: f64) -> bool {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(user_id.as_bytes());
    let d = h.finalize();
    let u = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as f64 / 2f64.powi(64);
    u < fraction
}

pub fn train(args: &TrainArgs) -> Result<TrainOutput> {
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(PipelineError::Config(format!(
            "holdout must be in [0, 1), got {}",
            args.holdout
        )));
    }
    if args.label_horizon_days < 1 {
        return Err(PipelineError::Config(
            "label horizon must be >= 1 day".into(),
        ));
    }
    let mut manifest = RunManifest::new("train", Some(args.seed));
    for p in [&args.events, &args.outcomes, &args.listings] {
        verify_input(p, args.force)?;
        manifest.input(p)?;
    }
    let store = JourneyStore::ingest(
        read_events_file(&args.events)?,
        read_outcomes_file(&args.outcomes)?,
        read_listings_file(&args.listings)?,
        StoreConfig::default(),
    );
    let set = store.build_training_set(args.label_horizon_days);
    let hold: Vec<bool> = set
        .rows
        .iter()
        .map(|r| held_out(args.seed, &r.pair.user_id, args.holdout))
        .collect();
    let train_data = set.data.filter(|i| !hold[i]);
    let holdout_data = set.data.filter(|i| hold[i]);
    let mut model = match args.learner {
        LearnerKind::Gbdt => train_gbdt(
            &train_data,
            &GbdtConfig {
                seed: args.seed,
                ..args.gbdt.clone()
            },
        )?,
        LearnerKind::Logistic => train_logistic(&train_data, &args.logistic)?,
    };
    model.metadata.train_window = set.time_range();

    let base_rate = train_data.positives() as f64 / train_data.len() as f64;
    let mut reports = Vec::new();
    for (split, data) in [("train", &train_data), ("holdout", &holdout_data)] {
        if data.is_empty() {
            continue;
        }
        reports.push(SplitReport {
            split,
            report: evaluate(&model, data)?,
            constant_log_loss: constant_loss(data, base_rate),
        });
    }

    create_dir(&args.out)?;
    let mut json = model.to_json();
    json.push('\n');
    write_text(&args.out, "model.json", &json)?;
    write_report(&args.out, &reports)?;
    write_text(
        &args.out,
        "calibration.svg",
        &calibration_chart(&reports).to_svg(),
    )?;

    manifest.param("learner", format!("{:?}", args.learner).to_lowercase());
    manifest.param("holdout", args.holdout);
    manifest.param("label_horizon_days", args.label_horizon_days);
    manifest.param("examples", set.data.len());
    manifest.param(
        "ingest",
        serde_json::to_string(store.report()).expect("report serializes"),
    );
    let outputs = [
        "model.json",
        "model_report.csv",
        "calibration.csv",
        "calibration.svg",
    ]
    .map(String::from);
    let manifest = manifest.finish(&args.out, &outputs)?;
    Ok(TrainOutput {
        manifest,
        model,
        reports,
    })
}

fn constant_loss(data: &Dataset, p: f64) -> f64 {
    mean_log_loss_prob(&vec![p; data.len()], data.labels())
}

fn write_report(dir: &std::path::Path, reports: &[SplitReport]) -> Result<()> {
    let header = [
        "split",
        "n",
        "n_positive",
        "log_loss",
        "constant_log_loss",
        "auc",
        "mean_predicted",
        "base_rate",
        "calibration_intercept",
        "calibration_slope",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|s| {
            let r = &s.report;
            vec![
                s.split.to_string(),
                r.n.to_string(),
                r.n_positive.to_string(),
                r.log_loss.to_string(),
                s.constant_log_loss.to_string(),
                fmt_opt(r.auc),
                r.mean_predicted.to_string(),
                r.base_rate.to_string(),
                fmt_opt(r.calibration_intercept),
                fmt_opt(r.calibration_slope),
            ]
        })
        .collect();
    write_csv(dir, "model_report.csv", &header, &rows)?;
    let mut bins = Vec::new();
    for s in reports {
        for (i, b) in s.report.calibration.iter().enumerate() {
            bins.push(vec![
                s.split.to_string(),
                i.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.count.to_string(),
                fmt_opt(b.mean_predicted),
                fmt_opt(b.observed_rate),
            ]);
        }
    }
    write_csv(
        dir,
        "calibration.csv",
        &[
            "split",
            "bin",
            "lower",
            "upper",
            "count",
            "mean_predicted",
            "observed_rate",
        ],
        &bins,
    )
}

fn calibration_chart(reports: &[SplitReport]) -> Chart {
    let mut chart = Chart::new("Calibration", "mean predicted", "observed rate");
    chart.diagonal = true;
    for s in reports {
        let pts: Vec<(f64, f64, usize)> = s
            .report
            .calibration
            .iter()
            .filter_map(|b| Some((b.mean_predicted?, b.observed_rate?, b.count)))
            .collect();
        chart = chart.with(Series {
            name: s.split.to_string(),
            x: pts.iter().map(|p| p.0).collect(),
            y: pts.iter().map(|p| p.1).collect(),
            mark: Mark::Points(
                pts.iter()
                    .map(|p| 2.0 + (p.2 as f64).log10().max(0.0))
                    .collect(),
            ),
        });
    }
    chart
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_draw_is_stable_and_roughly_sized() {
        let n = (0..10_000)
            .filter(|i| held_out(3, &format!("u{i}"), 0.2))
            .count();
        assert!((1800..2200).contains(&n), "{n}");
        assert_eq!(held_out(3, "u1", 0.2), held_out(3, "u1", 0.2));
    }
}
