use serde::{Deserialize, Serialize};

use super::loss;
use super::{train_logistic, Dataset, LearnError, LogisticConfig, SurrogateModel};

pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_predicted: Option<f64>,
    pub observed_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub n: usize,
    pub n_positive: usize,
    pub log_loss: f64,
    /// Undefined when the evaluation set has a single class.
    pub auc: Option<f64>,
    pub mean_predicted: f64,
    pub base_rate: f64,
    pub calibration: Vec<CalibrationBin>,
    /// Logistic fit of the label on `logit(p)`; a calibrated model gives (0, 1).
    pub calibration_intercept: Option<f64>,
    pub calibration_slope: Option<f64>,
}

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
pub fn auc(preds: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && preds[idx[j + 1]] == preds[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// `(intercept, slope)` of `logit P(y=1) = a + b * logit(p)`.
pub fn calibration_fit(preds: &[f64], labels: &[u8]) -> Option<(f64, f64)> {
    let mut d = Dataset::new(1);
    for (&p, &y) in preds.iter().zip(labels) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        d.push(&[loss::logit(p)], y == 1);
    }
    let cfg = LogisticConfig {
        l2: 0.0,
        ..LogisticConfig::default()
    };
    let m = train_logistic(&d, &cfg).ok()?;
    Some((m.base_score, m.weights[0]))
}

pub fn calibration_bins(preds: &[f64], labels: &[u8]) -> Vec<CalibrationBin> {
    let mut sums = [(0usize, 0.0f64, 0usize); CALIBRATION_BINS];
    for (&p, &y) in preds.iter().zip(labels) {
        let b = ((p * CALIBRATION_BINS as f64) as usize).min(CALIBRATION_BINS - 1);
        sums[b].0 += 1;
        sums[b].1 += p;
        sums[b].2 += y as usize;
    }
    sums.iter()
        .enumerate()
        .map(|(b, &(count, psum, ysum))| CalibrationBin {
            lower: b as f64 / CALIBRATION_BINS as f64,
            upper: (b + 1) as f64 / CALIBRATION_BINS as f64,
            count,
            mean_predicted: (count > 0).then(|| psum / count as f64),
            observed_rate: (count > 0).then(|| ysum as f64 / count as f64),
        })
        .collect()
}

pub fn evaluate(model: &SurrogateModel, data: &Dataset) -> Result<ModelReport, LearnError> {
    if data.is_empty() {
        return Err(LearnError::Empty);
    }
    let preds = model.predict_dataset(data)?;
    let labels = data.labels();
    let n = data.len();
    let n_positive = data.positives();
    let cal = calibration_fit(&preds, labels);
    Ok(ModelReport {
        n,
        n_positive,
        log_loss: loss::mean_log_loss_prob(&preds, labels),
        auc: auc(&preds, labels),
        mean_predicted: preds.iter().sum::<f64>() / n as f64,
        base_rate: n_positive as f64 / n as f64,
        calibration: calibration_bins(&preds, labels),
        calibration_intercept: cal.map(|c| c.0),
        calibration_slope: cal.map(|c| c.1),
    })
}
