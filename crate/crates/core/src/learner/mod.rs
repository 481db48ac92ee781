//! Surrogate value model `V(S) = E[Y | S]`.
//!
//! Two learners share one model file format: gradient-boosted regression
//! trees fit on logistic-loss gradient/hessian statistics with optional tree
//! dropout ([`train_gbdt`]), and a Newton-fitted logistic regression
//! ([`train_logistic`]). Both produce a [`SurrogateModel`] whose
//! [`predict`](SurrogateModel::predict) is `sigmoid(raw score)`.

mod gbdt;
mod logistic;
pub mod loss;
mod report;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gbdt::{train_gbdt, GbdtConfig};
pub use logistic::{train_logistic, LogisticConfig};
pub use report::{auc, calibration_fit, evaluate, CalibrationBin, ModelReport};

pub const MODEL_VERSION: &str = "surrogate-model/1";

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training set is empty")]
    Empty,
    #[error(
        "training labels are all {label}: a single-class model would be degenerate ({n} examples)"
    )]
    SingleClass { label: u8, n: usize },
    #[error("non-finite feature value at row {row}, feature {feature}")]
    NonFinite { row: usize, feature: usize },
    #[error("feature length mismatch: model expects {expected}, got {got}")]
    FeatureLength { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("logistic fit diverged; loss trace: {trace:?}")]
    Diverged { trace: Vec<f64> },
    #[error("unsupported model file version {0:?}")]
    Version(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<u8>,
}

impl Dataset {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: &[u8]) -> Result<Self, LearnError> {
        let n_features = rows.first().map(Vec::len).unwrap_or(0);
        let mut d = Self::new(n_features);
        for (r, &y) in rows.iter().zip(labels) {
            if r.len() != n_features {
                return Err(LearnError::FeatureLength {
                    expected: n_features,
                    got: r.len(),
                });
            }
            d.push(r, y == 1);
        }
        Ok(d)
    }

    pub fn push(&mut self, row: &[f64], label: bool) {
        assert_eq!(row.len(), self.n_features, "row length");
        self.x.extend_from_slice(row);
        self.y.push(label as u8);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&y| y == 1).count()
    }

    /// Rows whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let mut out = Dataset::new(self.n_features);
        for i in 0..self.len() {
            if keep(i) {
                out.push(self.row(i), self.y[i] == 1);
            }
        }
        out
    }

    /// Both classes present and every value finite.
    pub fn check_trainable(&self) -> Result<(), LearnError> {
        if self.is_empty() {
            return Err(LearnError::Empty);
        }
        if let Some(pos) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite {
                row: pos / self.n_features,
                feature: pos % self.n_features,
            });
        }
        let positives = self.positives();
        if positives == 0 || positives == self.len() {
            return Err(LearnError::SingleClass {
                label: self.y[0],
                n: self.len(),
            });
        }
        Ok(())
    }

    /// SHA-256 over feature bits and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_features as u64).to_le_bytes());
        for v in &self.x {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(&self.y);
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbdt,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// One regression tree; its contribution is `weight * leaf value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub weight: f64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn raw(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum LearnerConfig {
    Gbdt(GbdtConfig),
    Logistic(LogisticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: LearnerConfig,
    pub data_hash: String,
    pub n_examples: usize,
    pub n_positive: usize,
    /// Mean training log loss after each boosting round or Newton step.
    pub training_log_loss: Vec<f64>,
    /// Timestamp span of the training examples.
    #[serde(default)]
    pub train_window: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub version: String,
    pub kind: ModelKind,
    pub feature_count: usize,
    /// Initial log-odds for trees; intercept for the linear model.
    pub base_score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trees: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl SurrogateModel {
    pub fn raw_score(&self, x: &[f64]) -> Result<f64, LearnError> {
        if x.len() != self.feature_count {
            return Err(LearnError::FeatureLength {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        Ok(self.raw_score_unchecked(x))
    }

    fn raw_score_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            ModelKind::Gbdt => {
                self.base_score + self.trees.iter().map(|t| t.weight * t.raw(x)).sum::<f64>()
            }
            ModelKind::Logistic => {
                self.base_score + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            }
        }
    }

    /// `V(x)`, strictly inside (0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<f64, LearnError> {
        Ok(loss::sigmoid(self.raw_score(x)?))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>, LearnError> {
        (0..data.len()).map(|i| self.predict(data.row(i))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let m: SurrogateModel = serde_json::from_str(s)?;
        if m.version != MODEL_VERSION {
            return Err(LearnError::Version(m.version));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_rejects_nan_and_single_class() {
        let d = Dataset::from_rows(&[vec![1.0], vec![f64::NAN]], &[0, 1]).unwrap();
        assert!(matches!(
            d.check_trainable(),
            Err(LearnError::NonFinite { row: 1, feature: 0 })
        ));
        let d = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[1, 1]).unwrap();
        assert!(matches!(
            d.check_trainable(),
            Err(LearnError::SingleClass { label: 1, .. })
        ));
        assert!(matches!(
            Dataset::new(3).check_trainable(),
            Err(LearnError::Empty)
        ));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[0, 1]).is_err());
    }

    #[test]
    fn content_hash_tracks_values() {
        let a = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[0, 1]).unwrap();
        let b = Dataset::from_rows(&[vec![1.0], vec![2.5]], &[0, 1]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash(), a.clone().content_hash());
    }

    #[test]
    fn wrong_version_is_refused() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[0, 1]).unwrap();
        let m = train_logistic(&d, &LogisticConfig::default()).unwrap();
        let json = m.to_json().replace(MODEL_VERSION, "surrogate-model/0");
        assert!(matches!(
            SurrogateModel::from_json(&json),
            Err(LearnError::Version(_))
        ));
    }
}
