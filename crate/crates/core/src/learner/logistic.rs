//! L2-regularized logistic regression fit by damped Newton steps.
//!
//! Objective: `mean_i loss(b + w.x_i) + l2/2 * |w|^2`; the intercept `b` is
//! not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::loss;
use super::{
    Dataset, LearnError, LearnerConfig, ModelKind, SurrogateModel, TrainingMetadata, MODEL_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop once the largest gradient component is below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iterations: 100,
            tolerance: 1e-8,
        }
    }
}

const MAX_RISES: usize = 10;
const MAX_HALVINGS: usize = 40;

struct Problem<'a> {
    data: &'a Dataset,
    l2: f64,
}

impl Problem<'_> {
    fn objective(&self, beta: &DVector<f64>) -> f64 {
        let n = self.data.len();
        let y = self.data.labels();
        let mut total = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            total += loss::log_loss(self.score(beta, i), yi as f64);
        }
        total / n as f64 + 0.5 * self.l2 * beta.rows(1, beta.len() - 1).norm_squared()
    }

    fn score(&self, beta: &DVector<f64>, i: usize) -> f64 {
        beta[0]
            + self
                .data
                .row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| beta[j + 1] * v)
                .sum::<f64>()
    }

    fn gradient_hessian(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.data.len();
        let p = beta.len();
        let y = self.data.labels();
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        let mut z = vec![1.0; p];
        for (i, &yi) in y.iter().enumerate() {
            z[1..].copy_from_slice(self.data.row(i));
            let s = self.score(beta, i);
            let r = loss::gradient(s, yi as f64);
            let w = loss::hessian(s);
            for a in 0..p {
                g[a] += r * z[a];
                let wz = w * z[a];
                for b in 0..=a {
                    h[(a, b)] += wz * z[b];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        g *= inv_n;
        h *= inv_n;
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for j in 1..p {
            g[j] += self.l2 * beta[j];
            h[(j, j)] += self.l2;
        }
        (g, h)
    }
}

/// Solves `h d = g`, adding a growing ridge when `h` is not positive definite.
fn newton_direction(h: DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut m = h.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return c.solve(g);
        }
        jitter = if jitter == 0.0 {
            1e-12 * scale
        } else {
            jitter * 10.0
        };
    }
}

pub fn train_logistic(data: &Dataset, cfg: &LogisticConfig) -> Result<SurrogateModel, LearnError> {
    if !(cfg.l2 >= 0.0 && cfg.l2.is_finite()) {
        return Err(LearnError::InvalidConfig("l2 must be >= 0".into()));
    }
    data.check_trainable()?;
    let n = data.len();
    let positives = data.positives();
    let problem = Problem { data, l2: cfg.l2 };
    let mut beta = DVector::zeros(data.n_features() + 1);
    beta[0] = loss::logit(positives as f64 / n as f64);
    let mut current = problem.objective(&beta);
    let mut trace = vec![current];
    let mut rises = 0;

    for _ in 0..cfg.max_iterations {
        let (g, h) = problem.gradient_hessian(&beta);
        if g.amax() < cfg.tolerance {
            break;
        }
        let dir = newton_direction(h, &g);
        let mut step = 1.0;
        let mut candidate = &beta - &dir;
        let mut value = problem.objective(&candidate);
        for _ in 0..MAX_HALVINGS {
            if value.is_finite() && value <= current {
                break;
            }
            step *= 0.5;
            candidate = &beta - &dir * step;
            value = problem.objective(&candidate);
        }
        if !value.is_finite() {
            trace.push(value);
            return Err(LearnError::Diverged { trace });
        }
        rises = if value > current { rises + 1 } else { 0 };
        trace.push(value);
        if rises >= MAX_RISES {
            return Err(LearnError::Diverged { trace });
        }
        let moved = (&candidate - &beta).amax();
        beta = candidate;
        current = value;
        if moved == 0.0 {
            break;
        }
    }

    Ok(SurrogateModel {
        version: MODEL_VERSION.to_string(),
        kind: ModelKind::Logistic,
        feature_count: data.n_features(),
        base_score: beta[0],
        trees: Vec::new(),
        weights: beta.iter().skip(1).copied().collect(),
        metadata: TrainingMetadata {
            config: LearnerConfig::Logistic(cfg.clone()),
            data_hash: data.content_hash(),
            n_examples: n,
            n_positive: positives,
            training_log_loss: trace,
            train_window: None,
        },
    })
}
