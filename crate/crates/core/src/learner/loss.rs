//! Logistic loss on raw scores, shared by both learners.

/// Scores are clamped here so that `sigmoid` stays strictly inside (0, 1).
pub const SCORE_CLAMP: f64 = 35.0;

pub fn sigmoid(score: f64) -> f64 {
    let s = score.clamp(-SCORE_CLAMP, SCORE_CLAMP);
    1.0 / (1.0 + (-s).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `-[y ln p + (1-y) ln(1-p)]` with `p = sigmoid(score)`, computed stably.
pub fn log_loss(score: f64, label: f64) -> f64 {
    // ln(1 + e^s) - y s
    let softplus = if score > 0.0 {
        score + (-score).exp().ln_1p()
    } else {
        score.exp().ln_1p()
    };
    softplus - label * score
}

/// d loss / d score.
pub fn gradient(score: f64, label: f64) -> f64 {
    sigmoid(score) - label
}

/// d² loss / d score².
pub fn hessian(score: f64) -> f64 {
    let p = sigmoid(score);
    p * (1.0 - p)
}

/// Mean log loss of probabilities, with probabilities clipped to [1e-15, 1-1e-15].
pub fn mean_log_loss_prob(probs: &[f64], labels: &[u8]) -> f64 {
    let n = probs.len().max(1) as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-15, 1.0 - 1e-15);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_score_is_one_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((log_loss(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn extreme_scores_stay_inside_unit_interval() {
        assert!(sigmoid(1e6) < 1.0);
        assert!(sigmoid(-1e6) > 0.0);
        assert!(log_loss(800.0, 0.0).is_finite());
        assert!(log_loss(-800.0, 1.0).is_finite());
    }

    #[test]
    fn hessian_matches_gradient_difference() {
        for &s in &[-4.0, -0.3, 0.0, 1.7, 6.0] {
            let h = 1e-5;
            let fd = (gradient(s + h, 1.0) - gradient(s - h, 1.0)) / (2.0 * h);
            assert!((fd - hessian(s)).abs() < 1e-8);
        }
    }
}
