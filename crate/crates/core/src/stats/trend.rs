use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

impl SlopeEstimate {
    pub fn excludes_zero(&self) -> bool {
        self.ci95.0 > 0.0 || self.ci95.1 < 0.0
    }
}

/// Inverse-variance weighted least-squares slope of `y` on `x`.
///
/// `se` are the standard errors of the `y` values. Returns `None` with
/// fewer than two distinct `x` values or a nonpositive standard error.
pub fn weighted_slope(x: &[f64], y: &[f64], se: &[f64]) -> Option<SlopeEstimate> {
    if se.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return None;
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = w
        .iter()
        .zip(x)
        .zip(y)
        .map(|((w, x), y)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let se = (1.0 / sxx).sqrt();
    Some(SlopeEstimate {
        slope,
        se,
        ci95: (slope - 1.96 * se, slope + 1.96 * se),
    })
}

/// Weighted pool-adjacent-violators fit constrained to be non-increasing.
pub fn isotonic_decreasing(y: &[f64], w: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().expect("two blocks");
            *last = ((m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_its_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [5.0, 3.0, 1.0, -1.0];
        let s = weighted_slope(&x, &y, &[0.1; 4]).unwrap();
        assert!((s.slope + 2.0).abs() < 1e-12);
        assert!(s.excludes_zero());
        assert!(weighted_slope(&[1.0, 1.0], &[0.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn slope_se_matches_closed_form() {
        // Equal unit SEs: se = 1 / sqrt(sum (x - mean)^2).
        let s = weighted_slope(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0], &[1.0; 3]).unwrap();
        assert!((s.se - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pava_pools_violators() {
        let fit = isotonic_decreasing(&[3.0, 1.0, 2.0, 0.0], &[1.0; 4]);
        assert_eq!(fit, [3.0, 1.5, 1.5, 0.0]);
        let mono = [4.0, 3.0, 3.0, 1.0];
        assert_eq!(isotonic_decreasing(&mono, &[1.0; 4]), mono);
    }
}
