use serde::Serialize;

use super::StatsError;

/// Outcome p-value threshold for the significant subset.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub id: String,
    pub lift_outcome: f64,
    pub lift_surrogate: f64,
    pub p_outcome: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentRow {
    pub id: String,
    pub lift_outcome: f64,
    pub lift_surrogate: f64,
    pub n: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub n_total: usize,
    pub n_significant: usize,
    /// `None` when no experiment is significant.
    pub sign_agreement_rate: Option<f64>,
    /// `None` when fewer than two significant experiments or a constant column.
    pub pearson_correlation: Option<f64>,
    pub rows: Vec<AlignmentRow>,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn alignment_analysis(
    experiments: &[ExperimentSummary],
) -> Result<AlignmentReport, StatsError> {
    if experiments.is_empty() {
        return Err(StatsError::NoExperiments);
    }
    let rows: Vec<AlignmentRow> = experiments
        .iter()
        .map(|e| AlignmentRow {
            id: e.id.clone(),
            lift_outcome: e.lift_outcome,
            lift_surrogate: e.lift_surrogate,
            n: e.n,
            significant: e.p_outcome < SIGNIFICANCE,
        })
        .collect();
    let sig: Vec<&AlignmentRow> = rows.iter().filter(|r| r.significant).collect();
    let agree = sig
        .iter()
        .filter(|r| r.lift_outcome.signum() == r.lift_surrogate.signum())
        .count();
    let xo: Vec<f64> = sig.iter().map(|r| r.lift_outcome).collect();
    let xs: Vec<f64> = sig.iter().map(|r| r.lift_surrogate).collect();
    Ok(AlignmentReport {
        n_total: rows.len(),
        n_significant: sig.len(),
        sign_agreement_rate: (!sig.is_empty()).then(|| agree as f64 / sig.len() as f64),
        pearson_correlation: pearson(&xo, &xs),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exps(pairs: &[(f64, f64, f64)]) -> Vec<ExperimentSummary> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(o, s, p))| ExperimentSummary {
                id: format!("e{i}"),
                lift_outcome: o,
                lift_surrogate: s,
                p_outcome: p,
                n: 100,
            })
            .collect()
    }

    #[test]
    fn identical_lifts_agree_perfectly() {
        let r = alignment_analysis(&exps(&[
            (0.1, 0.1, 0.01),
            (-0.2, -0.2, 0.001),
            (0.05, 0.05, 0.2),
            (0.3, 0.3, 0.04),
        ]))
        .unwrap();
        assert_eq!(r.n_significant, 3);
        assert_eq!(r.sign_agreement_rate, Some(1.0));
        assert!((r.pearson_correlation.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_lifts_disagree() {
        let r = alignment_analysis(&exps(&[
            (0.1, -0.1, 0.01),
            (-0.2, 0.2, 0.001),
            (0.3, -0.3, 0.04),
        ]))
        .unwrap();
        assert_eq!(r.sign_agreement_rate, Some(0.0));
        assert!((r.pearson_correlation.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_significant_experiments_flags_undefined() {
        let r = alignment_analysis(&exps(&[(0.1, 0.1, 0.5)])).unwrap();
        assert_eq!(r.n_significant, 0);
        assert_eq!(r.sign_agreement_rate, None);
        assert_eq!(r.pearson_correlation, None);
        assert!(matches!(
            alignment_analysis(&[]),
            Err(StatsError::NoExperiments)
        ));
    }
}
