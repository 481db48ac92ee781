use std::collections::BTreeMap;

use serde::Serialize;

use super::{mean, normal_p_value, sample_variance, MetricTable, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftEstimate {
    pub metric_name: String,
    /// `m_T / m_C - 1`.
    pub lift: f64,
    pub variance_of_lift: f64,
    pub ci95: (f64, f64),
    pub p_value: f64,
    pub n_t: usize,
    pub n_c: usize,
    pub mean_t: f64,
    pub mean_c: f64,
}

/// Percent lift of the treatment mean over the control mean.
///
/// The variance is the delta-method variance of the ratio of two independent
/// means. The p-value tests `log(m_T / m_C) = 0` with the matching
/// delta-method standard error, which makes it symmetric under swapping the
/// arms; when the ratio is not positive it falls back to `lift / se`.
pub fn percent_lift(
    metric_name: &str,
    treatment: &[f64],
    control: &[f64],
) -> Result<LiftEstimate, StatsError> {
    if treatment.len() < 2 {
        return Err(StatsError::TooFew {
            arm: "treatment",
            n: treatment.len(),
        });
    }
    if control.len() < 2 {
        return Err(StatsError::TooFew {
            arm: "control",
            n: control.len(),
        });
    }
    let (nt, nc) = (treatment.len() as f64, control.len() as f64);
    let (mt, mc) = (mean(treatment), mean(control));
    if mc == 0.0 {
        return Err(StatsError::ZeroControlMean);
    }
    let (vt, vc) = (sample_variance(treatment), sample_variance(control));
    let ratio = mt / mc;
    let lift = ratio - 1.0;
    // (m_T/m_C)^2 * (s_T^2/(n_T m_T^2) + s_C^2/(n_C m_C^2)), written to stay finite at m_T = 0.
    let variance = vt / (nt * mc * mc) + ratio * ratio * vc / (nc * mc * mc);
    let se = variance.sqrt();
    let p_value = if variance == 0.0 {
        if lift == 0.0 {
            1.0
        } else {
            0.0
        }
    } else if ratio > 0.0 {
        let log_var = vt / (nt * mt * mt) + vc / (nc * mc * mc);
        normal_p_value(ratio.ln() / log_var.sqrt())
    } else {
        normal_p_value(lift / se)
    };
    Ok(LiftEstimate {
        metric_name: metric_name.to_string(),
        lift,
        variance_of_lift: variance,
        ci95: (lift - 1.96 * se, lift + 1.96 * se),
        p_value,
        n_t: treatment.len(),
        n_c: control.len(),
        mean_t: mt,
        mean_c: mc,
    })
}

/// Splits a metric column into (treatment, control) values by unit assignment.
/// Units assigned to other arms are ignored; unassigned units are an error.
pub fn split_by_arm(
    table: &MetricTable,
    assignment: &BTreeMap<String, String>,
    treatment_arm: &str,
    control_arm: &str,
) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    let mut t = Vec::new();
    let mut c = Vec::new();
    let mut unassigned = Vec::new();
    for (unit, &v) in &table.values {
        match assignment.get(unit).map(String::as_str) {
            Some(a) if a == treatment_arm => t.push(v),
            Some(a) if a == control_arm => c.push(v),
            Some(_) => {}
            None => unassigned.push(unit.clone()),
        }
    }
    if !unassigned.is_empty() {
        return Err(StatsError::Unassigned(unassigned));
    }
    Ok((t, c))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatioRow {
    pub metric_name: String,
    pub variance_ratio_vs_baseline: f64,
}

/// Ratios of lift variances to the baseline's, in input order.
pub fn variance_ratios_from_lifts(
    lifts: &[LiftEstimate],
    baseline: &str,
) -> Result<Vec<VarianceRatioRow>, StatsError> {
    let base = lifts
        .iter()
        .find(|l| l.metric_name == baseline)
        .ok_or_else(|| StatsError::MissingBaseline(baseline.to_string()))?;
    Ok(lifts
        .iter()
        .map(|l| VarianceRatioRow {
            metric_name: l.metric_name.clone(),
            variance_ratio_vs_baseline: l.variance_of_lift / base.variance_of_lift,
        })
        .collect())
}

/// Lift of every metric on one split plus each metric's variance ratio to the baseline.
pub fn variance_ratio_table(
    tables: &[MetricTable],
    assignment: &BTreeMap<String, String>,
    treatment_arm: &str,
    control_arm: &str,
    baseline: &str,
) -> Result<(Vec<LiftEstimate>, Vec<VarianceRatioRow>), StatsError> {
    let base = tables
        .iter()
        .find(|t| t.name == baseline)
        .ok_or_else(|| StatsError::MissingBaseline(baseline.to_string()))?;
    for t in tables {
        let missing: Vec<String> = base
            .values
            .keys()
            .filter(|k| !t.values.contains_key(*k))
            .cloned()
            .collect();
        let extra: Vec<String> = t
            .values
            .keys()
            .filter(|k| !base.values.contains_key(*k))
            .cloned()
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(StatsError::RosterMismatch {
                metric: t.name.clone(),
                missing,
                extra,
            });
        }
    }
    let lifts = tables
        .iter()
        .map(|t| {
            let (tv, cv) = split_by_arm(t, assignment, treatment_arm, control_arm)?;
            percent_lift(&t.name, &tv, &cv)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = variance_ratios_from_lifts(&lifts, baseline)?;
    Ok((lifts, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_groups_have_zero_variance() {
        let l = percent_lift("m", &[1.1; 5], &[1.0; 5]).unwrap();
        assert!((l.lift - 0.1).abs() < 1e-12);
        assert_eq!(l.variance_of_lift, 0.0);
        assert_eq!(l.p_value, 0.0);
        assert_eq!(l.ci95.0, l.lift);
    }

    #[test]
    fn identical_groups_give_zero_lift() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let l = percent_lift("m", &xs, &xs).unwrap();
        assert_eq!(l.lift, 0.0);
        assert!((l.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_variance_by_hand() {
        // m_T = 2, s_T^2 = 1, n_T = 3; m_C = 1, s_C^2 = 1, n_C = 3.
        let l = percent_lift("m", &[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap();
        let expected = 4.0 * (1.0 / 12.0 + 1.0 / 3.0);
        assert!((l.variance_of_lift - expected).abs() < 1e-12);
        assert!((l.lift - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            percent_lift("m", &[1.0], &[1.0, 2.0]),
            Err(StatsError::TooFew {
                arm: "treatment",
                n: 1
            })
        );
        assert_eq!(
            percent_lift("m", &[1.0, 2.0], &[0.0, 0.0]),
            Err(StatsError::ZeroControlMean)
        );
    }

    #[test]
    fn published_ratio_layout_is_reproduced() {
        let names = [
            "Booker",
            "Booking",
            "Utility Capped",
            "Utility",
            "Page-Viewers",
            "Page-views",
        ];
        let ratios = [2.53, 2.86, 0.48, 1.24, 0.18, 1.0];
        let lifts: Vec<LiftEstimate> = names
            .iter()
            .zip(ratios)
            .map(|(n, r)| LiftEstimate {
                metric_name: n.to_string(),
                lift: 0.0,
                variance_of_lift: 3e-5 * r,
                ci95: (0.0, 0.0),
                p_value: 1.0,
                n_t: 2,
                n_c: 2,
                mean_t: 1.0,
                mean_c: 1.0,
            })
            .collect();
        let rows = variance_ratios_from_lifts(&lifts, "Page-views").unwrap();
        for (row, r) in rows.iter().zip(ratios) {
            assert!((row.variance_ratio_vs_baseline - r).abs() < 1e-12);
        }
    }

    #[test]
    fn roster_mismatch_lists_units() {
        let a = MetricTable::new(
            "a",
            BTreeMap::from([("u1".into(), 1.0), ("u2".into(), 2.0)]),
        );
        let b = MetricTable::new(
            "b",
            BTreeMap::from([("u1".into(), 1.0), ("u3".into(), 2.0)]),
        );
        let assign = BTreeMap::new();
        match variance_ratio_table(&[a, b], &assign, "t", "c", "a") {
            Err(StatsError::RosterMismatch {
                metric,
                missing,
                extra,
            }) => {
                assert_eq!(metric, "b");
                assert_eq!(missing, ["u2"]);
                assert_eq!(extra, ["u3"]);
            }
            other => panic!("{other:?}"),
        }
    }
}
