use std::collections::BTreeMap;

use serde::Serialize;

use super::StatsError;
use crate::attribution::UtilityRecord;
use crate::journey::{utc_date, PairKey};

/// Percentile `p` in [0, 100] by linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortCurve {
    /// Views before the booking request.
    pub views: usize,
    pub pairs: usize,
    /// Percentile of utility at view index 1..=views.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortCurves {
    pub percentile: f64,
    pub curves: Vec<CohortCurve>,
    /// Requested cohorts with no pairs.
    pub omitted: Vec<usize>,
}

/// Per-cohort percentile curves of utility by view index for booked pairs.
///
/// A booked pair belongs to cohort `k` when exactly `k` of its views happen
/// at or before its first booking.
pub fn utility_by_view_index(
    records: &[UtilityRecord],
    first_booking: &BTreeMap<PairKey, i64>,
    cohorts: &[usize],
    pct: f64,
) -> Result<CohortCurves, StatsError> {
    if !(pct > 0.0 && pct < 100.0) {
        return Err(StatsError::Percentile(pct));
    }
    if cohorts.is_empty() {
        return Err(StatsError::NoCohorts);
    }
    let mut by_pair: BTreeMap<PairKey, Vec<&UtilityRecord>> = BTreeMap::new();
    for r in records {
        let key = PairKey::new(r.user_id.as_str(), r.listing_id.as_str());
        if let Some(&b) = first_booking.get(&key) {
            if r.ts_ms <= b {
                by_pair.entry(key).or_default().push(r);
            }
        }
    }
    let mut members: BTreeMap<usize, Vec<Vec<f64>>> =
        cohorts.iter().map(|&k| (k, Vec::new())).collect();
    for mut recs in by_pair.into_values() {
        recs.sort_by_key(|r| r.t);
        if let Some(m) = members.get_mut(&recs.len()) {
            m.push(recs.iter().map(|r| r.utility).collect());
        }
    }
    let mut curves = Vec::new();
    let mut omitted = Vec::new();
    for (k, pairs) in members {
        if pairs.is_empty() {
            omitted.push(k);
            continue;
        }
        let curve = (0..k)
            .map(|j| {
                let col: Vec<f64> = pairs.iter().map(|u| u[j]).collect();
                percentile(&col, pct)
            })
            .collect();
        curves.push(CohortCurve {
            views: k,
            pairs: pairs.len(),
            curve,
        });
    }
    Ok(CohortCurves {
        percentile: pct,
        curves,
        omitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareTrend {
    /// Calendar-day offsets from the booking day, `-horizon..=0`.
    pub days: Vec<i64>,
    /// Mean over bookers of the booked listing's share of that day's views.
    pub view_share: Vec<Option<f64>>,
    /// Same with positive-part utility as the measure.
    pub utility_share: Vec<Option<f64>>,
    pub bookers_with_views: Vec<usize>,
    pub bookers_with_utility: Vec<usize>,
}

/// Share of the booked listing in each booker's daily views and utility.
///
/// Each user's first booking defines the booked listing and day 0; only
/// views at or before the booking timestamp count. A booker contributes to
/// a day's average only when that day's denominator is positive.
pub fn utility_share_trend<'a>(
    records: &[UtilityRecord],
    bookings: impl IntoIterator<Item = (&'a str, &'a str, i64)>,
    horizon_days: i64,
) -> Result<ShareTrend, StatsError> {
    if horizon_days < 1 {
        return Err(StatsError::Horizon);
    }
    let mut first: BTreeMap<&str, (&str, i64)> = BTreeMap::new();
    for (user, listing, ts) in bookings {
        let e = first.entry(user).or_insert((listing, ts));
        if (ts, listing) < (e.1, e.0) {
            *e = (listing, ts);
        }
    }
    let width = (horizon_days + 1) as usize;
    // Per booker and day: (views booked, views all, utility booked, utility all).
    let mut cells: BTreeMap<&str, Vec<[f64; 4]>> = BTreeMap::new();
    for r in records {
        let Some(&(listing, ts)) = first.get(r.user_id.as_str()) else {
            continue;
        };
        if r.ts_ms > ts {
            continue;
        }
        let d = (utc_date(r.ts_ms) - utc_date(ts)).num_days();
        if d < -horizon_days {
            continue;
        }
        let c = &mut cells
            .entry(r.user_id.as_str())
            .or_insert_with(|| vec![[0.0; 4]; width])[(d + horizon_days) as usize];
        let u = r.utility.max(0.0);
        let booked = r.listing_id == listing;
        c[1] += 1.0;
        c[3] += u;
        if booked {
            c[0] += 1.0;
            c[2] += u;
        }
    }
    let mut view_sum = vec![0.0; width];
    let mut util_sum = vec![0.0; width];
    let mut nv = vec![0usize; width];
    let mut nu = vec![0usize; width];
    for days in cells.values() {
        for (i, c) in days.iter().enumerate() {
            if c[1] > 0.0 {
                view_sum[i] += c[0] / c[1];
                nv[i] += 1;
            }
            if c[3] > 0.0 {
                util_sum[i] += c[2] / c[3];
                nu[i] += 1;
            }
        }
    }
    let avg = |s: &[f64], n: &[usize]| -> Vec<Option<f64>> {
        s.iter()
            .zip(n)
            .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
            .collect()
    };
    Ok(ShareTrend {
        days: (-horizon_days..=0).collect(),
        view_share: avg(&view_sum, &nv),
        utility_share: avg(&util_sum, &nu),
        bookers_with_views: nv,
        bookers_with_utility: nu,
    })
}

/// First day whose share exceeds `factor` times the mean of the first
/// `base_days` defined shares.
pub fn uptick_day(
    days: &[i64],
    shares: &[Option<f64>],
    base_days: usize,
    factor: f64,
) -> Option<i64> {
    let base: Vec<f64> = shares.iter().flatten().take(base_days).copied().collect();
    if base.is_empty() {
        return None;
    }
    let level = base.iter().sum::<f64>() / base.len() as f64;
    days.iter()
        .zip(shares)
        .find(|(_, s)| matches!(s, Some(v) if *v > factor * level))
        .map(|(&d, _)| d)
}
