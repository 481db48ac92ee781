use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use super::{
    create_dir, read_assignments, read_events_file, read_listings_file, read_outcomes_file,
    verify_input, write_with, PipelineError, Result, RunManifest,
};
use crate::attribution::{
    attribute_all, leakage_guard, raw_sums, write_aggregates, write_utilities, UnitKind,
    UtilityRecord,
};
use crate::journey::{JourneyStore, PairKey, StoreConfig};
use crate::learner::SurrogateModel;
use crate::stats::{write_metric_tables, MetricTable};

/// Largest allowed `|sum of utilities - V_T|` for a pair.
pub const TELESCOPING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct AttributeArgs {
    pub events: PathBuf,
    pub listings: PathBuf,
    pub model: PathBuf,
    /// Enables outcome metrics next to the utility metrics.
    pub outcomes: Option<PathBuf>,
    pub caps: Vec<f64>,
    pub unit: UnitKind,
    /// `unit_id,assignment` file whose units define the metric roster.
    pub roster: Option<PathBuf>,
    pub allow_overlap: bool,
    pub audit_telescoping: bool,
    pub out: PathBuf,
    pub force: bool,
}

impl AttributeArgs {
    pub fn new(events: PathBuf, listings: PathBuf, model: PathBuf, out: PathBuf) -> Self {
        Self {
            events,
            listings,
            model,
            outcomes: None,
            caps: Vec::new(),
            unit: UnitKind::User,
            roster: None,
            allow_overlap: false,
            audit_telescoping: false,
            out,
            force: false,
        }
    }
}

/// Largest telescoping gap over all pairs.
fn telescoping_gap(records: &[UtilityRecord]) -> f64 {
    let mut pairs: BTreeMap<(&str, &str), (f64, usize, f64)> = BTreeMap::new();
    for r in records {
        let e = pairs
            .entry((&r.user_id, &r.listing_id))
            .or_insert((0.0, 0, 0.0));
        e.0 += r.utility;
        if r.t > e.1 {
            e.1 = r.t;
            e.2 = r.v_curr;
        }
    }
    pairs
        .values()
        .map(|(s, _, v)| (s - v).abs())
        .fold(0.0, f64::max)
}

/// Outcome-based metrics per unit: `booking` and `booker` for users,
/// `booked_click` for searches, `booking` for listings, and `page_views` for all.
///
/// A search's `booked_click` counts the distinct listings clicked from it that
/// the user booked at or after the first such click.
pub fn outcome_metrics(
    store: &JourneyStore,
    unit: UnitKind,
    units: &BTreeSet<String>,
) -> Vec<MetricTable> {
    let zeros = || -> BTreeMap<String, f64> { units.iter().map(|u| (u.clone(), 0.0)).collect() };
    let bump = |m: &mut BTreeMap<String, f64>, k: &str, by: f64| {
        if let Some(v) = m.get_mut(k) {
            *v += by;
        }
    };
    let mut views = zeros();
    for e in store.events() {
        let key = match unit {
            UnitKind::User => Some(e.user_id.as_str()),
            UnitKind::Search => e.search_id.as_deref(),
            UnitKind::Listing => Some(e.listing_id.as_str()),
        };
        if let Some(k) = key {
            bump(&mut views, k, 1.0);
        }
    }
    let page_views = MetricTable::new("page_views", views);
    match unit {
        UnitKind::User | UnitKind::Listing => {
            let mut booking = zeros();
            for (pair, ts) in store.all_bookings() {
                let k = if unit == UnitKind::User {
                    &pair.user_id
                } else {
                    &pair.listing_id
                };
                bump(&mut booking, k, ts.len() as f64);
            }
            let mut tables = vec![MetricTable::new("booking", booking.clone())];
            if unit == UnitKind::User {
                let booker = booking.into_iter().map(|(k, v)| (k, v.min(1.0))).collect();
                tables.push(MetricTable::new("booker", booker));
            }
            tables.push(page_views);
            tables
        }
        UnitKind::Search => {
            let mut first_click: BTreeMap<(&str, &str, &str), i64> = BTreeMap::new();
            for e in store.events() {
                let Some(s) = e.search_id.as_deref() else {
                    continue;
                };
                let t = first_click
                    .entry((s, &e.user_id, &e.listing_id))
                    .or_insert(e.timestamp_ms);
                *t = (*t).min(e.timestamp_ms);
            }
            let mut booked = zeros();
            for ((s, user, listing), ts) in first_click {
                if store
                    .bookings(&PairKey::new(user, listing))
                    .iter()
                    .any(|&b| b >= ts)
                {
                    bump(&mut booked, s, 1.0);
                }
            }
            vec![MetricTable::new("booked_click", booked), page_views]
        }
    }
}

/// Scores every view, writes utilities, unit aggregates and a metric table.
pub fn attribute(args: &AttributeArgs) -> Result<RunManifest> {
    for &c in &args.caps {
        if !(c > 0.0 && c.is_finite()) {
            return Err(PipelineError::Config(format!(
                "cap must be a positive number, got {c}"
            )));
        }
    }
    let mut manifest = RunManifest::new("attribute", None);
    let mut inputs = vec![&args.events, &args.listings, &args.model];
    inputs.extend(args.outcomes.iter());
    inputs.extend(args.roster.iter());
    for p in inputs {
        verify_input(p, args.force)?;
        manifest.input(p)?;
    }
    let model_text =
        std::fs::read_to_string(&args.model).map_err(PipelineError::io(&args.model))?;
    let model = SurrogateModel::from_json(&model_text)
        .map_err(|e| PipelineError::Data(format!("{}: {e}", args.model.display())))?;
    let outcomes = match &args.outcomes {
        Some(p) => read_outcomes_file(p)?,
        None => Vec::new(),
    };
    let store = JourneyStore::ingest(
        read_events_file(&args.events)?,
        outcomes,
        read_listings_file(&args.listings)?,
        StoreConfig::default(),
    );
    leakage_guard(&model, &store, args.allow_overlap)?;
    let records = attribute_all(&model, &store)?;
    let gap = telescoping_gap(&records);

    let (mut sums, missing_search) = raw_sums(&records, args.unit);
    let mut outside = 0;
    if let Some(p) = &args.roster {
        let roster = read_assignments(p)?;
        outside = sums.keys().filter(|k| !roster.contains_key(*k)).count();
        sums.retain(|k, _| roster.contains_key(k));
        for unit in roster.into_keys() {
            sums.entry(unit).or_insert(0.0);
        }
    } else if args.outcomes.is_some() {
        for e in store.events() {
            let key = match args.unit {
                UnitKind::User => Some(&e.user_id),
                UnitKind::Search => e.search_id.as_ref(),
                UnitKind::Listing => Some(&e.listing_id),
            };
            if let Some(k) = key {
                sums.entry(k.clone()).or_insert(0.0);
            }
        }
    }
    let units: BTreeSet<String> = sums.keys().cloned().collect();
    let mut tables = vec![MetricTable::new("utility", sums.clone())];
    for &c in &args.caps {
        let capped = sums.iter().map(|(k, v)| (k.clone(), v.min(c))).collect();
        tables.push(MetricTable::new(format!("utility_capped_{c}"), capped));
    }
    if args.outcomes.is_some() {
        tables.extend(outcome_metrics(&store, args.unit, &units));
    }

    create_dir(&args.out)?;
    write_with(&args.out, "utilities.csv", |w| {
        Ok(write_utilities(w, &records)?)
    })?;
    write_with(&args.out, "aggregates.csv", |w| {
        Ok(write_aggregates(w, args.unit, &sums, &args.caps)?)
    })?;
    write_with(&args.out, "metrics.csv", |w| {
        Ok(write_metric_tables(w, &tables)?)
    })?;

    manifest.param("unit", args.unit);
    manifest.param(
        "caps",
        args.caps
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.param("allow_overlap", args.allow_overlap);
    manifest.param("views_scored", records.len());
    manifest.param("views_without_search", missing_search);
    manifest.param("units_outside_roster", outside);
    manifest.param("max_telescoping_error", gap);
    let outputs = ["utilities.csv", "aggregates.csv", "metrics.csv"].map(String::from);
    let manifest = manifest.finish(&args.out, &outputs)?;
    if args.audit_telescoping && (gap.is_nan() || gap > TELESCOPING_TOLERANCE) {
        return Err(PipelineError::Validation(format!(
            "telescoping audit: max |sum of utilities - V_T| = {gap:e} exceeds {TELESCOPING_TOLERANCE:e}"
        )));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(listing: &str, t: usize, v_prev: f64, v_curr: f64, utility: f64) -> UtilityRecord {
        UtilityRecord {
            event_id: format!("{listing}{t}"),
            user_id: "u".into(),
            listing_id: listing.into(),
            search_id: None,
            t,
            v_prev,
            v_curr,
            utility,
            ts_ms: t as i64,
        }
    }

    #[test]
    fn gap_uses_the_last_view_value() {
        let ok = [rec("a", 1, 0.0, 0.2, 0.2), rec("a", 2, 0.2, 0.5, 0.3)];
        assert!(telescoping_gap(&ok) < 1e-15);
        let bad = [rec("a", 2, 0.2, 0.5, 0.3), rec("a", 1, 0.0, 0.2, 0.25)];
        assert!((telescoping_gap(&bad) - 0.05).abs() < 1e-12);
    }
}
