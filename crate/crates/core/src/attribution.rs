//! Listing-view utilities: the per-view increments of the value trajectory.
//!
//! For a pair with views `1..=T`, `V_t = predict(S_t)` and view `t` is
//! credited `V_t - V_{t-1}` with `V_0 = 0`, so the credits of a pair sum to
//! `V_T`. Unit-level metrics sum credits by user, search or listing and cap
//! the sum from above.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journey::{feature_vector, JourneyError, JourneyStore, FEATURE_COUNT};
use crate::learner::{LearnError, SurrogateModel};
use crate::stats::MetricTable;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Journey(#[from] JourneyError),
    #[error(transparent)]
    Model(#[from] LearnError),
    #[error("model expects {model} features, encoder produces {encoder}")]
    FeatureCount { model: usize, encoder: usize },
    #[error("cap threshold must be > 0, got {0}")]
    InvalidCap(f64),
    #[error(
        "model training window [{train_start}, {train_end}] overlaps scoring window [{score_start}, {score_end}]; \
         pass the overlap override to score anyway"
    )]
    Leakage {
        train_start: i64,
        train_end: i64,
        score_start: i64,
        score_end: i64,
    },
    #[error("utility csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub event_id: String,
    pub user_id: String,
    pub listing_id: String,
    pub search_id: Option<String>,
    /// 1-based position of the view in the pair's timeline.
    pub t: usize,
    pub v_prev: f64,
    pub v_curr: f64,
    pub utility: f64,
    pub ts_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    User,
    Search,
    Listing,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::User => "user",
            UnitKind::Search => "search",
            UnitKind::Listing => "listing",
        }
    }

    fn unit_of(self, r: &UtilityRecord) -> Option<&str> {
        match self {
            UnitKind::User => Some(&r.user_id),
            UnitKind::Search => r.search_id.as_deref(),
            UnitKind::Listing => Some(&r.listing_id),
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" => Ok(UnitKind::User),
            "search" => Ok(UnitKind::Search),
            "listing" => Ok(UnitKind::Listing),
            other => Err(format!(
                "unknown unit kind {other:?}; expected user, search or listing"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedUtility {
    pub unit_kind: UnitKind,
    pub unit_id: String,
    pub raw_sum: f64,
    pub capped: f64,
    pub cap_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub units: BTreeMap<String, AggregatedUtility>,
    /// Records left out of a search aggregation because they carry no search id.
    pub missing_search: usize,
}

fn check_model(model: &SurrogateModel) -> Result<(), AttributionError> {
    if model.feature_count != FEATURE_COUNT {
        return Err(AttributionError::FeatureCount {
            model: model.feature_count,
            encoder: FEATURE_COUNT,
        });
    }
    Ok(())
}

pub fn attribute_pair(
    model: &SurrogateModel,
    store: &JourneyStore,
    user_id: &str,
    listing_id: &str,
) -> Result<Vec<UtilityRecord>, AttributionError> {
    check_model(model)?;
    let states = store.states(user_id, listing_id)?;
    let views = store.pair_views(user_id, listing_id)?;
    let mut out = Vec::with_capacity(states.len());
    let mut v_prev = 0.0;
    for (state, view) in states.iter().zip(views) {
        let v_curr = model.predict(feature_vector(state).as_slice())?;
        out.push(UtilityRecord {
            event_id: view.event_id.clone(),
            user_id: view.user_id.clone(),
            listing_id: view.listing_id.clone(),
            search_id: view.search_id.clone(),
            t: state.view_position,
            v_prev,
            v_curr,
            utility: v_curr - v_prev,
            ts_ms: view.timestamp_ms,
        });
        v_prev = v_curr;
    }
    Ok(out)
}

/// Records for every pair, in pair order then step order.
pub fn attribute_all(
    model: &SurrogateModel,
    store: &JourneyStore,
) -> Result<Vec<UtilityRecord>, AttributionError> {
    let mut out = Vec::with_capacity(store.events().len());
    for key in store.pairs() {
        out.extend(attribute_pair(model, store, &key.user_id, &key.listing_id)?);
    }
    Ok(out)
}

fn check_cap(cap: f64) -> Result<(), AttributionError> {
    if cap > 0.0 {
        Ok(())
    } else {
        Err(AttributionError::InvalidCap(cap))
    }
}

/// Raw per-unit sums in record order, plus the count of records without a unit.
pub fn raw_sums<'a>(
    records: impl IntoIterator<Item = &'a UtilityRecord>,
    unit_kind: UnitKind,
) -> (BTreeMap<String, f64>, usize) {
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    let mut missing = 0;
    for r in records {
        match unit_kind.unit_of(r) {
            Some(unit) => {
                if let Some(s) = sums.get_mut(unit) {
                    *s += r.utility;
                } else {
                    sums.insert(unit.to_string(), r.utility);
                }
            }
            None => missing += 1,
        }
    }
    (sums, missing)
}

pub fn aggregate<'a>(
    records: impl IntoIterator<Item = &'a UtilityRecord>,
    unit_kind: UnitKind,
    cap_threshold: f64,
) -> Result<Aggregation, AttributionError> {
    check_cap(cap_threshold)?;
    let (sums, missing_search) = raw_sums(records, unit_kind);
    let units = sums
        .into_iter()
        .map(|(unit_id, raw_sum)| {
            let agg = AggregatedUtility {
                unit_kind,
                unit_id: unit_id.clone(),
                raw_sum,
                capped: raw_sum.min(cap_threshold),
                cap_threshold,
            };
            (unit_id, agg)
        })
        .collect();
    Ok(Aggregation {
        units,
        missing_search,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ScoringOptions {
    /// Units that must appear in the table even with no activity.
    pub roster: Option<Vec<String>>,
    /// Score even when the model's training window overlaps the scoring window.
    pub allow_overlap: bool,
}

/// Refuses to score when the model was trained on data from the scoring window.
/// Models without a recorded training window are not checked.
pub fn leakage_guard(
    model: &SurrogateModel,
    store: &JourneyStore,
    allow_overlap: bool,
) -> Result<(), AttributionError> {
    if allow_overlap {
        return Ok(());
    }
    let (Some((train_start, train_end)), Some((score_start, score_end))) =
        (model.metadata.train_window, store.time_range())
    else {
        return Ok(());
    };
    if train_end >= score_start && train_start <= score_end {
        return Err(AttributionError::Leakage {
            train_start,
            train_end,
            score_start,
            score_end,
        });
    }
    Ok(())
}

/// Per-unit capped utility, one row per active or rostered unit.
pub fn utility_metric_per_unit(
    store: &JourneyStore,
    model: &SurrogateModel,
    unit_kind: UnitKind,
    cap: f64,
    options: &ScoringOptions,
) -> Result<MetricTable, AttributionError> {
    check_cap(cap)?;
    leakage_guard(model, store, options.allow_overlap)?;
    let records = attribute_all(model, store)?;
    Ok(metric_from_records(
        &records,
        unit_kind,
        cap,
        options.roster.as_deref(),
    ))
}

pub fn metric_from_records(
    records: &[UtilityRecord],
    unit_kind: UnitKind,
    cap: f64,
    roster: Option<&[String]>,
) -> MetricTable {
    let (sums, _) = raw_sums(records, unit_kind);
    let mut values: BTreeMap<String, f64> =
        sums.into_iter().map(|(k, v)| (k, v.min(cap))).collect();
    for unit in roster.into_iter().flatten() {
        values.entry(unit.clone()).or_insert(0.0);
    }
    let name = if cap.is_finite() {
        format!("utility_capped_{cap}")
    } else {
        "utility".to_string()
    };
    MetricTable { name, values }
}

#[derive(Debug, Serialize, Deserialize)]
struct UtilityRow {
    event_id: String,
    user_id: String,
    listing_id: String,
    search_id: Option<String>,
    t: usize,
    v_prev: f64,
    v_curr: f64,
    utility: f64,
    ts_ms: i64,
}

pub fn write_utilities<W: Write>(w: W, records: &[UtilityRecord]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(UtilityRow {
            event_id: r.event_id.clone(),
            user_id: r.user_id.clone(),
            listing_id: r.listing_id.clone(),
            search_id: r.search_id.clone(),
            t: r.t,
            v_prev: r.v_prev,
            v_curr: r.v_curr,
            utility: r.utility,
            ts_ms: r.ts_ms,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_utilities<R: Read>(r: R) -> Result<Vec<UtilityRecord>, AttributionError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (n, row) in rdr.deserialize::<UtilityRow>().enumerate() {
        let row = row.map_err(|e| AttributionError::Csv {
            line: n + 2,
            message: e.to_string(),
        })?;
        out.push(UtilityRecord {
            event_id: row.event_id,
            user_id: row.user_id,
            listing_id: row.listing_id,
            search_id: row.search_id.filter(|s| !s.is_empty()),
            t: row.t,
            v_prev: row.v_prev,
            v_curr: row.v_curr,
            utility: row.utility,
            ts_ms: row.ts_ms,
        });
    }
    Ok(out)
}

/// Writes `unit_kind,unit_id,raw,capped`; with several caps the capped column
/// becomes one `capped_<cap>` column per cap.
pub fn write_aggregates<W: Write>(
    w: W,
    unit_kind: UnitKind,
    raw: &BTreeMap<String, f64>,
    caps: &[f64],
) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "unit_kind".to_string(),
        "unit_id".to_string(),
        "raw".to_string(),
    ];
    if caps.len() == 1 {
        header.push("capped".into());
    } else {
        header.extend(caps.iter().map(|c| format!("capped_{c}")));
    }
    wtr.write_record(&header)?;
    for (unit, &sum) in raw {
        let mut rec = vec![unit_kind.to_string(), unit.clone(), sum.to_string()];
        rec.extend(caps.iter().map(|&c| sum.min(c).to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
