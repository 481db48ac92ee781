//! Interaction logs, per-pair timelines and cumulative episode states.
//!
//! A [`JourneyStore`] is built once from parsed events, booking outcomes and
//! listing attributes and is immutable afterwards. Each `(user, listing)`
//! pair owns a timeline of page-views ordered by `(timestamp, event_id)`.
//! The state for the view at position `i` sums the engagement of every view
//! `j <= i` whose timestamp lies within `lookback` of view `i`; the window
//! slides per state, so stale views are evicted from a state without being
//! removed from the store.

mod features;
pub mod io;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::Dataset;
use crate::DAY_MS;

pub(crate) use features::slot;
pub use features::{
    feature_index, feature_vector, FeatureVector, FEATURE_COUNT, FEATURE_NAMES, MISSING,
};

/// Default lookback for states and training labels.
pub const DEFAULT_LOOKBACK_DAYS: i64 = 14;

#[derive(Debug, Error)]
pub enum JourneyError {
    #[error("pair ({user_id}, {listing_id}) not found")]
    PairNotFound { user_id: String, listing_id: String },
    #[error("pair ({user_id}, {listing_id}) has {views} views, position {position} out of range")]
    StepOutOfRange {
        user_id: String,
        listing_id: String,
        position: usize,
        views: usize,
    },
    #[error("invalid event {event_id}: {reason}")]
    InvalidEvent { event_id: String, reason: String },
    #[error("invalid listing {listing_id}: {reason}")]
    InvalidListing { listing_id: String, reason: String },
}

/// Engagement on one page-view, or summed over a window of views.
///
/// On a single event `host_contacted` and `reserve_clicked` are 0/1 flags;
/// in a cumulative state they are counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementSignals {
    pub photos_viewed: u32,
    pub reviews_viewed: u32,
    pub amenities_viewed: u32,
    pub calendar_checked: u32,
    pub host_contacted: u32,
    pub reserve_clicked: u32,
    pub dwell_seconds: f64,
}

impl EngagementSignals {
    pub fn accumulate(&mut self, other: &EngagementSignals) {
        self.photos_viewed += other.photos_viewed;
        self.reviews_viewed += other.reviews_viewed;
        self.amenities_viewed += other.amenities_viewed;
        self.calendar_checked += other.calendar_checked;
        self.host_contacted += other.host_contacted;
        self.reserve_clicked += other.reserve_clicked;
        self.dwell_seconds += other.dwell_seconds;
    }

    /// Counts in fixed order, dwell excluded.
    pub fn counts(&self) -> [u32; 6] {
        [
            self.photos_viewed,
            self.reviews_viewed,
            self.amenities_viewed,
            self.calendar_checked,
            self.host_contacted,
            self.reserve_clicked,
        ]
    }

    fn validate_single(&self) -> Result<(), String> {
        if self.host_contacted > 1 || self.reserve_clicked > 1 {
            return Err("host_contacted and reserve_clicked must be 0 or 1".into());
        }
        if !self.dwell_seconds.is_finite() || self.dwell_seconds < 0.0 {
            return Err(format!(
                "dwell_s must be finite and >= 0, got {}",
                self.dwell_seconds
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripContext {
    pub checkin: Option<NaiveDate>,
    pub checkout: Option<NaiveDate>,
    pub num_guests: Option<u32>,
}

impl TripContext {
    pub fn has_dates(&self) -> bool {
        self.checkin.is_some() && self.checkout.is_some()
    }

    pub fn stay_nights(&self) -> Option<i64> {
        match (self.checkin, self.checkout) {
            (Some(a), Some(b)) => Some((b - a).num_days()),
            _ => None,
        }
    }

    /// Days from the event's UTC date to check-in.
    pub fn lead_time_days(&self, timestamp_ms: i64) -> Option<i64> {
        let checkin = self.checkin?;
        Some((checkin - utc_date(timestamp_ms)).num_days())
    }

    fn validate(&self) -> Result<(), String> {
        if let (Some(a), Some(b)) = (self.checkin, self.checkout) {
            if b <= a {
                return Err(format!("checkout {b} must be after checkin {a}"));
            }
        }
        if self.num_guests == Some(0) {
            return Err("num_guests must be >= 1 when present".into());
        }
        Ok(())
    }
}

pub fn utc_date(timestamp_ms: i64) -> NaiveDate {
    DateTime::from_timestamp_millis(timestamp_ms)
        .map(|d| d.date_naive())
        .unwrap_or_default()
}

/// One listing page-view.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEvent {
    pub event_id: String,
    pub timestamp_ms: i64,
    pub user_id: String,
    pub listing_id: String,
    pub search_id: Option<String>,
    pub assignment_key: Option<String>,
    pub engagement: EngagementSignals,
    pub trip: TripContext,
}

impl InteractionEvent {
    pub fn validate(&self) -> Result<(), JourneyError> {
        let invalid = |reason: String| JourneyError::InvalidEvent {
            event_id: self.event_id.clone(),
            reason,
        };
        if self.event_id.is_empty() {
            return Err(invalid("empty event_id".into()));
        }
        if self.timestamp_ms <= 0 {
            return Err(invalid(format!(
                "ts_ms must be > 0, got {}",
                self.timestamp_ms
            )));
        }
        self.engagement.validate_single().map_err(invalid)?;
        self.trip.validate().map_err(invalid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListingAttributes {
    pub listing_id: String,
    pub price_per_night: f64,
    pub review_score: f64,
    pub review_count: u32,
    pub availability_days: u32,
    pub past_bookings: u32,
    pub location_bucket: u32,
}

impl ListingAttributes {
    pub fn validate(&self) -> Result<(), JourneyError> {
        let invalid = |reason: String| JourneyError::InvalidListing {
            listing_id: self.listing_id.clone(),
            reason,
        };
        if !(self.price_per_night.is_finite() && self.price_per_night > 0.0) {
            return Err(invalid(format!(
                "price_per_night must be > 0, got {}",
                self.price_per_night
            )));
        }
        if !(0.0..=5.0).contains(&self.review_score) {
            return Err(invalid(format!(
                "review_score must be in [0,5], got {}",
                self.review_score
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookingOutcome {
    pub user_id: String,
    pub listing_id: String,
    pub timestamp_ms: i64,
    pub booked: bool,
}

/// Cumulative state `S_t` of one pair at one page-view.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub user_id: String,
    pub listing_id: String,
    /// Step index within the lookback window (1-based); equals `view_count`.
    pub step_index: usize,
    /// Position of the anchoring view in the pair's full timeline (1-based).
    pub view_position: usize,
    pub window_start_ms: i64,
    pub window_end_ms: i64,
    pub engagement: EngagementSignals,
    pub view_count: usize,
    pub listing: Option<ListingAttributes>,
    /// Trip context of the anchoring (latest) view.
    pub trip: TripContext,
    pub lead_time_days: Option<i64>,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreConfig {
    pub lookback_ms: i64,
    /// Drop views that follow a pair's first reserve click.
    pub exclude_post_reserve: bool,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            lookback_ms: DEFAULT_LOOKBACK_DAYS * DAY_MS,
            exclude_post_reserve: true,
        }
    }
}

/// Counters produced while building a store.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub events_in: usize,
    pub events_kept: usize,
    pub duplicate_events: usize,
    pub invalid_events: usize,
    pub post_reserve_excluded: usize,
    pub pairs: usize,
    pub positive_outcomes: usize,
    pub conflicting_outcomes: usize,
    pub listings: usize,
    pub views_missing_listing: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairKey {
    pub user_id: String,
    pub listing_id: String,
}

impl PairKey {
    pub fn new(user_id: impl Into<String>, listing_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            listing_id: listing_id.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Timeline {
    views: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct JourneyStore {
    config: StoreConfig,
    events: Vec<InteractionEvent>,
    pairs: BTreeMap<PairKey, Timeline>,
    bookings: BTreeMap<PairKey, Vec<i64>>,
    listings: HashMap<String, ListingAttributes>,
    report: IngestReport,
}

impl JourneyStore {
    /// Builds a store. Invalid events are dropped and counted; duplicated
    /// event ids keep one canonical copy regardless of arrival order.
    pub fn ingest(
        events: impl IntoIterator<Item = InteractionEvent>,
        outcomes: impl IntoIterator<Item = BookingOutcome>,
        listings: impl IntoIterator<Item = ListingAttributes>,
        config: StoreConfig,
    ) -> Self {
        let mut report = IngestReport::default();
        let mut all: Vec<InteractionEvent> = Vec::new();
        for e in events {
            report.events_in += 1;
            if e.validate().is_err() {
                report.invalid_events += 1;
                continue;
            }
            all.push(e);
        }
        all.sort_by(canonical_order);
        let before = all.len();
        all.dedup_by(|b, a| a.event_id == b.event_id);
        report.duplicate_events = before - all.len();

        // Pair timelines in (timestamp, event_id) order.
        all.sort_by(|a, b| {
            (&a.user_id, &a.listing_id, a.timestamp_ms, &a.event_id).cmp(&(
                &b.user_id,
                &b.listing_id,
                b.timestamp_ms,
                &b.event_id,
            ))
        });
        let mut pairs: BTreeMap<PairKey, Timeline> = BTreeMap::new();
        let mut kept = Vec::with_capacity(all.len());
        let mut i = 0;
        while i < all.len() {
            let mut j = i;
            while j < all.len()
                && all[j].user_id == all[i].user_id
                && all[j].listing_id == all[i].listing_id
            {
                j += 1;
            }
            let mut end = j;
            if config.exclude_post_reserve {
                if let Some(k) = (i..j).find(|&k| all[k].engagement.reserve_clicked > 0) {
                    end = k + 1;
                }
            }
            report.post_reserve_excluded += j - end;
            let key = PairKey::new(all[i].user_id.clone(), all[i].listing_id.clone());
            let start = kept.len();
            kept.extend(all[i..end].iter().cloned());
            pairs.insert(
                key,
                Timeline {
                    views: (start..kept.len()).collect(),
                },
            );
            i = j;
        }

        let listings: HashMap<String, ListingAttributes> = listings
            .into_iter()
            .map(|l| (l.listing_id.clone(), l))
            .collect();
        report.views_missing_listing = kept
            .iter()
            .filter(|e| !listings.contains_key(&e.listing_id))
            .count();

        let mut bookings: BTreeMap<PairKey, Vec<i64>> = BTreeMap::new();
        for o in outcomes {
            if o.booked {
                bookings
                    .entry(PairKey::new(o.user_id, o.listing_id))
                    .or_default()
                    .push(o.timestamp_ms);
            }
        }
        for ts in bookings.values_mut() {
            ts.sort_unstable();
            ts.dedup();
            // At most one positive outcome per pair per window.
            let mut accepted: Vec<i64> = Vec::with_capacity(ts.len());
            for &t in ts.iter() {
                match accepted.last() {
                    Some(&prev) if t - prev <= config.lookback_ms => {
                        report.conflicting_outcomes += 1
                    }
                    _ => accepted.push(t),
                }
            }
            *ts = accepted;
        }
        report.positive_outcomes = bookings.values().map(Vec::len).sum();
        report.events_kept = kept.len();
        report.pairs = pairs.len();
        report.listings = listings.len();

        Self {
            config,
            events: kept,
            pairs,
            bookings,
            listings,
            report,
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    /// Pairs in `(user_id, listing_id)` order.
    pub fn pairs(&self) -> impl Iterator<Item = &PairKey> {
        self.pairs.keys()
    }

    /// Kept events grouped by pair, in pair then timeline order.
    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn listing(&self, listing_id: &str) -> Option<&ListingAttributes> {
        self.listings.get(listing_id)
    }

    /// Positive booking timestamps of a pair, ascending.
    pub fn bookings(&self, key: &PairKey) -> &[i64] {
        self.bookings.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_bookings(&self) -> impl Iterator<Item = (&PairKey, &[i64])> {
        self.bookings.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Smallest and largest kept event timestamps.
    pub fn time_range(&self) -> Option<(i64, i64)> {
        let min = self.events.iter().map(|e| e.timestamp_ms).min()?;
        let max = self.events.iter().map(|e| e.timestamp_ms).max()?;
        Some((min, max))
    }

    /// The pair's timeline in order.
    pub fn pair_views(
        &self,
        user_id: &str,
        listing_id: &str,
    ) -> Result<Vec<&InteractionEvent>, JourneyError> {
        let timeline = self.timeline(user_id, listing_id)?;
        Ok(timeline.views.iter().map(|&i| &self.events[i]).collect())
    }

    fn timeline(&self, user_id: &str, listing_id: &str) -> Result<&Timeline, JourneyError> {
        self.pairs
            .get(&PairKey::new(user_id, listing_id))
            .ok_or_else(|| JourneyError::PairNotFound {
                user_id: user_id.to_string(),
                listing_id: listing_id.to_string(),
            })
    }

    /// State anchored at the view at `position` (1-based) of the pair's timeline.
    pub fn state_at(
        &self,
        user_id: &str,
        listing_id: &str,
        position: usize,
    ) -> Result<EpisodeState, JourneyError> {
        let timeline = self.timeline(user_id, listing_id)?;
        if position == 0 || position > timeline.views.len() {
            return Err(JourneyError::StepOutOfRange {
                user_id: user_id.to_string(),
                listing_id: listing_id.to_string(),
                position,
                views: timeline.views.len(),
            });
        }
        let views: Vec<&InteractionEvent> =
            timeline.views.iter().map(|&i| &self.events[i]).collect();
        let start = window_start(&views, position - 1, self.config.lookback_ms);
        Ok(self.build_state(&views, start, position - 1))
    }

    /// States for every view of the pair, in timeline order.
    pub fn states(
        &self,
        user_id: &str,
        listing_id: &str,
    ) -> Result<Vec<EpisodeState>, JourneyError> {
        let timeline = self.timeline(user_id, listing_id)?;
        let views: Vec<&InteractionEvent> =
            timeline.views.iter().map(|&i| &self.events[i]).collect();
        let mut start = 0;
        let mut out = Vec::with_capacity(views.len());
        for i in 0..views.len() {
            while views[i].timestamp_ms - views[start].timestamp_ms > self.config.lookback_ms {
                start += 1;
            }
            out.push(self.build_state(&views, start, i));
        }
        Ok(out)
    }

    fn build_state(&self, views: &[&InteractionEvent], start: usize, i: usize) -> EpisodeState {
        let anchor = views[i];
        let mut engagement = EngagementSignals::default();
        // Fixed summation order keeps dwell sums reproducible.
        for v in &views[start..=i] {
            engagement.accumulate(&v.engagement);
        }
        let count = i - start + 1;
        EpisodeState {
            user_id: anchor.user_id.clone(),
            listing_id: anchor.listing_id.clone(),
            step_index: count,
            view_position: i + 1,
            window_start_ms: views[start].timestamp_ms,
            window_end_ms: anchor.timestamp_ms,
            engagement,
            view_count: count,
            listing: self.listings.get(&anchor.listing_id).cloned(),
            trip: anchor.trip.clone(),
            lead_time_days: anchor.trip.lead_time_days(anchor.timestamp_ms),
            label: None,
        }
    }

    /// One labeled example per `(pair, view)`.
    ///
    /// A view is positive iff a booking of the pair happens at or after it
    /// within `label_horizon_days`. Views after the pair's first booking are
    /// skipped.
    pub fn build_training_set(&self, label_horizon_days: i64) -> TrainingSet {
        let horizon = label_horizon_days * DAY_MS;
        let mut data = Dataset::new(FEATURE_COUNT);
        let mut rows = Vec::new();
        for key in self.pairs.keys() {
            let bookings = self.bookings(key);
            let first_booking = bookings.first().copied();
            let states = self
                .states(&key.user_id, &key.listing_id)
                .expect("pair from own index");
            for mut state in states {
                let ts = state.window_end_ms;
                if matches!(first_booking, Some(b) if ts > b) {
                    continue;
                }
                let label = bookings.iter().any(|&b| b >= ts && b - ts <= horizon);
                state.label = Some(label);
                data.push(&feature_vector(&state).0, label);
                rows.push(ExampleRef {
                    pair: key.clone(),
                    view_position: state.view_position,
                    timestamp_ms: ts,
                });
            }
        }
        TrainingSet { data, rows }
    }
}

/// Total order used to pick one copy among duplicated event ids.
fn canonical_order(a: &InteractionEvent, b: &InteractionEvent) -> std::cmp::Ordering {
    a.event_id
        .cmp(&b.event_id)
        .then(a.timestamp_ms.cmp(&b.timestamp_ms))
        .then_with(|| a.user_id.cmp(&b.user_id))
        .then_with(|| a.listing_id.cmp(&b.listing_id))
        .then_with(|| a.search_id.cmp(&b.search_id))
        .then_with(|| a.assignment_key.cmp(&b.assignment_key))
        .then_with(|| a.engagement.counts().cmp(&b.engagement.counts()))
        .then_with(|| {
            a.engagement
                .dwell_seconds
                .total_cmp(&b.engagement.dwell_seconds)
        })
        .then_with(|| {
            (a.trip.checkin, a.trip.checkout, a.trip.num_guests).cmp(&(
                b.trip.checkin,
                b.trip.checkout,
                b.trip.num_guests,
            ))
        })
}

fn window_start(views: &[&InteractionEvent], i: usize, lookback_ms: i64) -> usize {
    let anchor = views[i].timestamp_ms;
    (0..=i)
        .find(|&j| anchor - views[j].timestamp_ms <= lookback_ms)
        .unwrap_or(i)
}

/// Provenance of one training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleRef {
    pub pair: PairKey,
    pub view_position: usize,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub data: Dataset,
    pub rows: Vec<ExampleRef>,
}

impl TrainingSet {
    /// Time span of the examples, used by the scoring leakage guard.
    pub fn time_range(&self) -> Option<(i64, i64)> {
        let min = self.rows.iter().map(|r| r.timestamp_ms).min()?;
        let max = self.rows.iter().map(|r| r.timestamp_ms).max()?;
        Some((min, max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn view(id: &str, ts: i64, photos: u32) -> InteractionEvent {
        InteractionEvent {
            event_id: id.into(),
            timestamp_ms: ts,
            user_id: "u1".into(),
            listing_id: "l1".into(),
            search_id: Some("s1".into()),
            assignment_key: None,
            engagement: EngagementSignals {
                photos_viewed: photos,
                dwell_seconds: 1.5,
                ..Default::default()
            },
            trip: TripContext::default(),
        }
    }

    fn store(events: Vec<InteractionEvent>, outcomes: Vec<BookingOutcome>) -> JourneyStore {
        JourneyStore::ingest(events, outcomes, Vec::new(), StoreConfig::default())
    }

    fn booking(ts: i64) -> BookingOutcome {
        BookingOutcome {
            user_id: "u1".into(),
            listing_id: "l1".into(),
            timestamp_ms: ts,
            booked: true,
        }
    }

    #[test]
    fn shuffled_events_are_sorted_into_one_timeline() {
        let s = store(
            vec![
                view("c", 3_000, 1),
                view("a", 1_000, 2),
                view("b", 2_000, 3),
            ],
            vec![],
        );
        let views = s.pair_views("u1", "l1").unwrap();
        let ids: Vec<_> = views.iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn duplicate_event_id_is_dropped_and_counted() {
        let s = store(vec![view("a", 1_000, 2), view("a", 1_000, 2)], vec![]);
        assert_eq!(s.pair_views("u1", "l1").unwrap().len(), 1);
        assert_eq!(s.report().duplicate_events, 1);
    }

    #[test]
    fn timestamp_ties_break_on_event_id() {
        let s = store(vec![view("b", 1_000, 1), view("a", 1_000, 2)], vec![]);
        let views = s.pair_views("u1", "l1").unwrap();
        assert_eq!(views[0].event_id, "a");
    }

    #[test]
    fn cumulative_photos_sum_over_steps() {
        let s = store(
            vec![
                view("a", 1_000, 2),
                view("b", 2_000, 3),
                view("c", 3_000, 1),
            ],
            vec![],
        );
        let st = s.state_at("u1", "l1", 3).unwrap();
        assert_eq!(st.engagement.photos_viewed, 6);
        assert_eq!(st.view_count, 3);
        assert_eq!(st.step_index, 3);
    }

    #[test]
    fn late_view_evicts_stale_window() {
        let s = store(
            vec![view("a", 1_000, 2), view("b", 1_000 + 15 * DAY_MS, 5)],
            vec![],
        );
        let late = s.state_at("u1", "l1", 2).unwrap();
        assert_eq!(late.view_count, 1);
        assert_eq!(late.step_index, 1);
        assert_eq!(late.engagement.photos_viewed, 5);
        assert_eq!(late.window_start_ms, late.window_end_ms);
    }

    #[test]
    fn unknown_pair_and_out_of_range_step_are_errors() {
        let s = store(vec![view("a", 1_000, 2)], vec![]);
        assert!(matches!(
            s.state_at("u9", "l1", 1),
            Err(JourneyError::PairNotFound { .. })
        ));
        assert!(matches!(
            s.state_at("u1", "l1", 2),
            Err(JourneyError::StepOutOfRange { .. })
        ));
        assert!(matches!(
            s.state_at("u1", "l1", 0),
            Err(JourneyError::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_events_are_dropped() {
        let mut bad = view("x", 0, 1);
        bad.timestamp_ms = 0;
        let mut flag = view("y", 5, 1);
        flag.engagement.reserve_clicked = 2;
        let s = store(vec![bad, flag, view("a", 10, 1)], vec![]);
        assert_eq!(s.report().invalid_events, 2);
        assert_eq!(s.report().events_kept, 1);
    }

    #[test]
    fn views_after_first_reserve_click_are_excluded() {
        let mut r = view("b", 2_000, 1);
        r.engagement.reserve_clicked = 1;
        let events = vec![view("a", 1_000, 1), r, view("c", 3_000, 1)];
        let s = store(events.clone(), vec![]);
        assert_eq!(s.pair_views("u1", "l1").unwrap().len(), 2);
        assert_eq!(s.report().post_reserve_excluded, 1);

        let keep_all = JourneyStore::ingest(
            events,
            vec![],
            vec![],
            StoreConfig {
                exclude_post_reserve: false,
                ..Default::default()
            },
        );
        assert_eq!(keep_all.pair_views("u1", "l1").unwrap().len(), 3);
    }

    #[test]
    fn booked_pair_yields_positive_examples() {
        let s = store(
            vec![
                view("a", 1_000, 1),
                view("b", 2_000, 1),
                view("c", 3_000, 1),
            ],
            vec![booking(4_000)],
        );
        let t = s.build_training_set(14);
        assert_eq!(t.data.labels(), &[1, 1, 1]);
    }

    #[test]
    fn unbooked_pair_yields_negative_examples() {
        let s = store(
            vec![
                view("a", 1_000, 1),
                view("b", 2_000, 1),
                view("c", 3_000, 1),
            ],
            vec![],
        );
        assert_eq!(s.build_training_set(14).data.labels(), &[0, 0, 0]);
    }

    #[test]
    fn views_after_booking_are_not_training_examples() {
        let s = store(
            vec![
                view("a", 1_000, 1),
                view("b", 2_000, 1),
                view("c", 5_000, 1),
            ],
            vec![booking(3_000)],
        );
        let t = s.build_training_set(14);
        assert_eq!(t.data.labels(), &[1, 1]);
        assert!(t.rows.iter().all(|r| r.timestamp_ms <= 3_000));
    }

    #[test]
    fn booking_beyond_label_horizon_is_negative() {
        let s = store(
            vec![view("a", 1_000, 1), view("b", 1_000 + 10 * DAY_MS, 1)],
            vec![booking(1_000 + 16 * DAY_MS)],
        );
        assert_eq!(s.build_training_set(14).data.labels(), &[0, 1]);
    }

    #[test]
    fn empty_store_builds_empty_training_set() {
        let s = store(vec![], vec![]);
        assert!(s.build_training_set(14).data.is_empty());
        assert!(s.time_range().is_none());
    }

    #[test]
    fn second_booking_within_window_is_a_conflict() {
        let s = store(
            vec![view("a", 1_000, 1)],
            vec![booking(2_000), booking(3_000)],
        );
        assert_eq!(s.report().conflicting_outcomes, 1);
        assert_eq!(s.bookings(&PairKey::new("u1", "l1")), &[2_000]);
    }

    #[test]
    fn lead_time_counts_days_to_checkin() {
        let trip = TripContext {
            checkin: NaiveDate::from_ymd_opt(2022, 1, 11),
            checkout: NaiveDate::from_ymd_opt(2022, 1, 13),
            num_guests: Some(2),
        };
        // 2022-01-01T12:00Z
        assert_eq!(trip.lead_time_days(1_641_038_400_000), Some(10));
        assert_eq!(trip.stay_nights(), Some(2));
    }

    #[test]
    fn checkout_before_checkin_is_invalid() {
        let mut e = view("a", 10, 1);
        e.trip.checkin = NaiveDate::from_ymd_opt(2022, 1, 5);
        e.trip.checkout = NaiveDate::from_ymd_opt(2022, 1, 5);
        assert!(e.validate().is_err());
    }
}
