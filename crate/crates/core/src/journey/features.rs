use super::EpisodeState;

pub const FEATURE_COUNT: usize = 18;

/// Slot names in encoding order. The order is part of the model file
/// contract: append new slots, never reorder.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "photos_viewed",
    "reviews_viewed",
    "amenities_viewed",
    "calendar_checked",
    "host_contacted",
    "reserve_clicked",
    "dwell_s",
    "view_count",
    "price_per_night",
    "review_score",
    "review_count",
    "availability_days",
    "past_bookings",
    "location_bucket",
    "num_guests",
    "trip_dates_present",
    "stay_nights",
    "lead_time_days",
];

/// Value used for absent listing attributes, guests, stay length and lead time.
pub const MISSING: f64 = -1.0;

pub(crate) mod slot {
    pub const PHOTOS: usize = 0;
    pub const REVIEWS: usize = 1;
    pub const AMENITIES: usize = 2;
    pub const CALENDAR: usize = 3;
    pub const HOST: usize = 4;
    pub const RESERVE: usize = 5;
    pub const DWELL: usize = 6;
    pub const VIEW_COUNT: usize = 7;
    pub const LEAD_TIME: usize = 17;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

pub fn feature_vector(state: &EpisodeState) -> FeatureVector {
    let e = &state.engagement;
    let mut v = [MISSING; FEATURE_COUNT];
    v[0] = e.photos_viewed as f64;
    v[1] = e.reviews_viewed as f64;
    v[2] = e.amenities_viewed as f64;
    v[3] = e.calendar_checked as f64;
    v[4] = e.host_contacted as f64;
    v[5] = e.reserve_clicked as f64;
    v[6] = e.dwell_seconds;
    v[7] = state.view_count as f64;
    if let Some(l) = &state.listing {
        v[8] = l.price_per_night;
        v[9] = l.review_score;
        v[10] = l.review_count as f64;
        v[11] = l.availability_days as f64;
        v[12] = l.past_bookings as f64;
        v[13] = l.location_bucket as f64;
    }
    if let Some(g) = state.trip.num_guests {
        v[14] = g as f64;
    }
    v[15] = if state.trip.has_dates() { 1.0 } else { 0.0 };
    if let Some(n) = state.trip.stay_nights() {
        v[16] = n as f64;
    }
    if let (true, Some(lt)) = (state.trip.has_dates(), state.lead_time_days) {
        v[17] = lt as f64;
    }
    FeatureVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::journey::{EngagementSignals, TripContext};

    fn first_view() -> EpisodeState {
        EpisodeState {
            user_id: "u".into(),
            listing_id: "l".into(),
            step_index: 1,
            view_position: 1,
            window_start_ms: 1,
            window_end_ms: 1,
            engagement: EngagementSignals::default(),
            view_count: 1,
            listing: None,
            trip: TripContext::default(),
            lead_time_days: None,
            label: None,
        }
    }

    #[test]
    fn zero_engagement_first_view() {
        let v = feature_vector(&first_view());
        assert!(v.0[..7].iter().all(|&x| x == 0.0));
        assert_eq!(v.0[slot::VIEW_COUNT], 1.0);
    }

    #[test]
    fn absent_trip_dates_use_sentinel_and_flag() {
        let v = feature_vector(&first_view());
        assert_eq!(v.0[slot::LEAD_TIME], MISSING);
        assert_eq!(v.0[15], 0.0);
        assert_eq!(v.0[16], MISSING);
    }

    #[test]
    fn encoding_is_bit_identical() {
        let s = first_view();
        let a = feature_vector(&s);
        let b = feature_vector(&s);
        assert!(a
            .0
            .iter()
            .zip(b.0.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn names_resolve_to_slots() {
        assert_eq!(feature_index("dwell_s"), Some(slot::DWELL));
        assert_eq!(feature_index("price_per_night"), Some(8));
        assert_eq!(feature_index("num_guests"), Some(14));
        assert_eq!(feature_index("nope"), None);
        assert_eq!(
            [
                slot::PHOTOS,
                slot::REVIEWS,
                slot::AMENITIES,
                slot::CALENDAR,
                slot::HOST,
                slot::RESERVE
            ],
            [0, 1, 2, 3, 4, 5]
        );
    }
}
