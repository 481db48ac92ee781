use proptest::prelude::*;
use surrogacy::journey::{
    BookingOutcome, EngagementSignals, InteractionEvent, JourneyStore, StoreConfig, TripContext,
};
use surrogacy::DAY_MS;

fn event(i: usize, user: u8, listing: u8, ts: i64, photos: u32, reserve: bool) -> InteractionEvent {
    InteractionEvent {
        event_id: format!("e{i:03}"),
        timestamp_ms: ts,
        user_id: format!("u{user}"),
        listing_id: format!("l{listing}"),
        search_id: None,
        assignment_key: None,
        engagement: EngagementSignals {
            photos_viewed: photos,
            reserve_clicked: reserve as u32,
            dwell_seconds: photos as f64 * 1.5,
            ..Default::default()
        },
        trip: TripContext::default(),
    }
}

fn events(max: usize) -> impl Strategy<Value = Vec<InteractionEvent>> {
    prop::collection::vec(
        (
            0u8..3,
            0u8..3,
            0i64..40 * DAY_MS,
            0u32..6,
            prop::bool::weighted(0.05),
        ),
        1..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (u, l, ts, p, r))| event(i, u, l, ts, p, r))
            .collect()
    })
}

fn ingest(events: Vec<InteractionEvent>, outcomes: Vec<BookingOutcome>) -> JourneyStore {
    JourneyStore::ingest(events, outcomes, vec![], StoreConfig::default())
}

/// Sorted pair views recomputed directly from the raw events.
fn pair_views<'a>(
    events: &'a [InteractionEvent],
    user: &str,
    listing: &str,
) -> Vec<&'a InteractionEvent> {
    let mut v: Vec<&InteractionEvent> = events
        .iter()
        .filter(|e| e.user_id == user && e.listing_id == listing)
        .collect();
    v.sort_by(|a, b| (a.timestamp_ms, &a.event_id).cmp(&(b.timestamp_ms, &b.event_id)));
    if let Some(r) = v.iter().position(|e| e.engagement.reserve_clicked > 0) {
        v.truncate(r + 1);
    }
    v
}

proptest! {
    #[test]
    fn arrival_order_does_not_matter(evs in events(40), seed in any::<u64>()) {
        let mut shuffled = evs.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (a, b) = (ingest(evs, vec![]), ingest(shuffled, vec![]));
        prop_assert_eq!(a.events(), b.events());
        for key in a.pairs() {
            prop_assert_eq!(
                a.states(&key.user_id, &key.listing_id).unwrap(),
                b.states(&key.user_id, &key.listing_id).unwrap()
            );
        }
    }

    #[test]
    fn window_sums_match_brute_force(evs in events(40)) {
        let store = ingest(evs.clone(), vec![]);
        let lookback = StoreConfig::default().lookback_ms;
        for key in store.pairs() {
            let views = pair_views(&evs, &key.user_id, &key.listing_id);
            let states = store.states(&key.user_id, &key.listing_id).unwrap();
            prop_assert_eq!(states.len(), views.len());
            for (i, st) in states.iter().enumerate() {
                let anchor = views[i].timestamp_ms;
                let window: Vec<_> = views[..=i].iter().filter(|v| anchor - v.timestamp_ms <= lookback).collect();
                prop_assert_eq!(st.view_count, window.len());
                prop_assert_eq!(st.view_position, i + 1);
                let photos: u32 = window.iter().map(|v| v.engagement.photos_viewed).sum();
                prop_assert_eq!(st.engagement.photos_viewed, photos);
                prop_assert!(st.window_start_ms <= st.window_end_ms);
                prop_assert_eq!(&store.state_at(&key.user_id, &key.listing_id, i + 1).unwrap(), st);
            }
        }
    }

    #[test]
    fn later_events_leave_earlier_states_unchanged(evs in events(30), more in events(10)) {
        let before = ingest(evs.clone(), vec![]);
        let horizon = 40 * DAY_MS;
        let extended: Vec<InteractionEvent> = evs
            .iter()
            .cloned()
            .chain(more.into_iter().enumerate().map(|(i, mut e)| {
                e.event_id = format!("late{i:03}");
                e.timestamp_ms += horizon;
                e
            }))
            .collect();
        let after = ingest(extended, vec![]);
        for key in before.pairs() {
            let a = before.states(&key.user_id, &key.listing_id).unwrap();
            let b = after.states(&key.user_id, &key.listing_id).unwrap();
            prop_assert_eq!(&b[..a.len()], &a[..]);
        }
    }

    #[test]
    fn training_labels_follow_the_booking_horizon(evs in events(40), booked in prop::collection::vec((0u8..3, 0u8..3, 0i64..50 * DAY_MS), 0..4), horizon in 1i64..20) {
        let outcomes: Vec<BookingOutcome> = booked
            .iter()
            .map(|&(u, l, ts)| BookingOutcome { user_id: format!("u{u}"), listing_id: format!("l{l}"), timestamp_ms: ts, booked: true })
            .collect();
        let store = ingest(evs, outcomes);
        let set = store.build_training_set(horizon);
        prop_assert_eq!(set.rows.len(), set.data.len());
        prop_assert!(set.data.len() <= store.events().len());
        for (i, r) in set.rows.iter().enumerate() {
            let bookings = store.bookings(&r.pair);
            if let Some(&first) = bookings.first() {
                prop_assert!(r.timestamp_ms <= first);
            }
            let positive = bookings.iter().any(|&b| b >= r.timestamp_ms && b - r.timestamp_ms <= horizon * DAY_MS);
            prop_assert_eq!(set.data.labels()[i] == 1, positive);
        }
    }
}
