use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use surrogacy::interleaving::{
    assign_credit, team_draft, verify_team_draft, CreditOptions, CreditPolicy, InterleavedList,
    Session, SessionEvent, Team,
};

fn ids(v: &[u32]) -> Vec<String> {
    v.iter().map(|i| i.to_string()).collect()
}

fn render(il: &InterleavedList) -> String {
    il.items
        .iter()
        .map(|(id, t)| format!("{id}{}", if *t == Team::A { 'a' } else { 'b' }))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Every outcome team_draft can produce, found by sweeping draft seeds.
fn reachable(a: &[String], b: &[String], k: usize) -> BTreeSet<String> {
    (0..400)
        .map(|s| render(&team_draft(a, b, k, s).unwrap()))
        .collect()
}

/// Independent enumeration of legal drafts: branch on the coin at every
/// round with equal counts, otherwise let the team behind pick.
fn enumerate(a: &[String], b: &[String], k: usize) -> BTreeSet<String> {
    fn go(
        a: &[String],
        b: &[String],
        k: usize,
        placed: Vec<(String, Team)>,
        out: &mut BTreeSet<String>,
    ) {
        let free = |l: &[String]| {
            l.iter()
                .find(|x| !placed.iter().any(|(p, _)| p == *x))
                .cloned()
        };
        let (fa, fb) = (free(a), free(b));
        if placed.len() == k || (fa.is_none() && fb.is_none()) {
            out.insert(render(&InterleavedList {
                items: placed,
                draft_seed: 0,
                round_first: vec![],
            }));
            return;
        }
        let na = placed.iter().filter(|(_, t)| *t == Team::A).count();
        let nb = placed.len() - na;
        let mut pickers = vec![];
        if na <= nb {
            pickers.push(Team::A);
        }
        if nb <= na {
            pickers.push(Team::B);
        }
        let mut moved = false;
        for t in pickers {
            let pick = if t == Team::A { fa.clone() } else { fb.clone() };
            if let Some(p) = pick {
                let mut next = placed.clone();
                next.push((p, t));
                go(a, b, k, next, out);
                moved = true;
            }
        }
        if !moved {
            // The team due to pick is exhausted; the other one continues.
            let (p, t) = match (fa.clone(), fb.clone()) {
                (Some(p), _) => (p, Team::A),
                (_, Some(p)) => (p, Team::B),
                _ => unreachable!(),
            };
            let mut next = placed.clone();
            next.push((p, t));
            go(a, b, k, next, out);
        }
    }
    let mut out = BTreeSet::new();
    go(a, b, k, vec![], &mut out);
    out
}

#[test]
fn disjoint_pairs_have_four_drafts() {
    let (a, b) = (ids(&[1, 2]), ids(&[3, 4]));
    let expected: BTreeSet<String> = ["1a 3b 2a 4b", "1a 3b 4b 2a", "3b 1a 2a 4b", "3b 1a 4b 2a"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(enumerate(&a, &b, 4), expected);
    assert_eq!(reachable(&a, &b, 4), expected);
}

#[test]
fn swapped_top_two_have_two_drafts() {
    let (a, b) = (ids(&[1, 2, 3]), ids(&[2, 1, 3]));
    let expected: BTreeSet<String> = ["1a 2b", "2b 1a"].iter().map(|s| s.to_string()).collect();
    assert_eq!(reachable(&a, &b, 2), expected);
    assert_eq!(enumerate(&a, &b, 2), expected);
}

#[test]
fn reachable_drafts_match_enumeration_on_small_cases() {
    let cases: [(&[u32], &[u32], usize); 6] = [
        (&[1, 2, 3], &[1, 2, 3], 3),
        (&[1, 2, 3], &[3, 2, 1], 3),
        (&[1, 2, 3, 4], &[5], 4),
        (&[1], &[2, 3, 4], 3),
        (&[1, 2, 3], &[2, 4, 1, 5], 5),
        (&[1, 2, 3, 4], &[4, 3, 2, 1], 2),
    ];
    for (a, b, k) in cases {
        let (a, b) = (ids(a), ids(b));
        assert_eq!(
            reachable(&a, &b, k),
            enumerate(&a, &b, k),
            "{a:?} {b:?} k={k}"
        );
    }
}

fn ranking() -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set(0u32..20, 0..10)
        .prop_map(|s| s.into_iter().collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| ids(&v))
}

proptest! {
    #[test]
    fn drafts_pass_the_verifier(a in ranking(), b in ranking(), k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let il = team_draft(&a, &b, k, seed).unwrap();
        prop_assert!(verify_team_draft(&a, &b, k, &il).is_ok());
    }

    #[test]
    fn counts_stay_balanced_while_both_lists_have_items(a in ranking(), b in ranking(), k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let il = team_draft(&a, &b, k, seed).unwrap();
        let mut placed = Vec::new();
        let (mut na, mut nb) = (0i64, 0i64);
        for (id, t) in &il.items {
            placed.push(id.clone());
            match t { Team::A => na += 1, Team::B => nb += 1 }
            let left_a = a.iter().any(|x| !placed.contains(x));
            let left_b = b.iter().any(|x| !placed.contains(x));
            if left_a && left_b {
                prop_assert!((na - nb).abs() <= 1);
            }
        }
    }

    #[test]
    fn shorter_display_is_a_prefix(a in ranking(), b in ranking(), k in 1usize..12, seed in any::<u64>()) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let long = team_draft(&a, &b, k + 3, seed).unwrap();
        let short = team_draft(&a, &b, k, seed).unwrap();
        prop_assert_eq!(&long.items[..short.items.len()], &short.items[..]);
    }

    #[test]
    fn tampered_team_labels_are_caught(a in ranking(), b in ranking(), seed in any::<u64>()) {
        let k = 6;
        prop_assume!(!a.is_empty() && !b.is_empty());
        let mut il = team_draft(&a, &b, k, seed).unwrap();
        let (id, t) = il.items[0].clone();
        let flipped = if t == Team::A { Team::B } else { Team::A };
        // Only a change the rules can tell apart: the item is not the other team's top pick.
        let other_top = if flipped == Team::A { &a[0] } else { &b[0] };
        prop_assume!(*other_top != id);
        il.items[0] = (id, flipped);
        prop_assert!(verify_team_draft(&a, &b, k, &il).is_err());
    }

    #[test]
    fn first_click_credit_never_exceeds_all_click_credit(
        a in ranking(), b in ranking(), seed in any::<u64>(),
        clicks in prop::collection::vec((0u32..24, any::<bool>()), 0..12),
        booked in prop::option::of(0u32..24),
    ) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let il = team_draft(&a, &b, 8, seed).unwrap();
        let events: Vec<SessionEvent> = clicks.iter().enumerate().map(|(i, (l, from_list))| SessionEvent {
            event_id: format!("e{i}"),
            listing_id: l.to_string(),
            ts_ms: i as i64,
            from_list: *from_list,
        }).collect();
        let utilities: HashMap<String, f64> = events.iter().map(|e| (e.event_id.clone(), 0.1)).collect();
        let session = Session {
            query_id: "q".into(),
            user_id: "u".into(),
            interleaved: il,
            events,
            booked_listing: booked.map(|l| l.to_string()),
        };
        let all = assign_credit(&session, CreditPolicy::BookedAllClicks, None, CreditOptions::default()).unwrap();
        let first = assign_credit(&session, CreditPolicy::BookedFirstClick, None, CreditOptions::default()).unwrap();
        prop_assert!(first.credit_a <= all.credit_a && first.credit_b <= all.credit_b);
        prop_assert!(first.credit_a + first.credit_b <= 1.0);
        let u = assign_credit(&session, CreditPolicy::UtilityDelta, Some(&utilities), CreditOptions::default()).unwrap();
        let counted = session.events.iter().filter(|e| e.from_list && session.interleaved.team_of(&e.listing_id).is_some()).count();
        prop_assert!((u.credit_a + u.credit_b - 0.1 * counted as f64).abs() < 1e-12);
    }
}
