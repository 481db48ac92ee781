//! Team-draft interleaving and per-query credit assignment.
//!
//! Each round starts when both teams have drafted equally often; a seeded
//! fair coin decides which team picks first, and a team always picks its
//! highest-ranked listing not yet placed. When one list runs out the other
//! team keeps drafting until `k` items are shown or the union is exhausted,
//! so the team counts can drift apart only after a list is exhausted.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

use crate::rng::{stream, Domain};

#[derive(Debug, Error, PartialEq)]
pub enum InterleaveError {
    #[error("both ranked lists are empty")]
    EmptyLists,
    #[error("display size must be >= 1")]
    ZeroDisplay,
    #[error("query {query}: no utility for page-view {event}")]
    MissingUtility { query: String, event: String },
    #[error("illegal interleaving at position {position}: {reason}")]
    Illegal { position: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Team {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterleavedList {
    pub items: Vec<(String, Team)>,
    pub draft_seed: u64,
    /// Coin outcome of each round: the team entitled to pick first.
    pub round_first: Vec<Team>,
}

impl InterleavedList {
    pub fn team_of(&self, listing_id: &str) -> Option<Team> {
        self.items
            .iter()
            .find(|(l, _)| l == listing_id)
            .map(|(_, t)| *t)
    }

    pub fn count(&self, team: Team) -> usize {
        self.items.iter().filter(|(_, t)| *t == team).count()
    }
}

fn next_unplaced<'a>(list: &'a [String], placed: &HashSet<&str>) -> Option<&'a String> {
    list.iter().find(|l| !placed.contains(l.as_str()))
}

/// Drafts up to `k` items from two rankings with a per-round coin from `seed`.
pub fn team_draft(
    list_a: &[String],
    list_b: &[String],
    k: usize,
    seed: u64,
) -> Result<InterleavedList, InterleaveError> {
    if list_a.is_empty() && list_b.is_empty() {
        return Err(InterleaveError::EmptyLists);
    }
    if k == 0 {
        return Err(InterleaveError::ZeroDisplay);
    }
    let mut rng = stream(seed, Domain::Draft, 0);
    let mut placed: HashSet<&str> = HashSet::new();
    let mut items = Vec::new();
    let mut round_first = Vec::new();
    let (mut na, mut nb) = (0usize, 0usize);
    while items.len() < k {
        let next_a = next_unplaced(list_a, &placed);
        let next_b = next_unplaced(list_b, &placed);
        if next_a.is_none() && next_b.is_none() {
            break;
        }
        let wanted = if na == nb {
            let t = if rng.random::<bool>() {
                Team::A
            } else {
                Team::B
            };
            round_first.push(t);
            t
        } else if na < nb {
            Team::A
        } else {
            Team::B
        };
        let (team, pick) = match (wanted, next_a, next_b) {
            (Team::A, Some(x), _) => (Team::A, x),
            (Team::B, _, Some(x)) => (Team::B, x),
            (_, Some(x), None) => (Team::A, x),
            (_, None, Some(x)) => (Team::B, x),
            _ => unreachable!(),
        };
        placed.insert(pick.as_str());
        items.push((pick.clone(), team));
        match team {
            Team::A => na += 1,
            Team::B => nb += 1,
        }
    }
    Ok(InterleavedList {
        items,
        draft_seed: seed,
        round_first,
    })
}

/// Checks an interleaving against the team-draft rules and its recorded coins.
///
/// Rules: no duplicates; length is `min(k, |A ∪ B|)`; each item is its team's
/// highest-ranked unplaced listing; the team behind in count picks when it
/// can; at equal counts the recorded coin decides unless that team's list is
/// exhausted.
pub fn verify_team_draft(
    list_a: &[String],
    list_b: &[String],
    k: usize,
    il: &InterleavedList,
) -> Result<(), InterleaveError> {
    let illegal =
        |position: usize, reason: String| Err(InterleaveError::Illegal { position, reason });
    let union: HashSet<&str> = list_a.iter().chain(list_b).map(String::as_str).collect();
    if il.items.len() != k.min(union.len()) {
        return illegal(
            il.items.len(),
            format!(
                "length {} != min(k, |union|) = {}",
                il.items.len(),
                k.min(union.len())
            ),
        );
    }
    let mut placed: HashSet<&str> = HashSet::new();
    let mut coins = il.round_first.iter();
    let (mut na, mut nb) = (0usize, 0usize);
    for (i, (item, team)) in il.items.iter().enumerate() {
        if placed.contains(item.as_str()) {
            return illegal(i, format!("{item} placed twice"));
        }
        let own = match team {
            Team::A => list_a,
            Team::B => list_b,
        };
        let other = match team {
            Team::A => list_b,
            Team::B => list_a,
        };
        if next_unplaced(own, &placed) != Some(item) {
            return illegal(
                i,
                format!("{item} is not team {team:?}'s best unplaced listing"),
            );
        }
        let other_available = next_unplaced(other, &placed).is_some();
        let (mine, theirs) = match team {
            Team::A => (na, nb),
            Team::B => (nb, na),
        };
        if mine == theirs {
            let Some(&coin) = coins.next() else {
                return illegal(i, "round without a recorded coin".into());
            };
            if coin != *team && other_available {
                return illegal(i, format!("coin gave the first pick to {coin:?}"));
            }
        } else if mine > theirs && other_available {
            return illegal(i, format!("team {team:?} picked while ahead"));
        }
        placed.insert(item.as_str());
        match team {
            Team::A => na += 1,
            Team::B => nb += 1,
        }
    }
    if coins.next().is_some() {
        return illegal(il.items.len(), "unused coin flips".into());
    }
    Ok(())
}

/// One page-view in an interleaved search session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub event_id: String,
    pub listing_id: String,
    pub ts_ms: i64,
    /// Whether the view was a click on the interleaved result list.
    pub from_list: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub query_id: String,
    pub user_id: String,
    pub interleaved: InterleavedList,
    pub events: Vec<SessionEvent>,
    pub booked_listing: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditPolicy {
    UtilityDelta,
    BookedAllClicks,
    BookedFirstClick,
}

impl CreditPolicy {
    pub const ALL: [CreditPolicy; 3] = [
        CreditPolicy::UtilityDelta,
        CreditPolicy::BookedAllClicks,
        CreditPolicy::BookedFirstClick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CreditPolicy::UtilityDelta => "utility_delta",
            CreditPolicy::BookedAllClicks => "booked_all_clicks",
            CreditPolicy::BookedFirstClick => "booked_first_click",
        }
    }
}

impl std::str::FromStr for CreditPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CreditPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CreditEntry {
    pub query_id: String,
    pub policy: CreditPolicy,
    pub credit_a: f64,
    pub credit_b: f64,
    /// Events on listings that were not in the interleaved list.
    pub ignored_events: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CreditOptions {
    /// Credit utility of every view of a drafted listing, not only clicks from the list.
    pub utility_all_views: bool,
}

pub fn assign_credit(
    session: &Session,
    policy: CreditPolicy,
    utilities: Option<&HashMap<String, f64>>,
    options: CreditOptions,
) -> Result<CreditEntry, InterleaveError> {
    let mut credit = [0.0f64; 2];
    let slot = |t: Team| if t == Team::A { 0 } else { 1 };
    let mut ignored = 0;
    let mut first_seen = false;
    for e in &session.events {
        let Some(team) = session.interleaved.team_of(&e.listing_id) else {
            ignored += 1;
            continue;
        };
        match policy {
            CreditPolicy::UtilityDelta => {
                if !e.from_list && !options.utility_all_views {
                    continue;
                }
                let u = utilities.and_then(|m| m.get(&e.event_id)).ok_or_else(|| {
                    InterleaveError::MissingUtility {
                        query: session.query_id.clone(),
                        event: e.event_id.clone(),
                    }
                })?;
                credit[slot(team)] += u;
            }
            CreditPolicy::BookedAllClicks | CreditPolicy::BookedFirstClick => {
                if !e.from_list || session.booked_listing.as_deref() != Some(e.listing_id.as_str())
                {
                    continue;
                }
                if policy == CreditPolicy::BookedFirstClick && first_seen {
                    continue;
                }
                first_seen = true;
                credit[slot(team)] += 1.0;
            }
        }
    }
    Ok(CreditEntry {
        query_id: session.query_id.clone(),
        policy,
        credit_a: credit[0],
        credit_b: credit[1],
        ignored_events: ignored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerReport {
    pub policy: CreditPolicy,
    pub n_queries: usize,
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// `wins_a / (wins_a + wins_b)`; undefined when every query ties.
    pub win_rate_a: Option<f64>,
    /// Exact two-sided sign test.
    pub sign_test_p: Option<f64>,
    pub mean_diff: f64,
    pub diff_ci95: (f64, f64),
}

/// Two-sided exact binomial test of `wins` successes in `n` fair trials.
pub fn sign_test(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    let lo = b.cdf(wins as u64);
    let hi = if wins == 0 {
        1.0
    } else {
        b.sf(wins as u64 - 1)
    };
    (2.0 * lo.min(hi)).min(1.0)
}

/// Per-policy winner statistics over a ledger, in policy order.
pub fn winner_stats(ledger: &[CreditEntry]) -> Vec<WinnerReport> {
    let mut by_policy: BTreeMap<CreditPolicy, Vec<&CreditEntry>> = BTreeMap::new();
    for e in ledger {
        by_policy.entry(e.policy).or_default().push(e);
    }
    by_policy
        .into_iter()
        .map(|(policy, entries)| {
            let n = entries.len();
            let wins_a = entries.iter().filter(|e| e.credit_a > e.credit_b).count();
            let wins_b = entries.iter().filter(|e| e.credit_b > e.credit_a).count();
            let decided = wins_a + wins_b;
            let diffs: Vec<f64> = entries.iter().map(|e| e.credit_a - e.credit_b).collect();
            let mean = diffs.iter().sum::<f64>() / n as f64;
            let half = if n > 1 {
                let var =
                    diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
                1.96 * (var / n as f64).sqrt()
            } else {
                f64::INFINITY
            };
            WinnerReport {
                policy,
                n_queries: n,
                wins_a,
                wins_b,
                ties: n - decided,
                win_rate_a: (decided > 0).then(|| wins_a as f64 / decided as f64),
                sign_test_p: (decided > 0).then(|| sign_test(wins_a, decided)),
                mean_diff: mean,
                diff_ci95: (mean - half, mean + half),
            }
        })
        .collect()
}

pub fn write_sessions<W: Write>(mut w: W, sessions: &[Session]) -> std::io::Result<()> {
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sessions<R: BufRead>(r: R) -> std::io::Result<Vec<Session>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", n + 1),
            )
        })?;
        out.push(s);
    }
    Ok(out)
}
