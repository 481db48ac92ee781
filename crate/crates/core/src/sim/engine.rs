use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use chrono::Days;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::catalog::Catalog;
use super::config::{Design, SimConfig};
use super::truth::{static_features, TruthModel};

/// Pending view: (timestamp, sequence, click index, search slot).
type QueuedView = (i64, u64, usize, Option<usize>);
use crate::journey::{utc_date, BookingOutcome, EngagementSignals, InteractionEvent, TripContext};
use crate::rng::{stream, Domain};
use crate::DAY_MS;

/// Revisits later than this after a pair's first view are dropped, which
/// keeps every pair inside one lookback window.
pub(crate) const MAX_PAIR_SPAN_MS: i64 = 12 * DAY_MS;

/// Time between the last pretraining arrival and the scoring start: long
/// enough for every pretraining search, revisit and booking to finish first.
pub(crate) fn pretrain_gap_ms(cfg: &SimConfig) -> i64 {
    (cfg.session_days.ceil() as i64 + 1) * DAY_MS + MAX_PAIR_SPAN_MS
}
const MIN_BOOKING_DELAY_MS: i64 = 5 * 60 * 1000;
const MAX_BOOKING_DELAY_MS: i64 = 6 * 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        }
    }
}

/// Ranking score `quality_weight * (1 - alpha) * quality - beta * price + relevance + noise`,
/// with quality and price standardized across the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranker {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRecord {
    pub search_id: String,
    pub user_id: String,
    pub timestamp_ms: i64,
    pub assignment: String,
    pub shown: Vec<String>,
    pub clicked: Vec<String>,
}

/// Latent state of one simulated (user, listing) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub user_id: String,
    pub listing_id: String,
    /// `P(high intent)` before any view.
    pub prior_intent: f64,
    pub high_intent: bool,
    pub dropped: bool,
    pub views: usize,
    pub booked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Population {
    Scoring,
    Pretrain,
    MonteCarlo,
    Query,
}

impl Population {
    fn domain(self) -> Domain {
        match self {
            Population::Scoring => Domain::User,
            Population::Pretrain => Domain::PretrainUser,
            Population::MonteCarlo => Domain::MonteCarlo,
            Population::Query => Domain::Query,
        }
    }

    fn prefix(self) -> char {
        match self {
            Population::Scoring => 'u',
            Population::Pretrain => 'p',
            Population::MonteCarlo => 'm',
            Population::Query => 'q',
        }
    }
}

const USER_STREAM: u64 = 0;
const SEARCH_STREAM: u64 = 1;
const PAIR_STREAM: u64 = 2;

fn sub_index(kind: u64, user: usize, j: usize) -> u64 {
    (kind << 56) | ((user as u64) << 16) | j as u64
}

pub(crate) fn user_id(pop: Population, i: usize) -> String {
    format!("{}{:07}", pop.prefix(), i + 1)
}

pub(crate) struct World<'a> {
    pub cfg: &'a SimConfig,
    pub catalog: &'a Catalog,
    pub truth: &'a TruthModel,
}

pub(crate) struct UserDraw {
    pub pop: Population,
    pub index: usize,
    pub user_id: String,
    pub arrival_ms: i64,
    pub trip: TripContext,
    /// Candidate listings (catalog indices) and their user-specific relevance.
    pub candidates: Vec<usize>,
    pub relevance: Vec<f64>,
    pub search_times: Vec<i64>,
}

pub(crate) struct SearchDraw {
    pub u_cell: f64,
    pub noise: Vec<f64>,
    pub click_u: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Click {
    pub ts: i64,
    pub slot: usize,
    pub search: usize,
}

pub(crate) struct PairsRun {
    pub events: Vec<InteractionEvent>,
    pub outcomes: Vec<BookingOutcome>,
    pub pairs: Vec<PairTruth>,
}

impl<'a> World<'a> {
    pub fn draw_user(&self, pop: Population, i: usize) -> UserDraw {
        let cfg = self.cfg;
        let mut rng = stream(cfg.seed, pop.domain(), sub_index(USER_STREAM, i, 0));
        let (lo, hi) = match pop {
            Population::Pretrain => {
                let end = cfg.start_ms - pretrain_gap_ms(cfg);
                (end - cfg.horizon_days * DAY_MS, end)
            }
            _ => (cfg.start_ms, cfg.start_ms + cfg.horizon_days * DAY_MS),
        };
        let arrival_ms = rng.random_range(lo..hi);

        let u_dates: f64 = rng.random();
        let lead: u64 = rng.random_range(7..=90);
        let nights: u64 = rng.random_range(1..=7);
        let u_guests: f64 = rng.random();
        let extra_guests = Poisson::new(1.0).expect("valid poisson").sample(&mut rng) as u32;
        let mut trip = TripContext::default();
        if u_dates < cfg.dates_present_prob {
            let checkin = utc_date(arrival_ms) + Days::new(lead);
            trip.checkin = Some(checkin);
            trip.checkout = Some(checkin + Days::new(nights));
        }
        if u_guests < cfg.guests_present_prob {
            trip.num_guests = Some(1 + extra_guests);
        }

        let candidates =
            rand::seq::index::sample(&mut rng, cfg.n_listings, cfg.candidates_per_user).into_vec();
        let rel = Normal::new(0.0, cfg.relevance_sd).expect("validated sd");
        let relevance = (0..candidates.len())
            .map(|_| rel.sample(&mut rng))
            .collect();

        let extra = if cfg.searches_mean > 0.0 {
            Poisson::new(cfg.searches_mean)
                .expect("validated mean")
                .sample(&mut rng) as usize
        } else {
            0
        };
        let n_searches = (1 + extra).min(u16::MAX as usize);
        let span = (cfg.session_days * DAY_MS as f64) as i64;
        let mut search_times = vec![arrival_ms];
        for _ in 1..n_searches {
            search_times.push(arrival_ms + rng.random_range(0..span.max(1)));
        }
        search_times.sort_unstable();
        UserDraw {
            pop,
            index: i,
            user_id: user_id(pop, i),
            arrival_ms,
            trip,
            candidates,
            relevance,
            search_times,
        }
    }

    pub fn draw_search(&self, user: &UserDraw, j: usize) -> SearchDraw {
        let cfg = self.cfg;
        let mut rng = stream(
            cfg.seed,
            user.pop.domain(),
            sub_index(SEARCH_STREAM, user.index, j),
        );
        let u_cell = rng.random();
        let noise_d = Normal::new(0.0, cfg.search_noise_sd).expect("validated sd");
        let noise = (0..user.candidates.len())
            .map(|_| noise_d.sample(&mut rng))
            .collect();
        let click_u = (0..cfg.display_k).map(|_| rng.random()).collect();
        SearchDraw {
            u_cell,
            noise,
            click_u,
        }
    }

    /// Candidate slots of the top `display_k` results, best first.
    pub fn rank(&self, user: &UserDraw, search: &SearchDraw, ranker: Ranker) -> Vec<usize> {
        let cfg = self.cfg;
        let scores: Vec<f64> = user
            .candidates
            .iter()
            .enumerate()
            .map(|(c, &l)| {
                cfg.quality_weight * (1.0 - ranker.alpha) * self.catalog.quality_z[l]
                    - ranker.beta * self.catalog.price_z[l]
                    + user.relevance[c]
                    + search.noise[c]
            })
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(cfg.display_k);
        order
    }

    /// Positions in `shown` that get clicked at click-rate multiplier `m`.
    pub fn clicks(&self, shown_len: usize, search: &SearchDraw, m: f64) -> Vec<usize> {
        let cfg = self.cfg;
        (0..shown_len)
            .filter(|&pos| {
                search.click_u[pos] < (cfg.ctr_top * cfg.ctr_decay.powi(pos as i32) * m).min(1.0)
            })
            .collect()
    }

    /// Timestamp of the `order`-th click (0-based) of a search at `position`.
    pub fn click_time(search_ts: i64, order: usize, position: usize) -> i64 {
        search_ts + 60_000 * (order as i64 + 1) + 1_000 * position as i64
    }

    /// Grid cell of a search, or `None` for the default ranker.
    pub fn cell(&self, search: &SearchDraw) -> Option<(usize, usize)> {
        let cfg = self.cfg;
        if cfg.grid_cell_share <= 0.0 {
            return None;
        }
        let k = (search.u_cell / cfg.grid_cell_share) as usize;
        let nb = cfg.grid_betas.len();
        (k < cfg.grid_alphas.len() * nb).then(|| (k / nb, k % nb))
    }

    /// `P(high intent)` of a pair before any view.
    pub fn prior_intent(&self, user: &UserDraw, slot: usize) -> f64 {
        let listing = &self.catalog.listings[user.candidates[slot]];
        self.truth
            .intent_probability(&static_features(listing, &user.trip))
    }

    /// Plays out every pair touched by `clicks`, views in time order.
    pub fn play_pairs(
        &self,
        user: &UserDraw,
        clicks: &[Click],
        search_ids: &[String],
        search_keys: &[Option<String>],
        revisit_key: Option<&str>,
    ) -> PairsRun {
        let cfg = self.cfg;
        let truth = self.truth;
        let mut heap: BinaryHeap<Reverse<QueuedView>> = BinaryHeap::new();
        let mut seq = 0u64;
        for c in clicks {
            heap.push(Reverse((c.ts, seq, c.slot, Some(c.search))));
            seq += 1;
        }
        let dists = EngagementDraws::new(truth);
        let mut pairs: BTreeMap<usize, PairSim> = BTreeMap::new();
        let mut events = Vec::new();
        while let Some(Reverse((ts, _, slot, search))) = heap.pop() {
            let pair = pairs.entry(slot).or_insert_with(|| {
                let mut rng = stream(
                    cfg.seed,
                    user.pop.domain(),
                    sub_index(PAIR_STREAM, user.index, slot),
                );
                let prior = self.prior_intent(user, slot);
                let high = rng.random::<f64>() < prior;
                let dropped = rng.random::<f64>() < cfg.exogenous_dropout;
                PairSim {
                    rng,
                    prior,
                    high,
                    dropped,
                    views: 0,
                    first_ts: ts,
                    last_ts: ts,
                    deep: false,
                    stopped: false,
                }
            });
            if pair.stopped {
                continue;
            }
            pair.views += 1;
            pair.last_ts = ts;
            let engagement = dists.draw(truth, &mut pair.rng, pair.views, pair.high);
            pair.deep |= engagement.reviews_viewed
                + engagement.amenities_viewed
                + engagement.calendar_checked
                > 0;
            events.push(InteractionEvent {
                event_id: format!("{}-e{:04}", user.user_id, events.len() + 1),
                timestamp_ms: ts,
                user_id: user.user_id.clone(),
                listing_id: self.catalog.listings[user.candidates[slot]]
                    .listing_id
                    .clone(),
                search_id: search.map(|j| search_ids[j].clone()),
                assignment_key: match search {
                    Some(j) => search_keys[j].clone(),
                    None => revisit_key.map(str::to_string),
                },
                engagement,
                trip: user.trip.clone(),
            });
            if engagement.reserve_clicked > 0 || pair.views >= cfg.max_views_per_pair {
                pair.stopped = true;
                continue;
            }
            let p = (cfg.revisit_base + if pair.deep { cfg.revisit_deep } else { 0.0 }).min(0.95);
            let u_rev: f64 = pair.rng.random();
            let u_delay: f64 = pair.rng.random();
            if u_rev < p {
                let delay = (-(cfg.revisit_mean_hours * 3_600_000.0) * (1.0 - u_delay).ln()) as i64;
                let next = ts + delay.max(1);
                if next <= pair.first_ts + MAX_PAIR_SPAN_MS {
                    heap.push(Reverse((next, seq, slot, None)));
                    seq += 1;
                }
            }
        }

        let mut outcomes = Vec::new();
        let mut truths = Vec::with_capacity(pairs.len());
        for (slot, mut pair) in pairs {
            let listing_id = &self.catalog.listings[user.candidates[slot]].listing_id;
            let u_book: f64 = pair.rng.random();
            let booked = pair.high && !pair.dropped;
            if booked {
                let delay = MIN_BOOKING_DELAY_MS
                    + (u_book * (MAX_BOOKING_DELAY_MS - MIN_BOOKING_DELAY_MS) as f64) as i64;
                outcomes.push(BookingOutcome {
                    user_id: user.user_id.clone(),
                    listing_id: listing_id.clone(),
                    timestamp_ms: pair.last_ts + delay,
                    booked: true,
                });
            }
            truths.push(PairTruth {
                user_id: user.user_id.clone(),
                listing_id: listing_id.clone(),
                prior_intent: pair.prior,
                high_intent: pair.high,
                dropped: pair.dropped,
                views: pair.views,
                booked,
            });
        }
        outcomes
            .sort_by(|a, b| (a.timestamp_ms, &a.listing_id).cmp(&(b.timestamp_ms, &b.listing_id)));
        PairsRun {
            events,
            outcomes,
            pairs: truths,
        }
    }

    /// One user under user-level or search-level randomization.
    pub fn run_user(
        &self,
        pop: Population,
        i: usize,
        arm: Option<Arm>,
    ) -> (PairsRun, Vec<SearchRecord>) {
        let cfg = self.cfg;
        let user = self.draw_user(pop, i);
        let m = if arm == Some(Arm::Treatment) {
            cfg.treatment_effect
        } else {
            1.0
        };
        let default = Ranker {
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let mut clicks = Vec::new();
        let mut ids = Vec::new();
        let mut keys = Vec::new();
        let mut records = Vec::new();
        for (j, &ts) in user.search_times.iter().enumerate() {
            let draw = self.draw_search(&user, j);
            let (ranker, key) = match (cfg.design, self.cell(&draw)) {
                (Design::SearchGrid, Some((a, b))) => (
                    Ranker {
                        alpha: cfg.grid_alphas[a],
                        beta: cfg.grid_betas[b],
                    },
                    format!("a{a}_b{b}"),
                ),
                (Design::SearchGrid, None) => (default, "default".to_string()),
                (Design::UserAb, _) => (default, arm.unwrap_or(Arm::Control).as_str().to_string()),
            };
            let shown = self.rank(&user, &draw, ranker);
            let clicked = self.clicks(shown.len(), &draw, m);
            for (order, &pos) in clicked.iter().enumerate() {
                clicks.push(Click {
                    ts: Self::click_time(ts, order, pos),
                    slot: shown[pos],
                    search: j,
                });
            }
            let id = format!("{}-s{:02}", user.user_id, j + 1);
            let name = |s: usize| self.catalog.listings[user.candidates[s]].listing_id.clone();
            records.push(SearchRecord {
                search_id: id.clone(),
                user_id: user.user_id.clone(),
                timestamp_ms: ts,
                assignment: key.clone(),
                shown: shown.iter().map(|&s| name(s)).collect(),
                clicked: clicked.iter().map(|&p| name(shown[p])).collect(),
            });
            ids.push(id);
            keys.push(Some(key));
        }
        let revisit_key = match cfg.design {
            Design::UserAb => Some(arm.unwrap_or(Arm::Control).as_str()),
            Design::SearchGrid => None,
        };
        (
            self.play_pairs(&user, &clicks, &ids, &keys, revisit_key),
            records,
        )
    }

    /// Expected bookings of one Monte Carlo user under both arms, with common random numbers.
    pub fn expected_bookings(&self, i: usize) -> (f64, f64) {
        let cfg = self.cfg;
        let user = self.draw_user(Population::MonteCarlo, i);
        let ranker = Ranker {
            alpha: cfg.alpha,
            beta: cfg.beta,
        };
        let n = user.candidates.len();
        let mut started = [vec![false; n], vec![false; n]];
        for j in 0..user.search_times.len() {
            let draw = self.draw_search(&user, j);
            let shown = self.rank(&user, &draw, ranker);
            for (arm, m) in [cfg.treatment_effect, 1.0].into_iter().enumerate() {
                for pos in self.clicks(shown.len(), &draw, m) {
                    started[arm][shown[pos]] = true;
                }
            }
        }
        let scale = 1.0 - cfg.exogenous_dropout;
        let mut out = [0.0; 2];
        for slot in 0..n {
            if started[0][slot] || started[1][slot] {
                let p = scale * self.prior_intent(&user, slot);
                for (o, s) in out.iter_mut().zip(&started) {
                    if s[slot] {
                        *o += p;
                    }
                }
            }
        }
        (out[0], out[1])
    }
}

struct PairSim {
    rng: ChaCha8Rng,
    prior: f64,
    high: bool,
    dropped: bool,
    views: usize,
    first_ts: i64,
    last_ts: i64,
    deep: bool,
    stopped: bool,
}

/// Per-view engagement distributions for both intent types.
struct EngagementDraws {
    flags: [[f64; 2]; 2],
    dwell: [Exp<f64>; 2],
}

impl EngagementDraws {
    fn new(truth: &TruthModel) -> Self {
        let flag = |k: usize| {
            let f = &truth.flags[k];
            [
                truth.flag_probability(f, false),
                truth.flag_probability(f, true),
            ]
        };
        let dwell = |high: bool| Exp::new(1.0 / truth.dwell_mean(high)).expect("validated dwell");
        Self {
            flags: [flag(0), flag(1)],
            dwell: [dwell(false), dwell(true)],
        }
    }

    fn draw(
        &self,
        truth: &TruthModel,
        rng: &mut ChaCha8Rng,
        t: usize,
        high: bool,
    ) -> EngagementSignals {
        let h = high as usize;
        let mut counts = [0u32; 4];
        for (c, s) in counts.iter_mut().zip(&truth.poisson) {
            let mean = truth.poisson_mean(s, t, high);
            *c = Poisson::new(mean).expect("positive mean").sample(rng) as u32;
        }
        let host = (rng.random::<f64>() < self.flags[0][h]) as u32;
        let reserve = (rng.random::<f64>() < self.flags[1][h]) as u32;
        let dwell_seconds = self.dwell[h].sample(rng);
        EngagementSignals {
            photos_viewed: counts[0],
            reviews_viewed: counts[1],
            amenities_viewed: counts[2],
            calendar_checked: counts[3],
            host_contacted: host,
            reserve_clicked: reserve,
            dwell_seconds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(cfg: &SimConfig) -> (Catalog, TruthModel) {
        let truth = TruthModel::from_config(cfg);
        (Catalog::generate(cfg, &truth), truth)
    }

    #[test]
    fn user_draws_are_independent_of_population_size() {
        let small = SimConfig {
            n_users: 10,
            ..SimConfig::default()
        };
        let big = SimConfig {
            n_users: 1000,
            ..small.clone()
        };
        let (cat, truth) = setup(&small);
        let a = World {
            cfg: &small,
            catalog: &cat,
            truth: &truth,
        }
        .run_user(Population::Scoring, 3, Some(Arm::Control));
        let b = World {
            cfg: &big,
            catalog: &cat,
            truth: &truth,
        }
        .run_user(Population::Scoring, 3, Some(Arm::Control));
        assert_eq!(a.0.events, b.0.events);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn pairs_stop_at_reserve_and_stay_in_one_window() {
        let cfg = SimConfig {
            p_reserve: 0.2,
            ..SimConfig::default()
        };
        let (cat, truth) = setup(&cfg);
        let w = World {
            cfg: &cfg,
            catalog: &cat,
            truth: &truth,
        };
        for i in 0..200 {
            let (run, _) = w.run_user(Population::Scoring, i, Some(Arm::Treatment));
            let mut by_pair: BTreeMap<&str, Vec<&InteractionEvent>> = BTreeMap::new();
            for e in &run.events {
                by_pair.entry(&e.listing_id).or_default().push(e);
            }
            for views in by_pair.values() {
                let first = views[0].timestamp_ms;
                assert!(views.iter().all(|v| v.timestamp_ms - first < 14 * DAY_MS));
                let reserve = views.iter().position(|v| v.engagement.reserve_clicked > 0);
                if let Some(k) = reserve {
                    assert_eq!(k, views.len() - 1);
                }
                assert!(views.len() <= cfg.max_views_per_pair);
            }
            for o in &run.outcomes {
                let last = by_pair[o.listing_id.as_str()].last().unwrap().timestamp_ms;
                assert!(o.timestamp_ms > last);
            }
            assert!(run
                .events
                .windows(2)
                .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
        }
    }

    #[test]
    fn pretrain_users_precede_scoring_period() {
        let cfg = SimConfig::default();
        let (cat, truth) = setup(&cfg);
        let w = World {
            cfg: &cfg,
            catalog: &cat,
            truth: &truth,
        };
        let latest = (cfg.session_days * DAY_MS as f64) as i64 + MAX_PAIR_SPAN_MS + DAY_MS / 4;
        assert!(cfg.start_ms - pretrain_gap_ms(&cfg) + latest < cfg.start_ms);
        for i in 0..1000 {
            let (run, _) = w.run_user(Population::Pretrain, i, Some(Arm::Control));
            assert!(run.events.iter().all(|e| e.timestamp_ms < cfg.start_ms));
            assert!(run.outcomes.iter().all(|o| o.timestamp_ms < cfg.start_ms));
        }
    }

    #[test]
    fn grid_shares_concentrate() {
        let cfg = SimConfig {
            design: Design::SearchGrid,
            grid_cell_share: 0.03,
            ..SimConfig::default()
        };
        let (cat, truth) = setup(&cfg);
        let w = World {
            cfg: &cfg,
            catalog: &cat,
            truth: &truth,
        };
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for i in 0..20_000 {
            let user = w.draw_user(Population::Scoring, i);
            for j in 0..user.search_times.len() {
                *counts
                    .entry(w.cell(&w.draw_search(&user, j)))
                    .or_insert(0usize) += 1;
                n += 1;
            }
        }
        assert_eq!(counts.len(), 26);
        for (cell, c) in counts {
            let share = c as f64 / n as f64;
            if cell.is_some() {
                assert!((share - 0.03).abs() < 0.003, "{cell:?} {share}");
            } else {
                assert!((share - 0.25).abs() < 0.01, "{share}");
            }
        }
    }
}
