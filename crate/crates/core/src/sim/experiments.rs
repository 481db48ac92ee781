use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::catalog::Catalog;
use super::config::{Design, SimConfig, SimError};
use super::engine::{Arm, Click, PairTruth, Population, Ranker, SearchRecord, World};
use super::truth::TruthModel;
use crate::interleaving::{team_draft, Session, SessionEvent};
use crate::journey::io::{write_events, write_listings, write_outcomes};
use crate::journey::{BookingOutcome, InteractionEvent, ListingAttributes};
use crate::rng::{mix64, stream, Domain};

/// Smallest Monte Carlo size accepted by [`true_ate`].
pub const MIN_MC_USERS: usize = 10_000;

/// Logs and latent states of one simulated population.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub listings: Vec<ListingAttributes>,
    /// Sorted by user, then time.
    pub events: Vec<InteractionEvent>,
    /// Positive outcomes only.
    pub outcomes: Vec<BookingOutcome>,
    /// User arm (user-level design) or search cell (grid design), keyed by unit id.
    pub assignments: BTreeMap<String, String>,
    pub searches: Vec<SearchRecord>,
    pub pairs: Vec<PairTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub n_mc: usize,
    /// Expected bookings per user in each arm.
    pub mean_treatment: f64,
    pub mean_control: f64,
    pub ate: f64,
    pub se: f64,
    /// `mean_treatment / mean_control - 1`.
    pub relative_lift: f64,
    pub relative_se: f64,
}

/// Contents of the truth sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub model: TruthModel,
    /// Absent for the search-grid design.
    pub ate: Option<AteEstimate>,
    pub pairs: Vec<PairTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub id: String,
    pub alpha: f64,
    pub beta: f64,
    pub share: f64,
}

#[derive(Debug, Clone)]
pub struct InterleavingRun {
    pub sessions: Vec<Session>,
    /// `(ranking A, ranking B)` behind each session, for legality audits.
    pub rankings: Vec<(Vec<String>, Vec<String>)>,
    pub listings: Vec<ListingAttributes>,
    pub events: Vec<InteractionEvent>,
    pub outcomes: Vec<BookingOutcome>,
}

fn world_parts(cfg: &SimConfig) -> Result<(Catalog, TruthModel), SimError> {
    cfg.validate()?;
    let truth = TruthModel::from_config(cfg);
    Ok((Catalog::generate(cfg, &truth), truth))
}

fn user_arm(cfg: &SimConfig, pop: Population, i: usize) -> Arm {
    let offset = if pop == Population::Pretrain {
        1u64 << 56
    } else {
        0
    };
    let u: f64 = stream(cfg.seed, Domain::Assignment, offset | i as u64).random();
    if u < cfg.treatment_share {
        Arm::Treatment
    } else {
        Arm::Control
    }
}

fn run_population(cfg: &SimConfig, pop: Population, n: usize) -> Result<SimOutput, SimError> {
    let (catalog, truth) = world_parts(cfg)?;
    let world = World {
        cfg,
        catalog: &catalog,
        truth: &truth,
    };
    let mut out = SimOutput {
        listings: catalog.listings.clone(),
        events: Vec::new(),
        outcomes: Vec::new(),
        assignments: BTreeMap::new(),
        searches: Vec::new(),
        pairs: Vec::new(),
    };
    for i in 0..n {
        let arm = match cfg.design {
            Design::UserAb => Some(user_arm(cfg, pop, i)),
            Design::SearchGrid => None,
        };
        let (run, searches) = world.run_user(pop, i, arm);
        match arm {
            Some(a) => {
                out.assignments
                    .insert(super::engine::user_id(pop, i), a.as_str().to_string());
            }
            None => {
                for s in &searches {
                    out.assignments
                        .insert(s.search_id.clone(), s.assignment.clone());
                }
            }
        }
        out.events.extend(run.events);
        out.outcomes.extend(run.outcomes);
        out.pairs.extend(run.pairs);
        out.searches.extend(searches);
    }
    Ok(out)
}

/// Simulates the scoring population under the configured design.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    run_population(cfg, Population::Scoring, cfg.n_users)
}

/// Simulates `n_pretrain_users` users who finish before the scoring period starts.
pub fn simulate_pretrain(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    run_population(cfg, Population::Pretrain, cfg.n_pretrain_users)
}

/// Search-level randomization over the ranker grid.
pub fn run_grid(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    let grid = SimConfig {
        design: Design::SearchGrid,
        ..cfg.clone()
    };
    simulate(&grid)
}

pub fn grid_cells(cfg: &SimConfig) -> Vec<GridCell> {
    let mut cells = Vec::new();
    for (a, &alpha) in cfg.grid_alphas.iter().enumerate() {
        for (b, &beta) in cfg.grid_betas.iter().enumerate() {
            cells.push(GridCell {
                id: format!("a{a}_b{b}"),
                alpha,
                beta,
                share: cfg.grid_cell_share,
            });
        }
    }
    cells
}

/// Monte Carlo booking effect of `treatment_effect` versus no treatment.
///
/// Both arms replay each user with the same random numbers. A pair books
/// with probability `(1 - dropout) * P(high intent)` fixed when the pair
/// starts, so each user contributes the sum of that probability over the
/// pairs its clicks start, and no engagement needs to be drawn.
pub fn true_ate(cfg: &SimConfig, n_mc: usize) -> Result<AteEstimate, SimError> {
    if n_mc < MIN_MC_USERS {
        return Err(SimError::Config(format!(
            "n_mc must be >= {MIN_MC_USERS}, got {n_mc}"
        )));
    }
    let (catalog, truth) = world_parts(cfg)?;
    let world = World {
        cfg,
        catalog: &catalog,
        truth: &truth,
    };
    let n = n_mc as f64;
    let (mut st, mut sc, mut stt, mut scc, mut stc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n_mc {
        let (t, c) = world.expected_bookings(i);
        st += t;
        sc += c;
        stt += t * t;
        scc += c * c;
        stc += t * c;
    }
    let (mt, mc) = (st / n, sc / n);
    let var_t = (stt - n * mt * mt) / (n - 1.0);
    let var_c = (scc - n * mc * mc) / (n - 1.0);
    let cov = (stc - n * mt * mc) / (n - 1.0);
    let var_d = (var_t + var_c - 2.0 * cov).max(0.0);
    let ratio = mt / mc;
    // Delta method for mt / mc with correlated numerator and denominator.
    let var_r = (var_t - 2.0 * ratio * cov + ratio * ratio * var_c).max(0.0) / (n * mc * mc);
    Ok(AteEstimate {
        n_mc,
        mean_treatment: mt,
        mean_control: mc,
        ate: mt - mc,
        se: (var_d / n).sqrt(),
        relative_lift: ratio - 1.0,
        relative_se: var_r.sqrt(),
    })
}

impl GroundTruth {
    /// Sidecar for a scoring run; the effect oracle uses `cfg.truth_mc_users`.
    pub fn build(cfg: &SimConfig, out: &SimOutput) -> Result<Self, SimError> {
        let ate = match cfg.design {
            Design::UserAb => Some(true_ate(cfg, cfg.truth_mc_users.max(MIN_MC_USERS))?),
            Design::SearchGrid => None,
        };
        Ok(Self {
            seed: cfg.seed,
            model: TruthModel::from_config(cfg),
            ate,
            pairs: out.pairs.clone(),
        })
    }
}

/// Interleaves two rankers for `n_queries` single-search users.
pub fn simulate_interleaving(
    cfg: &SimConfig,
    a: Ranker,
    b: Ranker,
    n_queries: usize,
) -> Result<InterleavingRun, SimError> {
    let (catalog, truth) = world_parts(cfg)?;
    let world = World {
        cfg,
        catalog: &catalog,
        truth: &truth,
    };
    let mut run = InterleavingRun {
        sessions: Vec::with_capacity(n_queries),
        rankings: Vec::with_capacity(n_queries),
        listings: catalog.listings.clone(),
        events: Vec::new(),
        outcomes: Vec::new(),
    };
    for q in 0..n_queries {
        let user = world.draw_user(Population::Query, q);
        let draw = world.draw_search(&user, 0);
        let ts = user.arrival_ms;
        let name = |s: usize| catalog.listings[user.candidates[s]].listing_id.clone();
        let list_a: Vec<String> = world.rank(&user, &draw, a).into_iter().map(name).collect();
        let list_b: Vec<String> = world.rank(&user, &draw, b).into_iter().map(name).collect();
        let seed = mix64(cfg.seed ^ mix64(q as u64 + 1));
        let il = team_draft(&list_a, &list_b, cfg.display_k, seed).expect("nonempty lists");
        let slot_of: HashMap<&str, usize> = user
            .candidates
            .iter()
            .enumerate()
            .map(|(s, &l)| (catalog.listings[l].listing_id.as_str(), s))
            .collect();
        let clicks: Vec<Click> = world
            .clicks(il.items.len(), &draw, 1.0)
            .into_iter()
            .enumerate()
            .map(|(order, pos)| Click {
                ts: World::click_time(ts, order, pos),
                slot: slot_of[il.items[pos].0.as_str()],
                search: 0,
            })
            .collect();
        let query_id = format!("{}-s01", user.user_id);
        let pairs = world.play_pairs(
            &user,
            &clicks,
            std::slice::from_ref(&query_id),
            &[None],
            None,
        );
        let booked_listing = pairs.outcomes.first().map(|o| o.listing_id.clone());
        let events = pairs
            .events
            .iter()
            .map(|e| SessionEvent {
                event_id: e.event_id.clone(),
                listing_id: e.listing_id.clone(),
                ts_ms: e.timestamp_ms,
                from_list: e.search_id.is_some(),
            })
            .collect();
        run.sessions.push(Session {
            query_id,
            user_id: user.user_id.clone(),
            interleaved: il,
            events,
            booked_listing,
        });
        run.rankings.push((list_a, list_b));
        run.events.extend(pairs.events);
        run.outcomes.extend(pairs.outcomes);
    }
    Ok(run)
}

fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_assignments(
    path: &Path,
    assignments: &BTreeMap<String, String>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["unit_id", "assignment"])?;
    for (unit, arm) in assignments {
        w.write_record([unit, arm])?;
    }
    w.flush()
}

/// Writes `events.jsonl`, `outcomes.jsonl`, `listings.csv`,
/// `assignments.csv` and `truth.json`, plus `train_events.jsonl` and
/// `train_outcomes.jsonl` when a pretraining population is given. Returns
/// the written paths.
pub fn write_outputs(
    dir: &Path,
    out: &SimOutput,
    truth: &GroundTruth,
    pretrain: Option<&SimOutput>,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> std::io::Result<()>| {
        let p = dir.join(name);
        f(&p)?;
        paths.push(p);
        std::io::Result::Ok(())
    };
    emit("events.jsonl", &|p| write_events(create(p)?, &out.events))?;
    emit("outcomes.jsonl", &|p| {
        write_outcomes(create(p)?, &out.outcomes)
    })?;
    emit("listings.csv", &|p| {
        Ok(write_listings(create(p)?, &out.listings)?)
    })?;
    emit("assignments.csv", &|p| {
        write_assignments(p, &out.assignments)
    })?;
    emit("truth.json", &|p| {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, truth)?;
        writeln!(w)?;
        w.flush()
    })?;
    if let Some(pre) = pretrain {
        emit("train_events.jsonl", &|p| {
            write_events(create(p)?, &pre.events)
        })?;
        emit("train_outcomes.jsonl", &|p| {
            write_outcomes(create(p)?, &pre.outcomes)
        })?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n_users: 300,
            n_listings: 100,
            ..SimConfig::default()
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.outcomes, b.outcomes);
        assert_eq!(a.assignments, b.assignments);
        assert!(!a.events.is_empty());
        assert_eq!(a.assignments.len(), 300);
    }

    #[test]
    fn events_are_sorted_by_user_then_time_with_unique_ids() {
        let out = simulate(&small()).unwrap();
        for w in out.events.windows(2) {
            assert!((&w[0].user_id, w[0].timestamp_ms) <= (&w[1].user_id, w[1].timestamp_ms));
        }
        let ids: std::collections::HashSet<&str> =
            out.events.iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids.len(), out.events.len());
    }

    #[test]
    fn null_effect_has_zero_ate() {
        let cfg = SimConfig {
            treatment_effect: 1.0,
            ..small()
        };
        let ate = true_ate(&cfg, 10_000).unwrap();
        assert_eq!(ate.ate, 0.0);
        assert_eq!(ate.se, 0.0);
    }

    #[test]
    fn higher_click_multiplier_raises_bookings() {
        let cfg = SimConfig {
            treatment_effect: 1.2,
            ..small()
        };
        let ate = true_ate(&cfg, 10_000).unwrap();
        assert!(ate.ate > 5.0 * ate.se, "{ate:?}");
        assert!(ate.relative_lift > 0.0);
    }

    #[test]
    fn monte_carlo_se_scales_with_root_n() {
        let cfg = SimConfig {
            treatment_effect: 1.2,
            ..small()
        };
        let a = true_ate(&cfg, 20_000).unwrap();
        let b = true_ate(&cfg, 40_000).unwrap();
        let r = a.se / b.se;
        assert!((r / 2f64.sqrt() - 1.0).abs() < 0.1, "{r}");
        assert_eq!(true_ate(&cfg, 20_000).unwrap(), a);
        assert!(true_ate(&cfg, 100).is_err());
    }

    #[test]
    fn grid_assigns_every_search() {
        let out = run_grid(&small()).unwrap();
        assert_eq!(out.assignments.len(), out.searches.len());
        for e in out.events.iter().filter(|e| e.search_id.is_some()) {
            let key = e.assignment_key.as_ref().unwrap();
            assert_eq!(&out.assignments[e.search_id.as_ref().unwrap()], key);
        }
        let one = SimConfig {
            grid_alphas: vec![0.5],
            grid_betas: vec![0.0],
            grid_cell_share: 1.0,
            ..small()
        };
        let out = run_grid(&one).unwrap();
        assert!(out.assignments.values().all(|c| c == "a0_b0"));
        assert_eq!(grid_cells(&one).len(), 1);
    }

    #[test]
    fn interleaving_sessions_follow_the_draft() {
        let r = Ranker {
            alpha: 0.0,
            beta: 0.0,
        };
        let run = simulate_interleaving(&small(), r, r, 200).unwrap();
        assert_eq!(run.sessions.len(), 200);
        for s in &run.sessions {
            for e in s.events.iter().filter(|e| e.from_list) {
                assert!(s.interleaved.team_of(&e.listing_id).is_some());
            }
        }
    }
}
