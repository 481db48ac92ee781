use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{
    attribute, create_dir, evaluate, fmt_opt, interleave, load_config, read_outcomes_file, train,
    write_csv, write_text, AttributeArgs, EvaluateArgs, GridSpec, InterleaveArgs, PipelineError,
    Result, RunManifest, TrainArgs,
};
use crate::attribution::{read_utilities, UnitKind};
use crate::interleaving::CreditPolicy;
use crate::journey::PairKey;
use crate::learner::GbdtConfig;
use crate::sim::{Design, Ranker};
use crate::stats::plot::{Chart, Mark, Series};
use crate::stats::{uptick_day, utility_by_view_index, utility_share_trend};

/// Cohorts (views before booking) drawn in the behavior curves.
pub const COHORTS: [usize; 4] = [2, 4, 6, 8];
pub const COHORT_PERCENTILE: f64 = 75.0;
pub const SHARE_HORIZON_DAYS: i64 = 14;

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub gbdt: GbdtConfig,
    pub caps: Vec<f64>,
    pub queries: usize,
    pub out: PathBuf,
    pub force: bool,
}

impl ReportArgs {
    pub fn new(config: Option<PathBuf>, out: PathBuf) -> Self {
        Self {
            config,
            seed: None,
            gbdt: GbdtConfig::default(),
            caps: vec![1.0, 0.1],
            queries: 2000,
            out,
            force: false,
        }
    }
}

/// Runs simulate, train, attribute, evaluate and interleave into
/// subdirectories of `out`, then writes the behavioral readouts.
///
/// Without configured pretraining users the model is trained on as many
/// pretraining users as scoring users.
pub fn report_all(args: &ReportArgs) -> Result<RunManifest> {
    let mut cfg = load_config(args.config.as_deref(), args.seed)?;
    if cfg.n_pretrain_users == 0 {
        cfg.n_pretrain_users = cfg.n_users;
    }
    let out = &args.out;
    let dir = |name: &str| out.join(name);
    let mut manifest = RunManifest::new("report-all", Some(cfg.seed));
    if let Some(p) = &args.config {
        manifest.config_file(p)?;
    }

    let sim = dir("sim");
    super::simulate::run(&cfg, args.config.as_deref(), &sim)?;

    let mut t = TrainArgs::new(
        sim.join("train_events.jsonl"),
        sim.join("train_outcomes.jsonl"),
        sim.join("listings.csv"),
        dir("train"),
    );
    t.gbdt = args.gbdt.clone();
    t.seed = cfg.seed;
    t.force = args.force;
    train(&t)?;

    let grid = cfg.design == Design::SearchGrid;
    let (unit, baseline) = if grid {
        (UnitKind::Search, "booked_click")
    } else {
        (UnitKind::User, "booking")
    };
    let mut a = AttributeArgs::new(
        sim.join("events.jsonl"),
        sim.join("listings.csv"),
        dir("train").join("model.json"),
        dir("attribute"),
    );
    a.outcomes = Some(sim.join("outcomes.jsonl"));
    a.caps = args.caps.clone();
    a.unit = unit;
    a.roster = Some(sim.join("assignments.csv"));
    a.audit_telescoping = true;
    a.force = args.force;
    attribute(&a)?;

    let mut e = EvaluateArgs::new(
        vec![dir("attribute").join("metrics.csv")],
        sim.join("assignments.csv"),
        dir("evaluate"),
    );
    e.baseline = baseline.into();
    e.force = args.force;
    if grid {
        e.grid = Some(GridSpec {
            alphas: cfg.grid_alphas.clone(),
            betas: cfg.grid_betas.clone(),
            beta_index: 0,
        });
    }
    evaluate(&e)?;

    let ranker_a = Ranker {
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    let ranker_b = Ranker {
        alpha: cfg
            .grid_alphas
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        beta: cfg.beta,
    };
    interleave(&InterleaveArgs {
        config: Some(sim.join("config.toml")),
        seed: None,
        model: Some(dir("train").join("model.json")),
        ranker_a,
        ranker_b,
        queries: args.queries,
        policies: CreditPolicy::ALL.to_vec(),
        all_views: false,
        allow_overlap: false,
        out: dir("interleave"),
        force: args.force,
    })?;

    let behavior = dir("behavior");
    let outputs = write_behavior(
        &dir("attribute").join("utilities.csv"),
        &sim.join("outcomes.jsonl"),
        &behavior,
    )?;
    RunManifest::new("behavior", Some(cfg.seed)).finish(&behavior, &outputs)?;

    for sub in [
        "sim",
        "train",
        "attribute",
        "evaluate",
        "interleave",
        "behavior",
    ] {
        manifest.input(&dir(sub).join(super::MANIFEST_FILE))?;
    }
    manifest.finish(out, &[])
}

fn write_behavior(utilities: &Path, outcomes: &Path, dir: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(utilities).map_err(PipelineError::io(utilities))?;
    let records = read_utilities(std::io::BufReader::new(file))?;
    let outcomes = read_outcomes_file(outcomes)?;
    let mut first: BTreeMap<PairKey, i64> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.booked) {
        let e = first
            .entry(PairKey::new(&*o.user_id, &*o.listing_id))
            .or_insert(o.timestamp_ms);
        *e = (*e).min(o.timestamp_ms);
    }
    create_dir(dir)?;

    let curves = utility_by_view_index(&records, &first, &COHORTS, COHORT_PERCENTILE)?;
    let mut rows = Vec::new();
    let mut chart = Chart::new(
        &format!("P{} of view utility by view index", COHORT_PERCENTILE),
        "view index",
        "utility",
    );
    for c in &curves.curves {
        for (j, v) in c.curve.iter().enumerate() {
            rows.push(vec![
                c.views.to_string(),
                c.pairs.to_string(),
                (j + 1).to_string(),
                v.to_string(),
            ]);
        }
        chart = chart.with(Series {
            name: format!("{} views (n={})", c.views, c.pairs),
            x: (1..=c.views).map(|v| v as f64).collect(),
            y: c.curve.clone(),
            mark: Mark::Line,
        });
    }
    write_csv(
        dir,
        "cohort_curves.csv",
        &["cohort_views", "pairs", "view_index", "utility"],
        &rows,
    )?;
    write_text(dir, "cohort_curves.svg", &chart.to_svg())?;

    let bookings = first
        .iter()
        .map(|(k, &ts)| (k.user_id.as_str(), k.listing_id.as_str(), ts));
    let trend = utility_share_trend(&records, bookings, SHARE_HORIZON_DAYS)?;
    let rows: Vec<Vec<String>> = (0..trend.days.len())
        .map(|i| {
            vec![
                trend.days[i].to_string(),
                fmt_opt(trend.view_share[i]),
                fmt_opt(trend.utility_share[i]),
                trend.bookers_with_views[i].to_string(),
                trend.bookers_with_utility[i].to_string(),
            ]
        })
        .collect();
    write_csv(
        dir,
        "share_trend.csv",
        &[
            "day",
            "view_share",
            "utility_share",
            "bookers_with_views",
            "bookers_with_utility",
        ],
        &rows,
    )?;
    let x: Vec<f64> = trend.days.iter().map(|&d| d as f64).collect();
    let nan = |v: &[Option<f64>]| v.iter().map(|s| s.unwrap_or(f64::NAN)).collect::<Vec<_>>();
    let chart = Chart::new("Booked listing share by day before booking", "day", "share")
        .with(Series {
            name: "views".into(),
            x: x.clone(),
            y: nan(&trend.view_share),
            mark: Mark::Line,
        })
        .with(Series {
            name: "utility".into(),
            x,
            y: nan(&trend.utility_share),
            mark: Mark::Line,
        });
    write_text(dir, "share_trend.svg", &chart.to_svg())?;
    let upticks = vec![
        vec![
            "views".into(),
            fmt_opt(uptick_day(&trend.days, &trend.view_share, 3, 1.5).map(|d| d as f64)),
        ],
        vec![
            "utility".into(),
            fmt_opt(uptick_day(&trend.days, &trend.utility_share, 3, 1.5).map(|d| d as f64)),
        ],
    ];
    write_csv(
        dir,
        "share_uptick.csv",
        &["measure", "uptick_day"],
        &upticks,
    )?;
    Ok([
        "cohort_curves.csv",
        "cohort_curves.svg",
        "share_trend.csv",
        "share_trend.svg",
        "share_uptick.csv",
    ]
    .map(String::from)
    .into())
}
