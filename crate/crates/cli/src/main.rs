//! `surrogacy`: simulate, train, attribute, evaluate and interleave from the command line.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 validation or audit failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surrogacy::attribution::UnitKind;
use surrogacy::interleaving::CreditPolicy;
use surrogacy::learner::{GbdtConfig, LogisticConfig};
use surrogacy::pipeline::{
    self, load_config, parse_ranker, AttributeArgs, EvaluateArgs, GridSpec, InterleaveArgs,
    LearnerKind, PipelineError, ReportArgs, SimulateArgs, TrainArgs,
};
use surrogacy::sim::Ranker;

#[derive(Parser, Debug)]
#[command(
    name = "surrogacy",
    version,
    about = "Surrogate value functions, view utilities and experiment readouts"
)]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulator config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; created when missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Proceed when an input no longer matches its manifest hash.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate events, outcomes, listings, assignments and the truth sidecar.
    Simulate,
    /// Fit a surrogate model on an event log.
    Train(TrainCmd),
    /// Score page-views and aggregate utilities per unit.
    Attribute(AttributeCmd),
    /// Percent lifts, variance ratios, alignment and grid readouts.
    Evaluate(EvaluateCmd),
    /// Team-draft interleaving of two rankers with credit under each policy.
    Interleave(InterleaveCmd),
    /// Run the whole chain into subdirectories of --out.
    ReportAll(ReportCmd),
}

#[derive(Args, Debug, Clone)]
struct GbdtFlags {
    #[arg(long, default_value_t = GbdtConfig::default().num_trees)]
    trees: usize,
    #[arg(long, default_value_t = GbdtConfig::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = GbdtConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = GbdtConfig::default().min_samples_leaf)]
    min_samples_leaf: usize,
    /// Probability of dropping each earlier tree when fitting a new one.
    #[arg(long, default_value_t = GbdtConfig::default().dropout_rate)]
    tree_dropout: f64,
    #[arg(long, default_value_t = GbdtConfig::default().subsample)]
    subsample: f64,
    #[arg(long, default_value_t = GbdtConfig::default().lambda)]
    lambda: f64,
}

impl GbdtFlags {
    fn config(&self) -> GbdtConfig {
        GbdtConfig {
            num_trees: self.trees,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            min_samples_leaf: self.min_samples_leaf,
            dropout_rate: self.tree_dropout,
            subsample: self.subsample,
            lambda: self.lambda,
            seed: 0,
        }
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long)]
    listings: PathBuf,
    /// gbdt or logistic.
    #[arg(long, default_value = "gbdt")]
    learner: LearnerKind,
    #[command(flatten)]
    gbdt: GbdtFlags,
    /// L2 penalty of the logistic learner.
    #[arg(long, default_value_t = LogisticConfig::default().l2)]
    l2: f64,
    /// Fraction of users held out for the report.
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 14)]
    label_horizon_days: i64,
}

#[derive(Args, Debug)]
struct AttributeCmd {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    listings: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Adds outcome metrics (booking, booker, booked_click, page_views).
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Cap threshold; repeat for several capped columns.
    #[arg(long = "cap")]
    caps: Vec<f64>,
    /// user, search or listing.
    #[arg(long, default_value = "user")]
    unit: UnitKind,
    /// Assignment file whose units form the metric roster.
    #[arg(long)]
    roster: Option<PathBuf>,
    /// Score events that overlap the model's training window.
    #[arg(long)]
    allow_overlap: bool,
    /// Fail when any pair's utilities do not sum to its final value.
    #[arg(long)]
    audit_telescoping: bool,
}

#[derive(Args, Debug)]
struct EvaluateCmd {
    /// Metric CSV; repeatable.
    #[arg(long = "metrics", required = true)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long, default_value = "booking")]
    baseline: String,
    #[arg(long, default_value = "utility")]
    surrogate: String,
    #[arg(long, default_value = "treatment")]
    treatment: String,
    #[arg(long, default_value = "control")]
    control: String,
    #[arg(long, default_value = "current")]
    experiment_id: String,
    /// Earlier experiment summaries for the alignment readout.
    #[arg(long)]
    prior_lifts: Option<PathBuf>,
    /// Grid readout over the --config alphas at a fixed beta.
    #[arg(long)]
    grid: bool,
    #[arg(long, default_value_t = 0)]
    beta_index: usize,
}

#[derive(Args, Debug)]
struct InterleaveCmd {
    /// Required by the utility_delta policy.
    #[arg(long)]
    model: Option<PathBuf>,
    /// "alpha,beta".
    #[arg(long, value_parser = parse_ranker, default_value = "0,0")]
    ranker_a: Ranker,
    #[arg(long, value_parser = parse_ranker, default_value = "0,0")]
    ranker_b: Ranker,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    /// utility_delta, booked_all_clicks or booked_first_click; repeatable. Defaults to all three.
    #[arg(long = "policy")]
    policies: Vec<CreditPolicy>,
    /// Credit utility of every view of a drafted listing, not only clicks from the list.
    #[arg(long)]
    all_views: bool,
    #[arg(long)]
    allow_overlap: bool,
}

#[derive(Args, Debug)]
struct ReportCmd {
    #[command(flatten)]
    gbdt: GbdtFlags,
    #[arg(long = "cap", default_values_t = [1.0, 0.1])]
    caps: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    queries: usize,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let out = cli.out.clone();
    match cli.command {
        Command::Simulate => {
            pipeline::simulate(&SimulateArgs {
                config: cli.config,
                seed: cli.seed,
                out,
            })?;
        }
        Command::Train(c) => {
            let mut args = TrainArgs::new(c.events, c.outcomes, c.listings, out);
            args.learner = c.learner;
            args.gbdt = c.gbdt.config();
            args.logistic = LogisticConfig {
                l2: c.l2,
                ..LogisticConfig::default()
            };
            args.holdout = c.holdout;
            args.label_horizon_days = c.label_horizon_days;
            args.seed = cli.seed.unwrap_or(0);
            args.force = cli.force;
            pipeline::train(&args)?;
        }
        Command::Attribute(c) => {
            let mut args = AttributeArgs::new(c.events, c.listings, c.model, out);
            args.outcomes = c.outcomes;
            args.caps = c.caps;
            args.unit = c.unit;
            args.roster = c.roster;
            args.allow_overlap = c.allow_overlap;
            args.audit_telescoping = c.audit_telescoping;
            args.force = cli.force;
            pipeline::attribute(&args)?;
        }
        Command::Evaluate(c) => {
            let mut args = EvaluateArgs::new(c.metrics, c.assignments, out);
            args.baseline = c.baseline;
            args.surrogate = c.surrogate;
            args.treatment = c.treatment;
            args.control = c.control;
            args.experiment_id = c.experiment_id;
            args.prior_lifts = c.prior_lifts;
            args.force = cli.force;
            if c.grid {
                let cfg = load_config(cli.config.as_deref(), None)?;
                args.grid = Some(GridSpec {
                    alphas: cfg.grid_alphas,
                    betas: cfg.grid_betas,
                    beta_index: c.beta_index,
                });
            }
            pipeline::evaluate(&args)?;
        }
        Command::Interleave(c) => {
            let policies = if c.policies.is_empty() {
                CreditPolicy::ALL.to_vec()
            } else {
                c.policies
            };
            pipeline::interleave(&InterleaveArgs {
                config: cli.config,
                seed: cli.seed,
                model: c.model,
                ranker_a: c.ranker_a,
                ranker_b: c.ranker_b,
                queries: c.queries,
                policies,
                all_views: c.all_views,
                allow_overlap: c.allow_overlap,
                out,
                force: cli.force,
            })?;
        }
        Command::ReportAll(c) => {
            let mut args = ReportArgs::new(cli.config, out);
            args.seed = cli.seed;
            args.gbdt = c.gbdt.config();
            args.caps = c.caps;
            args.queries = c.queries;
            args.force = cli.force;
            pipeline::report_all(&args)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
