//! Causal-surrogate value functions for episodic conversion outcomes.
//!
//! The crate learns `V(S) = E[Y | S]` from per-(user, listing) interaction
//! histories, attributes each page-view the increment `V_t - V_{t-1}`
//! (with `V_0 = 0`), and uses the resulting utility metrics for A/B lift
//! estimation, search-level readouts and interleaving credit assignment.
//!
//! Module map:
//!
//! - [`journey`]: event ingestion, per-pair timelines, windowed cumulative
//!   states and training-set construction.
//! - [`learner`]: gradient-boosted trees with tree dropout, a logistic
//!   baseline, model files and calibration reports.
//! - [`attribution`]: value trajectories, listing-view utilities and
//!   capped unit-level aggregates.
//! - [`stats`]: percent lift, variance-ratio tables, alignment analysis,
//!   trend tests, behavioral curves and SVG plots.
//! - [`interleaving`]: team-draft interleaving and credit policies.
//! - [`sim`]: a synthetic marketplace whose booking probability is a known
//!   function of the accumulated state.
//! - [`pipeline`]: file-based subcommands used by the CLI.

pub mod attribution;
pub mod interleaving;
pub mod journey;
pub mod learner;
pub mod pipeline;
pub mod sim;
pub mod stats;

mod rng;

pub use attribution::{AggregatedUtility, UnitKind, UtilityRecord};
pub use journey::{
    EngagementSignals, EpisodeState, FeatureVector, InteractionEvent, JourneyStore,
    ListingAttributes, TripContext,
};
pub use learner::{GbdtConfig, ModelReport, SurrogateModel};
pub use stats::LiftEstimate;

/// Milliseconds in one day.
pub const DAY_MS: i64 = 86_400_000;
