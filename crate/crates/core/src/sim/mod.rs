//! Synthetic marketplace with a known booking probability.
//!
//! Every (user, listing) pair draws a latent intent type when the user
//! first clicks the listing: high intent with probability
//! `sigmoid(prior)`, where `prior` is a linear function of the listing and
//! trip slots of the feature vector. Engagement on each view is drawn from
//! type-specific distributions whose log-likelihood ratio is linear in the
//! engagement counts, with the configured propensity weights as slopes.
//! Revisits depend only on what has been observed. The exact posterior is
//! therefore a function of the cumulative feature vector:
//!
//! `P(Y = 1 | S) = (1 - dropout) * sigmoid(w . phi(S) + C(view_count))`
//!
//! where `C` is the accumulated log-normalizer of the engagement
//! likelihoods (see [`TruthModel`]). A booking happens iff the pair is high
//! intent and survives an independent exogenous dropout draw.
//!
//! Treatment arms and rankers act only through which listings get shown and
//! clicked; given the state, booking odds do not depend on the arm.

mod catalog;
mod config;
mod engine;
mod experiments;
mod truth;

pub use catalog::Catalog;
pub use config::{Design, SimConfig, SimError};
pub use engine::{Arm, PairTruth, Ranker, SearchRecord};
pub use experiments::{
    grid_cells, run_grid, simulate, simulate_interleaving, simulate_pretrain, true_ate,
    write_outputs, AteEstimate, GridCell, GroundTruth, InterleavingRun, SimOutput, MIN_MC_USERS,
};
pub use truth::TruthModel;
