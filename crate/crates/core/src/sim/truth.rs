use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::journey::{
    feature_vector, slot, EngagementSignals, EpisodeState, ListingAttributes, TripContext,
    FEATURE_COUNT,
};
use crate::learner::loss::{logit, sigmoid};

/// Count signal with a Poisson likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonSignal {
    pub slot: usize,
    /// Low-intent mean per view.
    pub rate: f64,
    /// Whether the mean follows the per-view depth schedule.
    pub scheduled: bool,
}

/// 0/1 signal with a Bernoulli likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagSignal {
    pub slot: usize,
    /// Low-intent probability per view.
    pub p: f64,
}

/// The simulator's exact booking probability given an encoded state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub dropout: f64,
    pub poisson: Vec<PoissonSignal>,
    pub flags: Vec<FlagSignal>,
    /// Low-intent mean dwell per view, seconds.
    pub dwell_mean: f64,
    pub schedule: Vec<f64>,
}

impl TruthModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            intercept: cfg.propensity_intercept,
            weights: cfg.weight_vector().to_vec(),
            dropout: cfg.exogenous_dropout,
            poisson: vec![
                PoissonSignal {
                    slot: slot::PHOTOS,
                    rate: cfg.rate_photos,
                    scheduled: false,
                },
                PoissonSignal {
                    slot: slot::REVIEWS,
                    rate: cfg.rate_reviews,
                    scheduled: true,
                },
                PoissonSignal {
                    slot: slot::AMENITIES,
                    rate: cfg.rate_amenities,
                    scheduled: true,
                },
                PoissonSignal {
                    slot: slot::CALENDAR,
                    rate: cfg.rate_calendar,
                    scheduled: true,
                },
            ],
            flags: vec![
                FlagSignal {
                    slot: slot::HOST,
                    p: cfg.p_host,
                },
                FlagSignal {
                    slot: slot::RESERVE,
                    p: cfg.p_reserve,
                },
            ],
            dwell_mean: cfg.mean_dwell_s,
            schedule: cfg.deep_schedule.clone(),
        }
    }

    /// Depth multiplier of the `t`-th view (1-based).
    pub fn depth(&self, t: usize) -> f64 {
        self.schedule[(t.max(1) - 1).min(self.schedule.len() - 1)]
    }

    /// Per-view mean of a Poisson signal at view `t` for either intent type.
    pub fn poisson_mean(&self, s: &PoissonSignal, t: usize, high: bool) -> f64 {
        let base = if s.scheduled {
            s.rate * self.depth(t)
        } else {
            s.rate
        };
        if high {
            base * self.weights[s.slot].exp()
        } else {
            base
        }
    }

    pub fn flag_probability(&self, f: &FlagSignal, high: bool) -> f64 {
        if high {
            sigmoid(logit(f.p) + self.weights[f.slot])
        } else {
            f.p
        }
    }

    pub fn dwell_mean(&self, high: bool) -> f64 {
        if high {
            1.0 / (1.0 / self.dwell_mean - self.weights[slot::DWELL])
        } else {
            self.dwell_mean
        }
    }

    /// Log-likelihood-ratio offset accumulated by `views` views with no
    /// engagement at all.
    pub fn compensator(&self, views: usize) -> f64 {
        let mut c = 0.0;
        for s in &self.poisson {
            let per_unit = s.rate * (self.weights[s.slot].exp() - 1.0);
            let exposure: f64 = if s.scheduled {
                (1..=views).map(|t| self.depth(t)).sum()
            } else {
                views as f64
            };
            c -= per_unit * exposure;
        }
        for f in &self.flags {
            c += views as f64 * ((1.0 - self.flag_probability(f, true)) / (1.0 - f.p)).ln();
        }
        c += views as f64 * (self.dwell_mean / self.dwell_mean(true)).ln();
        c
    }

    /// `w . x` without the intercept.
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    /// Posterior log-odds of high intent.
    pub fn log_odds(&self, x: &[f64]) -> f64 {
        let views = x[slot::VIEW_COUNT].max(0.0) as usize;
        self.intercept + self.linear(x) + self.compensator(views)
    }

    /// `P(high intent | S)`.
    pub fn intent_probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.log_odds(x))
    }

    /// `P(Y = 1 | S)`.
    pub fn probability(&self, x: &[f64]) -> f64 {
        (1.0 - self.dropout) * self.intent_probability(x)
    }
}

/// Encoded state before any view: listing and trip slots only.
pub fn static_features(listing: &ListingAttributes, trip: &TripContext) -> [f64; FEATURE_COUNT] {
    let state = EpisodeState {
        user_id: String::new(),
        listing_id: String::new(),
        step_index: 0,
        view_position: 0,
        window_start_ms: 0,
        window_end_ms: 0,
        engagement: EngagementSignals::default(),
        view_count: 0,
        listing: Some(listing.clone()),
        trip: trip.clone(),
        lead_time_days: None,
        label: None,
    };
    feature_vector(&state).0
}
