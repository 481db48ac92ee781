use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::journey::{slot, FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How traffic is split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Users are randomized between control and treatment; every search uses (`alpha`, `beta`).
    UserAb,
    /// Searches are randomized over the (`grid_alphas` x `grid_betas`) ranker grid; no user-level treatment.
    SearchGrid,
}

/// Simulator parameters. Every field has a default; TOML files override
/// any subset. `propensity_weights` is a table keyed by feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub design: Design,
    /// Seed of the listing catalog; defaults to `seed`.
    pub listing_seed: Option<u64>,
    pub n_users: usize,
    /// Users simulated in the period before `start_ms`, for model training.
    pub n_pretrain_users: usize,
    pub n_listings: usize,
    pub start_ms: i64,
    /// Users arrive uniformly over this many days.
    pub horizon_days: i64,
    /// Searches of one user spread over at most this many days.
    pub session_days: f64,
    pub candidates_per_user: usize,
    pub display_k: usize,
    /// Searches per user are `1 + Poisson(searches_mean)`.
    pub searches_mean: f64,
    /// Click probability at the top position.
    pub ctr_top: f64,
    /// Multiplicative click-probability decay per position.
    pub ctr_decay: f64,
    pub quality_weight: f64,
    pub relevance_sd: f64,
    pub search_noise_sd: f64,
    /// Probability of revisiting a pair after a view.
    pub revisit_base: f64,
    /// Added to the revisit probability once the pair has any review, amenity or calendar engagement.
    pub revisit_deep: f64,
    pub revisit_mean_hours: f64,
    pub max_views_per_pair: usize,
    pub dates_present_prob: f64,
    pub guests_present_prob: f64,
    /// Low-intent Poisson means per view.
    pub rate_photos: f64,
    pub rate_reviews: f64,
    pub rate_amenities: f64,
    pub rate_calendar: f64,
    /// Low-intent per-view probabilities.
    pub p_host: f64,
    pub p_reserve: f64,
    /// Low-intent mean dwell per view, seconds.
    pub mean_dwell_s: f64,
    /// Multiplier of review, amenity and calendar rates at view 1, 2, ...; the last entry repeats.
    pub deep_schedule: Vec<f64>,
    pub propensity_intercept: f64,
    pub propensity_weights: BTreeMap<String, f64>,
    pub exogenous_dropout: f64,
    /// Treatment-arm multiplier on click-through rates.
    pub treatment_effect: f64,
    pub treatment_share: f64,
    /// Ranker used outside grid cells.
    pub alpha: f64,
    pub beta: f64,
    pub grid_alphas: Vec<f64>,
    pub grid_betas: Vec<f64>,
    /// Share of searches routed to each grid cell; the rest use (`alpha`, `beta`).
    pub grid_cell_share: f64,
    /// Users simulated for the true-effect oracle in the truth sidecar.
    pub truth_mc_users: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let weights = [
            ("photos_viewed", 0.12),
            ("reviews_viewed", 0.45),
            ("amenities_viewed", 0.35),
            ("calendar_checked", 0.8),
            ("host_contacted", 1.8),
            ("reserve_clicked", 2.5),
            ("dwell_s", 0.008),
            ("price_per_night", -0.004),
            ("review_score", 1.0),
            ("review_count", 0.002),
            ("past_bookings", 0.004),
            ("num_guests", -0.05),
            ("trip_dates_present", 0.6),
            ("stay_nights", 0.03),
        ];
        Self {
            seed: 7,
            design: Design::UserAb,
            listing_seed: None,
            n_users: 20_000,
            n_pretrain_users: 0,
            n_listings: 400,
            start_ms: 1_640_995_200_000,
            horizon_days: 28,
            session_days: 10.0,
            candidates_per_user: 30,
            display_k: 10,
            searches_mean: 2.0,
            ctr_top: 0.3,
            ctr_decay: 0.8,
            quality_weight: 1.5,
            relevance_sd: 1.0,
            search_noise_sd: 0.5,
            revisit_base: 0.25,
            revisit_deep: 0.35,
            revisit_mean_hours: 20.0,
            max_views_per_pair: 25,
            dates_present_prob: 0.7,
            guests_present_prob: 0.9,
            rate_photos: 3.0,
            rate_reviews: 1.0,
            rate_amenities: 0.8,
            rate_calendar: 0.4,
            p_host: 0.01,
            p_reserve: 0.004,
            mean_dwell_s: 45.0,
            deep_schedule: vec![0.1, 0.4, 1.0],
            propensity_intercept: -7.3,
            propensity_weights: weights.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            exogenous_dropout: 0.3,
            treatment_effect: 1.1,
            treatment_share: 0.5,
            alpha: 0.0,
            beta: 0.0,
            grid_alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            grid_betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            grid_cell_share: 0.04,
            truth_mc_users: 200_000,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn listing_seed(&self) -> u64 {
        self.listing_seed.unwrap_or(self.seed)
    }

    /// Weights in feature-slot order.
    pub fn weight_vector(&self) -> [f64; FEATURE_COUNT] {
        let mut w = [0.0; FEATURE_COUNT];
        for (name, v) in &self.propensity_weights {
            if let Some(i) = FEATURE_NAMES.iter().position(|n| n == name) {
                w[i] = *v;
            }
        }
        w
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        for name in self.propensity_weights.keys() {
            if !FEATURE_NAMES.contains(&name.as_str()) {
                return fail(format!("unknown propensity weight {name:?}"));
            }
        }
        let w = self.weight_vector();
        if w.iter().any(|v| !v.is_finite()) || !self.propensity_intercept.is_finite() {
            return fail("propensity weights must be finite".into());
        }
        for s in [slot::VIEW_COUNT, slot::LEAD_TIME] {
            if w[s] != 0.0 {
                return fail(format!(
                    "propensity weight on {} must be 0: it is determined by the engagement model",
                    FEATURE_NAMES[s]
                ));
            }
        }
        if w[slot::DWELL] >= 1.0 / self.mean_dwell_s {
            return fail(format!(
                "dwell_s weight must be < 1 / mean_dwell_s = {}",
                1.0 / self.mean_dwell_s
            ));
        }
        let positive = [
            ("rate_photos", self.rate_photos),
            ("rate_reviews", self.rate_reviews),
            ("rate_amenities", self.rate_amenities),
            ("rate_calendar", self.rate_calendar),
            ("mean_dwell_s", self.mean_dwell_s),
            ("treatment_effect", self.treatment_effect),
            ("revisit_mean_hours", self.revisit_mean_hours),
            ("session_days", self.session_days),
            ("ctr_decay", self.ctr_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be > 0"));
            }
        }
        if self.deep_schedule.is_empty() || self.deep_schedule.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return fail("deep_schedule must be a nonempty list of positive multipliers".into());
        }
        let open_unit = [
            ("p_host", self.p_host),
            ("p_reserve", self.p_reserve),
            ("ctr_top", self.ctr_top),
        ];
        for (name, v) in open_unit {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{name} must be in (0, 1)"));
            }
        }
        let unit = [
            ("exogenous_dropout", self.exogenous_dropout),
            ("treatment_share", self.treatment_share),
            ("revisit_base", self.revisit_base),
            ("revisit_deep", self.revisit_deep),
            ("dates_present_prob", self.dates_present_prob),
            ("guests_present_prob", self.guests_present_prob),
            ("grid_cell_share", self.grid_cell_share),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1]"));
            }
        }
        if self.searches_mean < 0.0 || self.relevance_sd < 0.0 || self.search_noise_sd < 0.0 {
            return fail("searches_mean, relevance_sd and search_noise_sd must be >= 0".into());
        }
        if self.display_k == 0
            || self.display_k > self.candidates_per_user
            || self.candidates_per_user > self.n_listings
        {
            return fail("need 1 <= display_k <= candidates_per_user <= n_listings".into());
        }
        if self.candidates_per_user >= 1 << 16 {
            return fail("candidates_per_user must be < 65536".into());
        }
        if self.max_views_per_pair == 0 {
            return fail("max_views_per_pair must be >= 1".into());
        }
        if self.horizon_days < 1 {
            return fail("horizon_days must be >= 1".into());
        }
        if self.session_days > 12.0 {
            return fail(
                "session_days must be <= 12 so every pair fits in one lookback window".into(),
            );
        }
        if self.start_ms <= 40 * crate::DAY_MS {
            return fail("start_ms leaves no room for the pretraining period".into());
        }
        if self.grid_alphas.is_empty() || self.grid_betas.is_empty() {
            return fail("grid sizes must be >= 1".into());
        }
        let cells = (self.grid_alphas.len() * self.grid_betas.len()) as f64;
        if cells * self.grid_cell_share > 1.0 + 1e-9 {
            return fail("grid cell shares sum to more than 1".into());
        }
        Ok(())
    }
}
