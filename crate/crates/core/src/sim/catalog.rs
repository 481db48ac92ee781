use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};

use super::config::SimConfig;
use super::truth::{static_features, TruthModel};
use crate::journey::{ListingAttributes, TripContext};
use crate::rng::{stream, Domain};

/// Listing attributes plus the per-listing quantities rankers and the truth use.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub listings: Vec<ListingAttributes>,
    /// Listing-attribute part of the intent log-odds, standardized across the catalog.
    pub(crate) quality_z: Vec<f64>,
    pub(crate) price_z: Vec<f64>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        xs.iter().map(|x| (x - m) / sd).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

pub(crate) fn listing_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("l{:0width$}", i + 1)
}

impl Catalog {
    pub fn generate(cfg: &SimConfig, truth: &TruthModel) -> Self {
        let mut rng = stream(cfg.listing_seed(), Domain::Listings, 0);
        let price = LogNormal::new(120f64.ln(), 0.5f64).expect("valid lognormal");
        let score = Normal::new(4.5f64, 0.3).expect("valid normal");
        let reviews = Poisson::new(40.0).expect("valid poisson");
        let bookings = Poisson::new(20.0).expect("valid poisson");
        let mut listings = Vec::with_capacity(cfg.n_listings);
        for i in 0..cfg.n_listings {
            listings.push(ListingAttributes {
                listing_id: listing_id(i, cfg.n_listings),
                price_per_night: round2(price.sample(&mut rng)).max(10.0),
                review_score: round2(score.sample(&mut rng).clamp(0.0, 5.0)),
                review_count: reviews.sample(&mut rng) as u32,
                availability_days: rng.random_range(0..=365),
                past_bookings: bookings.sample(&mut rng) as u32,
                location_bucket: rng.random_range(0..10),
            });
        }
        let listing_logit: Vec<f64> = listings
            .iter()
            .map(|l| truth.linear(&static_features(l, &TripContext::default())))
            .collect();
        let prices: Vec<f64> = listings.iter().map(|l| l.price_per_night).collect();
        Self {
            quality_z: standardize(&listing_logit),
            price_z: standardize(&prices),
            listings,
        }
    }

    pub fn len(&self) -> usize {
        self.listings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.listings.is_empty()
    }
}
