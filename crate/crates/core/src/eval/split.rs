//! Cold-start user split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, MlRating};
use super::EvalError;

pub const DEFAULT_COLD_RATIO: f64 = 0.2;
pub const DEFAULT_RELEVANCE_THRESHOLD: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdSplit {
    pub seed: u64,
    pub ratio: f64,
    pub relevance_threshold: u8,
    /// Sorted.
    pub train_users: Vec<u32>,
    /// Cold users with at least one relevant item, sorted.
    pub cold_users: Vec<u32>,
    /// Cold users dropped because they rated nothing at or above the threshold.
    pub excluded_users: Vec<u32>,
    /// Held-out relevant set per cold user.
    pub relevant: BTreeMap<u32, BTreeSet<u32>>,
    /// Items every cold user ranks: the whole movie catalogue, sorted.
    pub universe: Vec<u32>,
}

impl ColdSplit {
    pub fn is_train(&self, user: u32) -> bool {
        self.train_users.binary_search(&user).is_ok()
    }

    /// Ratings by training users; cold users' ratings never leave the split.
    pub fn train_ratings<'a>(&'a self, ds: &'a Dataset) -> impl Iterator<Item = &'a MlRating> + 'a {
        ds.ratings.iter().filter(move |r| self.is_train(r.user))
    }
}

/// Seeded shuffle of user ids; the first `round(ratio·n)` become cold users.
pub fn cold_split(ds: &Dataset, ratio: f64, relevance_threshold: u8, seed: u64) -> Result<ColdSplit, EvalError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(EvalError::InvalidArgument(format!("ratio {ratio} outside (0, 1)")));
    }
    let mut ids: Vec<u32> = ds.users.iter().map(|u| u.id).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_cold = (ratio * ids.len() as f64).round() as usize;
    let cold: BTreeSet<u32> = ids[..n_cold].iter().copied().collect();
    let mut train_users: Vec<u32> = ids[n_cold..].to_vec();
    train_users.sort_unstable();

    let mut relevant: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for r in &ds.ratings {
        if r.rating >= relevance_threshold && cold.contains(&r.user) {
            relevant.entry(r.user).or_default().insert(r.movie);
        }
    }
    let (cold_users, excluded_users): (Vec<u32>, Vec<u32>) = cold.iter().partition(|u| relevant.contains_key(u));
    if !excluded_users.is_empty() {
        tracing::info!(
            excluded = excluded_users.len(),
            "cold users without relevant items excluded"
        );
    }
    Ok(ColdSplit {
        seed,
        ratio,
        relevance_threshold,
        train_users,
        cold_users,
        excluded_users,
        relevant,
        universe: ds.movies.iter().map(|m| m.id).collect(),
    })
}
