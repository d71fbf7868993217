//! Seeded synthetic data in the MovieLens layout, for tests and for
//! exercising the harness without the real dataset.

use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, LoadStats, MlMovie, MlRating, MlUser};
use crate::enrichment::{deterministic_enrich, RawItem, SemanticProfile};
use crate::profiling::Gender;
use crate::vark::VarkVector;

pub const GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];
const AGES: [u8; 7] = [1, 18, 25, 35, 45, 50, 56];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub movies: usize,
    /// Ratings per user are drawn from `min_ratings..=max_ratings`.
    pub min_ratings: usize,
    pub max_ratings: usize,
    /// Zipf exponent of item popularity.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 600,
            movies: 400,
            min_ratings: 20,
            max_ratings: 80,
            popularity_skew: 0.9,
            seed: 7,
        }
    }
}

fn random_user(id: u32, rng: &mut ChaCha8Rng) -> MlUser {
    MlUser {
        id,
        gender: if rng.random_bool(0.5) {
            Gender::Male
        } else {
            Gender::Female
        },
        age: AGES[rng.random_range(0..AGES.len())],
        occupation: rng.random_range(0..21),
        zip: format!("{:05}", rng.random_range(0..100_000)),
    }
}

/// Users with genre tastes rate movies drawn by popularity times taste.
pub fn synthetic_movielens(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let movies: Vec<MlMovie> = (1..=cfg.movies as u32)
        .map(|id| {
            let n = rng.random_range(1..=3);
            let mut genres: Vec<String> = (0..n)
                .map(|_| GENRES[rng.random_range(0..GENRES.len())].to_string())
                .collect();
            genres.sort();
            genres.dedup();
            let year = rng.random_range(1930..=2000);
            MlMovie {
                id,
                title: format!("Synthetic Film {id} ({year})"),
                year,
                genres,
            }
        })
        .collect();
    // Popularity rank is a random permutation of the ids.
    let mut pop: Vec<f64> = (0..cfg.movies)
        .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_skew))
        .collect();
    rand::seq::SliceRandom::shuffle(pop.as_mut_slice(), &mut rng);
    let quality: Vec<f64> = (0..cfg.movies).map(|_| rng.random_range(2.6..4.4)).collect();
    let noise = Normal::new(0.0, 0.8).expect("valid normal");
    let taste_prior = Dirichlet::new([0.5; GENRES.len()]).expect("valid prior");

    let mut users = Vec::with_capacity(cfg.users);
    let mut ratings = Vec::new();
    let mut ts: i64 = 956_703_932;
    for uid in 1..=cfg.users as u32 {
        let user = random_user(uid, &mut rng);
        let taste: [f64; GENRES.len()] = taste_prior.sample(&mut rng);
        let affinity: Vec<f64> = movies
            .iter()
            .map(|m| {
                m.genres
                    .iter()
                    .filter_map(|g| GENRES.iter().position(|x| x == g))
                    .map(|i| taste[i])
                    .sum::<f64>()
                    / m.genres.len().max(1) as f64
            })
            .collect();
        let n = rng
            .random_range(cfg.min_ratings..=cfg.max_ratings.max(cfg.min_ratings))
            .min(cfg.movies);
        let picks =
            sample_weighted(&mut rng, cfg.movies, |i| pop[i] * (0.05 + affinity[i]), n).expect("positive weights");
        let mut picked: Vec<usize> = picks.into_iter().collect();
        picked.sort_unstable();
        for i in picked {
            let score = quality[i] + 6.0 * (affinity[i] - 1.0 / GENRES.len() as f64) + noise.sample(&mut rng);
            ts += rng.random_range(1..600);
            ratings.push(MlRating {
                user: uid,
                movie: movies[i].id,
                rating: score.round().clamp(1.0, 5.0) as u8,
                timestamp: ts,
            });
        }
        users.push(user);
    }
    Dataset {
        users,
        movies,
        ratings,
        stats: LoadStats::default(),
    }
}

/// A catalogue whose items differ only in learning-style alignment.
///
/// Every item shares title, genre, entities and complexity, so semantic,
/// entity and text scores tie and only the VARK match can separate items.
pub struct VarkOnlyFixture {
    pub dataset: Dataset,
    pub items: Vec<(RawItem, SemanticProfile)>,
}

pub fn vark_only_fixture(users: usize, items: usize, seed: u64) -> VarkOnlyFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let align = Dirichlet::new([1.0; 4]).expect("valid prior");
    let mut catalogue = Vec::with_capacity(items);
    let mut movies = Vec::with_capacity(items);
    for id in 1..=items as u32 {
        let raw = RawItem {
            item_id: id.to_string(),
            title: "Untitled".into(),
            genres: vec!["Drama".into()],
            year: 0,
            description: None,
        };
        let mut profile = deterministic_enrich(&raw);
        let w: [f64; 4] = align.sample(&mut rng);
        profile.vark_alignment = VarkVector::from_weights_or_uniform(w);
        profile.complexity = 3;
        movies.push(MlMovie {
            id,
            title: raw.title.clone(),
            year: 0,
            genres: raw.genres.clone(),
        });
        catalogue.push((raw, profile));
    }
    // Ratings follow each user's hidden learning style, with a popularity skew.
    let taste = Dirichlet::new([1.0; 4]).expect("valid prior");
    let pop: Vec<f64> = (0..items).map(|r| 1.0 / ((r + 1) as f64)).collect();
    let mut us = Vec::with_capacity(users);
    let mut ratings = Vec::new();
    for uid in 1..=users as u32 {
        us.push(random_user(uid, &mut rng));
        let t = VarkVector::from_weights_or_uniform(taste.sample(&mut rng));
        let n = 10.min(items);
        let picks = sample_weighted(&mut rng, items, |i| pop[i], n).expect("positive weights");
        for i in picks {
            let fit = catalogue[i].1.vark_alignment.dot(&t);
            let rating = (1.0 + 8.0 * fit + rng.random_range(-0.5..0.5)).round().clamp(1.0, 5.0) as u8;
            ratings.push(MlRating {
                user: uid,
                movie: i as u32 + 1,
                rating,
                timestamp: 0,
            });
        }
        // Guarantee one relevant item so no cold user is excluded.
        let best = (0..items)
            .max_by(|a, b| {
                catalogue[*a]
                    .1
                    .vark_alignment
                    .dot(&t)
                    .total_cmp(&catalogue[*b].1.vark_alignment.dot(&t))
            })
            .expect("non-empty catalogue");
        ratings.retain(|r| !(r.user == uid && r.movie == best as u32 + 1));
        ratings.push(MlRating {
            user: uid,
            movie: best as u32 + 1,
            rating: 5,
            timestamp: 0,
        });
    }
    VarkOnlyFixture {
        dataset: Dataset {
            users: us,
            movies,
            ratings,
            stats: LoadStats::default(),
        },
        items: catalogue,
    }
}
